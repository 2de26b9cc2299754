#include "ladder/keyvalue.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ladder/errors.hpp"

namespace ladder {
namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t begin = s.find_first_not_of(ws);
  if (begin == std::string::npos) {
    return "";
  }
  const std::size_t end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw FormatError("option '" + key + "': cannot parse '" + value + "' as " + expected);
}

}  // namespace

KeyValueMap parse_key_values(const std::string& text, const std::string& origin) {
  KeyValueMap map;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    map[key] = trim(line.substr(eq + 1));
  }
  return map;
}

KeyValueMap parse_key_value_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path);
}

double parse_double(const KeyValueMap& map, const std::string& key, double fallback) {
  const auto it = map.find(key);
  if (it == map.end()) {
    return fallback;
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0' || errno == ERANGE) {
    bad_value(key, it->second, "a number");
  }
  return v;
}

std::size_t parse_size(const KeyValueMap& map, const std::string& key, std::size_t fallback) {
  const auto it = map.find(key);
  if (it == map.end()) {
    return fallback;
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0' || errno == ERANGE ||
      it->second.find('-') != std::string::npos) {
    bad_value(key, it->second, "a nonnegative integer");
  }
  return static_cast<std::size_t>(v);
}

std::uint64_t parse_u64(const KeyValueMap& map, const std::string& key, std::uint64_t fallback) {
  const auto it = map.find(key);
  if (it == map.end()) {
    return fallback;
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0' || errno == ERANGE ||
      it->second.find('-') != std::string::npos) {
    bad_value(key, it->second, "a nonnegative integer");
  }
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const KeyValueMap& map, const std::string& key, bool fallback) {
  const auto it = map.find(key);
  if (it == map.end()) {
    return fallback;
  }
  if (it->second == "true" || it->second == "1") {
    return true;
  }
  if (it->second == "false" || it->second == "0") {
    return false;
  }
  bad_value(key, it->second, "a boolean (true/false/1/0)");
}

std::string parse_string(const KeyValueMap& map, const std::string& key,
                         const std::string& fallback) {
  const auto it = map.find(key);
  return it == map.end() ? fallback : it->second;
}

}  // namespace ladder
