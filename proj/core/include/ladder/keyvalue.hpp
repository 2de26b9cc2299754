#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ladder {

/// Flat key=value options, e.g. parsed from a config file. Keys are unique;
/// a later assignment overwrites an earlier one.
using KeyValueMap = std::map<std::string, std::string>;

/// Parses "key = value" lines. `#` starts a comment (whole line or
/// trailing); blank lines are skipped; whitespace around keys and values is
/// trimmed. A nonempty line without '=' or with an empty key raises
/// FormatError naming the line number. `origin` labels error messages
/// (usually the file path).
KeyValueMap parse_key_values(const std::string& text, const std::string& origin = "<config>");

/// parse_key_values over a file's contents; unreadable path → FormatError.
KeyValueMap parse_key_value_file(const std::string& path);

// Typed accessors for option values. Each parses the complete string or
// throws FormatError naming the key. parse_bool accepts true/false/1/0.
double parse_double(const KeyValueMap& map, const std::string& key, double fallback);
std::size_t parse_size(const KeyValueMap& map, const std::string& key, std::size_t fallback);
std::uint64_t parse_u64(const KeyValueMap& map, const std::string& key, std::uint64_t fallback);
bool parse_bool(const KeyValueMap& map, const std::string& key, bool fallback);
std::string parse_string(const KeyValueMap& map, const std::string& key,
                         const std::string& fallback);

}  // namespace ladder
