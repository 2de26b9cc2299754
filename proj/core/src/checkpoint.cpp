#include "ladder/checkpoint.hpp"

#include <bit>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ladder/errors.hpp"
#include "ladder/metrics.hpp"

namespace ladder {
namespace {

constexpr char kMagic[4] = {'L', 'D', 'D', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

/// Bounds-checked little-endian reader over the whole file image.
struct Reader {
  const std::string& bytes;
  std::size_t offset = 0;

  void need(std::size_t n, const char* what) const {
    if (offset + n > bytes.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(bytes.size()) +
                        ": needed " + std::to_string(n) + " bytes for " + what +
                        " at offset " + std::to_string(offset));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    offset += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    offset += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(offset, n);
    offset += n;
    return s;
  }
};

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out += (i ? "x" : "") + std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t stop = s.find('x', start);
    const std::string part = s.substr(start, stop == std::string::npos ? stop : stop - start);
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(part.c_str(), &end, 10);
    if (part.empty() || end == part.c_str() || *end != '\0' || errno == ERANGE) {
      throw FormatError("checkpoint header: bad tensor shape '" + s + "'");
    }
    dims.push_back(static_cast<std::size_t>(v));
    if (stop == std::string::npos) {
      break;
    }
    start = stop + 1;
  }
  return dims;
}

const std::string& required(const std::map<std::string, std::string>& map,
                            const std::string& key) {
  const auto it = map.find(key);
  if (it == map.end()) {
    throw FormatError("checkpoint header missing key '" + key + "'");
  }
  return it->second;
}

std::size_t to_size(const std::string& value, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || end == value.c_str() || *end != '\0' || errno == ERANGE ||
      value.find('-') != std::string::npos) {
    throw FormatError("checkpoint header: key '" + key + "': bad integer '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& value, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end == value.c_str() || *end != '\0' || errno == ERANGE) {
    throw FormatError("checkpoint header: key '" + key + "': bad number '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& value, const std::string& key) {
  if (value == "true") {
    return true;
  }
  if (value == "false") {
    return false;
  }
  throw FormatError("checkpoint header: key '" + key + "': bad boolean '" + value + "'");
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) {
    out.push_back(t);
  }
  return out;
}

void check_token(const std::string& token, const char* inventory) {
  if (token.empty() || token.find_first_of(" \t\n\r") != std::string::npos) {
    throw ContractError(std::string("save_checkpoint: ") + inventory + " token '" + token +
                        "' is empty or contains whitespace");
  }
}

std::string join_tokens(const std::vector<std::string>& tokens, const char* inventory) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    check_token(tokens[i], inventory);
    out += (i ? " " : "") + tokens[i];
  }
  return out;
}

}  // namespace

void save_checkpoint(const LadderModel& model, const std::vector<std::string>& vocab,
                     const std::vector<std::string>& labels, const std::string& path) {
  if (vocab.size() != model.vocab_size || labels.size() != model.n_classes) {
    throw ContractError("save_checkpoint: vocab/labels sizes (" + std::to_string(vocab.size()) +
                        "/" + std::to_string(labels.size()) + ") do not match the model (" +
                        std::to_string(model.vocab_size) + "/" +
                        std::to_string(model.n_classes) + ")");
  }
  const LadderConfig& cfg = model.config;
  const auto named = model.named_parameters();

  std::ostringstream header;
  header << "base_dim=" << cfg.base_dim << '\n'
         << "lifted_dim=" << cfg.lifted_dim << '\n'
         << "n_experts=" << cfg.n_experts << '\n'
         << "top_k=" << cfg.top_k << '\n'
         << "cot_steps=" << cfg.cot_steps << '\n'
         << "n_heads=" << cfg.n_heads << '\n'
         << "n_anchors=" << cfg.n_anchors << '\n'
         << "activation=" << to_string(cfg.activation) << '\n'
         << "use_cot=" << (cfg.use_cot ? "true" : "false") << '\n'
         << "use_moe=" << (cfg.use_moe ? "true" : "false") << '\n'
         << "use_dimmap=" << (cfg.use_dimmap ? "true" : "false") << '\n'
         << "lambda_drift=" << format_double(cfg.lambda_drift) << '\n'
         << "lambda_balance=" << format_double(cfg.lambda_balance) << '\n'
         << "seed=" << cfg.seed << '\n'
         << "vocab_size=" << model.vocab_size << '\n'
         << "n_classes=" << model.n_classes << '\n'
         << "vocab=" << join_tokens(vocab, "vocab") << '\n'
         << "labels=" << join_tokens(labels, "labels") << '\n';
  for (const auto& [name, tensor] : named) {
    header << "tensor=" << name << ' ' << shape_string(tensor.shape()) << '\n';
  }
  const std::string header_text = header.str();

  std::string blob;
  blob.append(kMagic, sizeof kMagic);
  put_u32(blob, kCheckpointVersion);
  put_u64(blob, header_text.size());
  blob += header_text;
  for (const auto& [name, tensor] : named) {
    (void)name;
    put_u64(blob, tensor.size());
    for (double v : tensor.data()) {
      put_f64(blob, v);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("save_checkpoint: cannot open '" + path + "' for writing");
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) {
    throw FormatError("save_checkpoint: write to '" + path + "' failed");
  }
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_checkpoint: cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  Reader r{bytes};

  const std::string magic = r.text(4, "magic");
  if (magic != std::string(kMagic, sizeof kMagic)) {
    throw FormatError("load_checkpoint: '" + path + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionError("load_checkpoint: version " + std::to_string(version) +
                       " not supported; this build reads version " +
                       std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = r.u64("header length");
  const std::string header_text = r.text(header_len, "header");

  std::map<std::string, std::string> map;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> manifest;
  std::istringstream header(header_text);
  std::string line;
  while (std::getline(header, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("checkpoint header: malformed line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "tensor") {
      const std::size_t space = value.rfind(' ');
      if (space == std::string::npos) {
        throw FormatError("checkpoint header: malformed tensor line '" + line + "'");
      }
      manifest.emplace_back(value.substr(0, space), parse_shape(value.substr(space + 1)));
    } else if (!map.emplace(key, value).second) {
      throw FormatError("checkpoint header: duplicate key '" + key + "'");
    }
  }

  LadderConfig cfg;
  cfg.base_dim = to_size(required(map, "base_dim"), "base_dim");
  cfg.lifted_dim = to_size(required(map, "lifted_dim"), "lifted_dim");
  cfg.n_experts = to_size(required(map, "n_experts"), "n_experts");
  cfg.top_k = to_size(required(map, "top_k"), "top_k");
  cfg.cot_steps = to_size(required(map, "cot_steps"), "cot_steps");
  cfg.n_heads = to_size(required(map, "n_heads"), "n_heads");
  cfg.n_anchors = to_size(required(map, "n_anchors"), "n_anchors");
  cfg.activation = activation_from_string(required(map, "activation"));
  cfg.use_cot = to_bool(required(map, "use_cot"), "use_cot");
  cfg.use_moe = to_bool(required(map, "use_moe"), "use_moe");
  cfg.use_dimmap = to_bool(required(map, "use_dimmap"), "use_dimmap");
  cfg.lambda_drift = to_double(required(map, "lambda_drift"), "lambda_drift");
  cfg.lambda_balance = to_double(required(map, "lambda_balance"), "lambda_balance");
  cfg.seed = to_size(required(map, "seed"), "seed");
  cfg.validate();

  const std::size_t vocab_size = to_size(required(map, "vocab_size"), "vocab_size");
  const std::size_t n_classes = to_size(required(map, "n_classes"), "n_classes");
  CheckpointData data;
  data.vocab = split_tokens(required(map, "vocab"));
  data.labels = split_tokens(required(map, "labels"));
  if (data.vocab.size() != vocab_size) {
    throw FormatError("checkpoint header: vocab lists " + std::to_string(data.vocab.size()) +
                      " tokens but vocab_size says " + std::to_string(vocab_size));
  }
  if (data.labels.size() != n_classes) {
    throw FormatError("checkpoint header: labels list " + std::to_string(data.labels.size()) +
                      " tokens but n_classes says " + std::to_string(n_classes));
  }

  data.model = LadderModel::init(cfg, vocab_size, n_classes);
  const auto named = data.model.named_parameters();
  if (named.size() != manifest.size()) {
    throw FormatError("checkpoint header: manifest has " + std::to_string(manifest.size()) +
                      " tensors, model expects " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != manifest[i].first) {
      throw FormatError("checkpoint header: tensor " + std::to_string(i) + " is '" +
                        manifest[i].first + "', model expects '" + named[i].first + "'");
    }
    if (named[i].second.shape() != manifest[i].second) {
      throw FormatError("checkpoint header: tensor '" + manifest[i].first + "' has shape " +
                        shape_string(manifest[i].second) + ", model expects " +
                        shape_string(named[i].second.shape()));
    }
  }

  for (auto& [name, tensor] : named) {
    const std::uint64_t count = r.u64("element count");
    if (count != tensor.size()) {
      throw FormatError("checkpoint payload: tensor '" + name + "' carries " +
                        std::to_string(count) + " elements, header promised " +
                        std::to_string(tensor.size()));
    }
    Tensor t = tensor;
    auto dst = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = r.f64("tensor data");
    }
  }
  if (r.offset != bytes.size()) {
    throw FormatError("load_checkpoint: " + std::to_string(bytes.size() - r.offset) +
                      " trailing bytes after the payload");
  }
  return data;
}

}  // namespace ladder
