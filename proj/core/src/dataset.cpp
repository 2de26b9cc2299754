#include "ladder/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>

#include "ladder/errors.hpp"
#include "ladder/rng.hpp"

namespace ladder {
namespace {

bool is_separator(char c) {
  const unsigned char u = static_cast<unsigned char>(c);
  // Multi-byte UTF-8 sequences are token material; only ASCII whitespace and
  // punctuation split.
  return u < 128 && (std::isspace(u) != 0 || std::ispunct(u) != 0);
}

std::string lowercase_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u < 128) {
      c = static_cast<char>(std::tolower(u));
    }
  }
  return out;
}

std::string indexed_name(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", stem, i);
  return buf;
}

/// Splits `n` sample indices into held-out (first `fraction` of a seeded
/// shuffle) and train (the rest), both sorted ascending.
void make_split(std::size_t n, std::uint64_t seed, double fraction, Dataset& out) {
  if (!(fraction >= 0.0) || fraction >= 1.0) {
    throw ContractError("dataset split: heldout fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = i;
  }
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t heldout = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  heldout = std::min(heldout, n > 0 ? n - 1 : 0);
  out.heldout_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(heldout));
  out.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(heldout), order.end());
  std::sort(out.heldout_indices.begin(), out.heldout_indices.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
}

void index_tokens(Dataset& d) {
  d.vocab.clear();
  d.labels.clear();
  for (const Sample& s : d.samples) {
    for (const std::string& t : s.input) {
      d.vocab.emplace(t, 0);
    }
    for (const std::string& t : s.target) {
      d.labels.emplace(t, 0);
    }
  }
  std::size_t i = 0;
  for (auto& [token, idx] : d.vocab) {
    (void)token;
    idx = i++;
  }
  i = 0;
  for (auto& [token, idx] : d.labels) {
    (void)token;
    idx = i++;
  }
}

Dataset gen_keyword_class(std::size_t size, std::uint64_t seed, const ToyOptions& opt) {
  if (opt.n_classes < 2 || opt.signature_size == 0 || opt.sample_len == 0) {
    throw ContractError("keyword-class: need n_classes >= 2 and nonzero signature/sample sizes");
  }
  if (opt.overlap >= opt.signature_size) {
    throw ContractError("keyword-class: overlap must be smaller than signature_size");
  }
  if (!(opt.noise >= 0.0 && opt.noise <= 1.0)) {
    throw ContractError("keyword-class: noise must lie in [0, 1]");
  }
  if (opt.noise > 0.0 && opt.noise_pool == 0) {
    throw ContractError("keyword-class: noise > 0 needs a nonempty noise pool");
  }

  // Signatures tile a circular keyword universe; consecutive classes share
  // `overlap` keywords, so overlap 0 gives disjoint signatures.
  const std::size_t stride = opt.signature_size - opt.overlap;
  const std::size_t universe = opt.n_classes * stride;
  std::vector<std::vector<std::string>> signatures(opt.n_classes);
  for (std::size_t c = 0; c < opt.n_classes; ++c) {
    for (std::size_t j = 0; j < opt.signature_size; ++j) {
      signatures[c].push_back(indexed_name("kw", (c * stride + j) % universe));
    }
  }
  std::vector<std::string> fillers;
  for (std::size_t j = 0; j < opt.noise_pool; ++j) {
    fillers.push_back(indexed_name("filler", j));
  }

  Dataset d;
  Rng rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t c = i % opt.n_classes;
    Sample s;
    for (std::size_t t = 0; t < opt.sample_len; ++t) {
      if (opt.noise > 0.0 && rng.uniform01() < opt.noise) {
        s.input.push_back(fillers[rng.bounded(fillers.size())]);
      } else {
        s.input.push_back(signatures[c][rng.bounded(opt.signature_size)]);
      }
    }
    s.target.push_back(indexed_name("class", c));
    d.samples.push_back(std::move(s));
  }
  index_tokens(d);
  make_split(size, seed, opt.heldout_fraction, d);
  return d;
}

Dataset gen_char_continuation(std::size_t size, std::uint64_t seed, const ToyOptions& opt) {
  if (opt.min_prefix == 0 || opt.max_prefix < opt.min_prefix) {
    throw ContractError("char-continuation: need 1 <= min_prefix <= max_prefix");
  }
  const auto transitions = char_grammar_transitions();
  const auto symbols = char_grammar_symbols();

  Dataset d;
  Rng rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t len = opt.min_prefix + rng.bounded(opt.max_prefix - opt.min_prefix + 1);
    Sample s;
    std::size_t state = rng.bounded(symbols.size());
    for (std::size_t t = 0; t < len; ++t) {
      s.input.push_back(symbols[state]);
      state = rng.categorical(std::span<const double>(transitions[state]));
    }
    s.target.push_back(symbols[state]);
    d.samples.push_back(std::move(s));
  }
  index_tokens(d);
  make_split(size, seed, opt.heldout_fraction, d);
  return d;
}

}  // namespace

void Dataset::validate() const {
  std::vector<unsigned> seen(samples.size(), 0);
  for (const auto& split : {train_indices, heldout_indices}) {
    for (std::size_t idx : split) {
      if (idx >= samples.size()) {
        throw ContractError("Dataset::validate: split index " + std::to_string(idx) +
                            " out of range");
      }
      ++seen[idx];
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1) {
      throw ContractError("Dataset::validate: sample " + std::to_string(i) +
                          " appears in the splits " + std::to_string(seen[i]) +
                          " times (must be exactly once)");
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.input.empty() || s.target.empty()) {
      throw ContractError("Dataset::validate: sample " + std::to_string(i) +
                          " has an empty input or target");
    }
    for (const std::string& t : s.input) {
      if (!vocab.contains(t)) {
        throw ContractError("Dataset::validate: input token '" + t + "' missing from vocab");
      }
    }
    for (const std::string& t : s.target) {
      if (!labels.contains(t)) {
        throw ContractError("Dataset::validate: target token '" + t + "' missing from labels");
      }
    }
  }
}

std::vector<std::string> index_ordered(const std::map<std::string, std::size_t>& map) {
  std::vector<std::string> out(map.size());
  std::vector<bool> filled(map.size(), false);
  for (const auto& [token, idx] : map) {
    if (idx >= out.size() || filled[idx]) {
      throw ContractError("index_ordered: indices must be exactly 0.." +
                          std::to_string(map.size() ? map.size() - 1 : 0));
    }
    out[idx] = token;
    filled[idx] = true;
  }
  return out;
}

std::array<std::array<double, 5>, 5> char_grammar_transitions() {
  return {{
      {0.10, 0.40, 0.30, 0.10, 0.10},
      {0.30, 0.10, 0.10, 0.40, 0.10},
      {0.20, 0.20, 0.20, 0.20, 0.20},
      {0.05, 0.05, 0.10, 0.30, 0.50},
      {0.50, 0.10, 0.20, 0.10, 0.10},
  }};
}

std::array<std::string, 5> char_grammar_symbols() {
  return {"a", "b", "c", "d", "e"};
}

std::vector<std::string> extract_keywords(const std::string& text,
                                          const std::set<std::string>& stopwords,
                                          std::size_t m) {
  if (m == 0) {
    throw ContractError("extract_keywords: m must be at least 1");
  }
  std::set<std::string> stop;
  for (const std::string& w : stopwords) {
    stop.insert(lowercase_ascii(w));
  }

  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::map<std::string, Entry> table;
  std::size_t position = 0;
  std::string token;
  auto flush = [&] {
    if (token.empty()) {
      return;
    }
    if (!stop.contains(token)) {
      auto [it, fresh] = table.try_emplace(token, Entry{0, position});
      ++it->second.count;
      ++position;
    }
    token.clear();
  };
  for (char c : text) {
    if (is_separator(c)) {
      flush();
    } else {
      const unsigned char u = static_cast<unsigned char>(c);
      token.push_back(u < 128 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  flush();

  std::vector<std::pair<std::string, Entry>> ranked(table.begin(), table.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) {
      return a.second.count > b.second.count;
    }
    return a.second.first < b.second.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < m; ++i) {
    out.push_back(ranked[i].first);
  }
  return out;
}

Dataset gen_toy_dataset(const std::string& kind, std::size_t size, std::uint64_t seed,
                        const ToyOptions& options) {
  if (size < 10) {
    throw ConfigError("gen_toy_dataset: size must be at least 10, got " + std::to_string(size));
  }
  if (kind == "keyword-class") {
    return gen_keyword_class(size, seed, options);
  }
  if (kind == "char-continuation") {
    return gen_char_continuation(size, seed, options);
  }
  throw ConfigError("gen_toy_dataset: unknown kind '" + kind +
                    "' (expected keyword-class or char-continuation)");
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("save_dataset: cannot open '" + path + "' for writing");
  }
  for (const Sample& s : dataset.samples) {
    for (std::size_t i = 0; i < s.input.size(); ++i) {
      out << (i ? " " : "") << s.input[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < s.target.size(); ++i) {
      out << (i ? " " : "") << s.target[i];
    }
    out << '\n';
  }
  if (!out) {
    throw FormatError("save_dataset: write to '" + path + "' failed");
  }
}

Dataset load_dataset(const std::string& path, std::uint64_t split_seed,
                     double heldout_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_dataset: cannot open '" + path + "'");
  }
  auto split_tokens = [](const std::string& field) {
    std::vector<std::string> tokens;
    std::istringstream ss(field);
    std::string t;
    while (ss >> t) {
      tokens.push_back(t);
    }
    return tokens;
  };

  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (line.empty()) {
      throw FormatError("load_dataset: " + where + ": empty line");
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("load_dataset: " + where + ": missing tab separator");
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError("load_dataset: " + where + ": more than one tab separator");
    }
    Sample s;
    s.input = split_tokens(line.substr(0, tab));
    s.target = split_tokens(line.substr(tab + 1));
    if (s.input.empty()) {
      throw FormatError("load_dataset: " + where + ": empty input field");
    }
    if (s.target.empty()) {
      throw FormatError("load_dataset: " + where + ": empty target field");
    }
    d.samples.push_back(std::move(s));
  }
  index_tokens(d);
  make_split(d.samples.size(), split_seed, heldout_fraction, d);
  return d;
}

}  // namespace ladder
