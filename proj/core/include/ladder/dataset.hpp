#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ladder {

/// One supervised sample. The input is a token bag/sequence; the target is
/// a single class label for classification tasks or the continuation
/// symbol(s) for sequence tasks. Generated datasets always emit exactly one
/// target token; the loader accepts several.
struct Sample {
  std::vector<std::string> input;
  std::vector<std::string> target;

  bool operator==(const Sample&) const = default;
};

/// A desk-scale dataset: samples plus the two token inventories the model
/// needs (input vocabulary and target label set, both index maps in
/// lexicographic order) and a disjoint, covering train/held-out split.
struct Dataset {
  std::vector<Sample> samples;
  std::map<std::string, std::size_t> vocab;   // input token -> index
  std::map<std::string, std::size_t> labels;  // target token -> index
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> heldout_indices;

  /// Enforces the structural invariants: every input token in vocab, every
  /// target token in labels, no empty inputs/targets, and splits that are
  /// disjoint and together cover every sample exactly once. Throws
  /// ContractError on violation.
  void validate() const;
};

/// Knobs for the synthetic generators. Defaults produce a task that is easy
/// but not trivial; set `noise` to 0 for a linearly separable corpus.
struct ToyOptions {
  // keyword-class knobs
  std::size_t n_classes = 4;       // number of keyword-bag templates
  std::size_t signature_size = 6;  // keywords that identify one class
  std::size_t overlap = 0;         // signature keywords shared with the next class
  std::size_t noise_pool = 6;      // class-neutral filler tokens
  double noise = 0.2;              // probability a drawn token is filler
  std::size_t sample_len = 8;      // tokens per classification sample
  // char-continuation knobs
  std::size_t min_prefix = 3;
  std::size_t max_prefix = 8;
  // shared
  double heldout_fraction = 0.2;
};

/// The first-order transition matrix behind the char-continuation grammar:
/// row i gives the next-symbol distribution after symbol i. Exposed so
/// tests can compare sampled frequencies against the ground truth.
std::array<std::array<double, 5>, 5> char_grammar_transitions();

/// The symbol inventory of the char-continuation grammar, index-aligned
/// with char_grammar_transitions().
std::array<std::string, 5> char_grammar_symbols();

/// Lowercases `text`, splits it on whitespace/punctuation, drops stopwords,
/// and returns the top `m` tokens ranked by frequency with ties broken by
/// first occurrence. An everything-filtered input yields an empty list.
/// Throws ContractError when m < 1.
std::vector<std::string> extract_keywords(const std::string& text,
                                          const std::set<std::string>& stopwords,
                                          std::size_t m);

/// Generates a deterministic toy dataset of `size` samples.
///   kind "keyword-class":     token bags drawn from per-class keyword
///                             signatures, label = generating class.
///   kind "char-continuation": prefixes of a first-order Markov chain over
///                             five symbols, target = the next symbol.
/// Throws ConfigError on an unknown kind or size < 10, and ContractError on
/// inconsistent options.
Dataset gen_toy_dataset(const std::string& kind, std::size_t size, std::uint64_t seed,
                        const ToyOptions& options = {});

/// Writes one sample per line as "input tokens<TAB>target tokens", UTF-8.
/// Throws FormatError when the path is not writable.
void save_dataset(const Dataset& dataset, const std::string& path);

/// Reads the tab-separated format back, rebuilding vocab/labels in
/// lexicographic order and re-deriving a deterministic split from
/// `split_seed`. Malformed lines raise FormatError naming the line number.
Dataset load_dataset(const std::string& path, std::uint64_t split_seed = 1,
                     double heldout_fraction = 0.2);

/// Inverts a token→index map into the index-ordered token list. Throws
/// ContractError when the indices are not exactly 0..size-1.
std::vector<std::string> index_ordered(const std::map<std::string, std::size_t>& map);

}  // namespace ladder
