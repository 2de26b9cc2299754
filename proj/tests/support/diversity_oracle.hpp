#pragma once

// Brute-force reference implementations of the diversity metrics, written
// independently of the library (string-joined n-gram keys, no shared tables,
// per-candidate recomputation) so agreement between the two is evidence of
// correctness rather than of shared bugs. Pinned to the same definitions:
// uniform 1..max_n weights, clipped precision, closest-length brevity
// penalty with ties toward the shorter reference, add-one smoothing only for
// zero-match orders >= 2, neutral precision for orders longer than the
// candidate, and hard zero on zero unigram overlap.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Doc = std::vector<std::string>;

inline std::map<std::string, int> ngram_multiset(const Doc& doc, std::size_t n) {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i + n <= doc.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      key += doc[i + j];
      key += '\x1f';
    }
    out[key] += 1;
  }
  return out;
}

inline double distinct_n(const std::vector<Doc>& corpus, std::size_t n) {
  std::set<std::string> distinct;
  int total = 0;
  for (const Doc& doc : corpus) {
    for (const auto& [key, count] : ngram_multiset(doc, n)) {
      distinct.insert(key);
      total += count;
    }
  }
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

inline double bleu_against(const Doc& cand, const std::vector<Doc>& refs,
                           std::size_t max_n) {
  // brevity penalty
  long best_gap = -1;
  long ref_len = 0;
  const long c_len = static_cast<long>(cand.size());
  for (const Doc& ref : refs) {
    const long len = static_cast<long>(ref.size());
    const long gap = std::labs(len - c_len);
    if (best_gap < 0 || gap < best_gap || (gap == best_gap && len < ref_len)) {
      best_gap = gap;
      ref_len = len;
    }
  }
  const double bp =
      c_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / c_len);

  double log_sum = 0.0;
  for (std::size_t g = 1; g <= max_n; ++g) {
    auto cand_grams = ngram_multiset(cand, g);
    int total = 0;
    int matched = 0;
    for (const auto& [key, count] : cand_grams) {
      total += count;
      int clip = 0;
      for (const Doc& ref : refs) {
        auto grams = ngram_multiset(ref, g);
        auto it = grams.find(key);
        if (it != grams.end() && it->second > clip) {
          clip = it->second;
        }
      }
      matched += count < clip ? count : clip;
    }
    if (total == 0) {
      continue;  // candidate shorter than g tokens: neutral order
    }
    double p;
    if (matched > 0) {
      p = static_cast<double>(matched) / total;
    } else if (g >= 2) {
      p = 1.0 / (total + 1);
    } else {
      return 0.0;  // zero unigram overlap
    }
    log_sum += std::log(p) / static_cast<double>(max_n);
  }
  return bp * std::exp(log_sum);
}

inline double self_bleu(const std::vector<Doc>& corpus, std::size_t max_n) {
  double sum = 0.0;
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    std::vector<Doc> refs;
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      if (r != c) {
        refs.push_back(corpus[r]);
      }
    }
    sum += bleu_against(corpus[c], refs, max_n);
  }
  return sum / static_cast<double>(corpus.size());
}

/// Deterministic random corpus for cross-checking: `docs` documents of
/// length in [1, max_len], tokens drawn from a `vocab`-sized alphabet.
inline std::vector<Doc> random_corpus(std::uint64_t seed, std::size_t docs,
                                      std::size_t max_len, std::size_t vocab) {
  // xorshift64 keeps the oracle free of library RNG code
  std::uint64_t state = seed * 2685821657736338717ULL + 1;
  auto next = [&state]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  };
  std::vector<Doc> corpus(docs);
  for (Doc& doc : corpus) {
    const std::size_t len = 1 + next() % max_len;
    for (std::size_t i = 0; i < len; ++i) {
      doc.push_back("t" + std::to_string(next() % vocab));
    }
  }
  return corpus;
}

}  // namespace oracle
