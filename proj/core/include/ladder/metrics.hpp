#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ladder/ladder.hpp"

namespace ladder {

/// A generated or reference text as a token sequence; tokens are opaque.
using Document = std::vector<std::string>;
using Corpus = std::vector<Document>;

/// Distinct n-grams across the whole corpus divided by total n-gram
/// occurrences. Higher means more diverse. Documents shorter than n
/// contribute nothing; if no document reaches length n the metric is
/// undefined and a MetricError is thrown (never a silent 0).
double distinct_n(const Corpus& corpus, std::size_t n);

/// Mean BLEU of each document scored against all the others as references;
/// lower means more diverse. The BLEU variant is pinned so numbers are
/// comparable across runs: uniform weights over orders 1..max_n, modified
/// (clipped) n-gram precision, closest-reference-length brevity penalty
/// (ties toward the shorter reference), and add-one smoothing applied only
/// to zero-match orders >= 2 — a zero unigram overlap keeps BLEU at exactly
/// 0. Orders longer than the candidate score a neutral precision of 1.
/// Throws MetricError on fewer than 2 documents or an empty document.
double self_bleu(const Corpus& corpus, std::size_t max_n);

/// Fraction of exact matches. Throws ContractError on length mismatch or
/// empty input.
double task_success(const std::vector<int>& predictions, const std::vector<int>& golds);

struct UtilizationStats {
  std::vector<double> loads;  // per-expert share of Top-k selections, sums to 1
  double entropy = 0.0;       // -sum loads_i * ln(loads_i), with 0*ln(0) = 0
};

/// Aggregates expert selection counts across traces. Throws ContractError
/// when the traces cover no selections.
UtilizationStats utilization_entropy(const std::vector<RoutingTrace>& traces);

/// One evaluated run, flattened to a fixed CSV schema (see csv_header).
struct MetricsReport {
  double self_bleu = 0.0;
  std::map<std::size_t, double> distinct;  // n -> score; 1 and 2 always present
  double task_success = 0.0;
  std::vector<double> utilization;
  double entropy = 0.0;

  /// Schema version 1: metrics_version, self_bleu, distinct1, distinct2,
  /// task_success, entropy, utilization (per-expert loads joined by ';').
  static std::string csv_header();
  std::string csv_row() const;
};

/// Canonical number formatting for every CSV this library writes: %.17g,
/// which round-trips doubles exactly and is byte-stable across runs.
std::string format_double(double v);

}  // namespace ladder
