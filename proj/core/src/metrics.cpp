#include "ladder/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ladder/errors.hpp"

namespace ladder {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Document& doc, std::size_t n) {
  NgramCounts counts;
  if (doc.size() >= n) {
    for (std::size_t i = 0; i + n <= doc.size(); ++i) {
      counts[std::vector<std::string>(doc.begin() + static_cast<std::ptrdiff_t>(i),
                                      doc.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
    }
  }
  return counts;
}

}  // namespace

double distinct_n(const Corpus& corpus, std::size_t n) {
  if (n == 0) {
    throw ContractError("distinct_n: n must be at least 1");
  }
  if (corpus.empty()) {
    throw MetricError("distinct_n: empty corpus");
  }
  NgramCounts seen;
  std::size_t total = 0;
  for (const Document& doc : corpus) {
    for (auto& [gram, count] : count_ngrams(doc, n)) {
      seen[gram] += count;
      total += count;
    }
  }
  if (total == 0) {
    throw MetricError("distinct_n: no document has length >= " + std::to_string(n) +
                      "; the metric is undefined");
  }
  return static_cast<double>(seen.size()) / static_cast<double>(total);
}

double self_bleu(const Corpus& corpus, std::size_t max_n) {
  if (max_n == 0) {
    throw ContractError("self_bleu: max_n must be at least 1");
  }
  if (corpus.size() < 2) {
    throw MetricError("self_bleu: needs at least 2 documents, got " +
                      std::to_string(corpus.size()));
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) {
      throw MetricError("self_bleu: document " + std::to_string(i) + " is empty");
    }
  }

  // n-gram tables per document per order, shared across candidate loops
  std::vector<std::vector<NgramCounts>> tables(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    tables[d].reserve(max_n);
    for (std::size_t g = 1; g <= max_n; ++g) {
      tables[d].push_back(count_ngrams(corpus[d], g));
    }
  }

  const double weight = 1.0 / static_cast<double>(max_n);
  double bleu_sum = 0.0;
  for (std::size_t cand = 0; cand < corpus.size(); ++cand) {
    const std::size_t cand_len = corpus[cand].size();

    // brevity penalty: closest reference length, ties toward the shorter
    std::size_t ref_len = 0;
    std::size_t best_gap = std::numeric_limits<std::size_t>::max();
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      if (r == cand) continue;
      const std::size_t len = corpus[r].size();
      const std::size_t gap = len > cand_len ? len - cand_len : cand_len - len;
      if (gap < best_gap || (gap == best_gap && len < ref_len)) {
        best_gap = gap;
        ref_len = len;
      }
    }
    const double bp = cand_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) /
                                               static_cast<double>(cand_len));

    double log_precision = 0.0;
    bool hard_zero = false;
    for (std::size_t g = 1; g <= max_n; ++g) {
      const NgramCounts& cand_counts = tables[cand][g - 1];
      std::size_t total = 0;
      std::size_t matched = 0;
      for (const auto& [gram, count] : cand_counts) {
        total += count;
        std::size_t clip = 0;
        for (std::size_t r = 0; r < corpus.size(); ++r) {
          if (r == cand) continue;
          auto it = tables[r][g - 1].find(gram);
          if (it != tables[r][g - 1].end()) {
            clip = std::max(clip, it->second);
          }
        }
        matched += std::min(count, clip);
      }
      if (total == 0) {
        continue;  // order longer than the candidate: neutral precision 1
      }
      double p;
      if (matched > 0) {
        p = static_cast<double>(matched) / static_cast<double>(total);
      } else if (g >= 2) {
        p = 1.0 / static_cast<double>(total + 1);  // add-one smoothing
      } else {
        hard_zero = true;  // no unigram overlap at all
        break;
      }
      log_precision += weight * std::log(p);
    }
    bleu_sum += hard_zero ? 0.0 : bp * std::exp(log_precision);
  }
  return bleu_sum / static_cast<double>(corpus.size());
}

double task_success(const std::vector<int>& predictions, const std::vector<int>& golds) {
  if (predictions.size() != golds.size()) {
    throw ContractError("task_success: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(golds.size()) + " golds");
  }
  if (predictions.empty()) {
    throw ContractError("task_success: empty input");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

UtilizationStats utilization_entropy(const std::vector<RoutingTrace>& traces) {
  if (traces.empty()) {
    throw ContractError("utilization_entropy: no traces");
  }
  const std::size_t n = traces.front().expert_counts.size();
  std::vector<double> totals(n, 0.0);
  double grand = 0.0;
  for (const RoutingTrace& trace : traces) {
    if (trace.expert_counts.size() != n) {
      throw ContractError("utilization_entropy: traces disagree on expert count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      totals[i] += static_cast<double>(trace.expert_counts[i]);
      grand += static_cast<double>(trace.expert_counts[i]);
    }
  }
  if (grand == 0.0) {
    throw ContractError("utilization_entropy: traces record no selections");
  }
  UtilizationStats stats;
  stats.loads.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    stats.loads[i] = totals[i] / grand;
    if (stats.loads[i] > 0.0) {
      stats.entropy -= stats.loads[i] * std::log(stats.loads[i]);
    }
  }
  return stats;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string MetricsReport::csv_header() {
  return "metrics_version,self_bleu,distinct1,distinct2,task_success,entropy,"
         "utilization";
}

std::string MetricsReport::csv_row() const {
  auto d1 = distinct.find(1);
  auto d2 = distinct.find(2);
  if (d1 == distinct.end() || d2 == distinct.end()) {
    throw ContractError("MetricsReport::csv_row: distinct-1 and distinct-2 required");
  }
  std::string loads;
  for (std::size_t i = 0; i < utilization.size(); ++i) {
    if (i > 0) {
      loads += ';';
    }
    loads += format_double(utilization[i]);
  }
  return "1," + format_double(self_bleu) + "," + format_double(d1->second) + "," +
         format_double(d2->second) + "," + format_double(task_success) + "," +
         format_double(entropy) + "," + loads;
}

}  // namespace ladder
