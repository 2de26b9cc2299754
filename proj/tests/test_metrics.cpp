#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ladder/ladder.hpp"
#include "ladder/metrics.hpp"
#include "support/diversity_oracle.hpp"

using ladder::Corpus;
using ladder::Document;

namespace {

Corpus to_corpus(std::initializer_list<const char*> docs) {
  Corpus out;
  for (const char* text : docs) {
    Document doc;
    std::string token;
    for (const char* p = text;; ++p) {
      if (*p == ' ' || *p == '\0') {
        if (!token.empty()) {
          doc.push_back(token);
          token.clear();
        }
        if (*p == '\0') break;
      } else {
        token += *p;
      }
    }
    out.push_back(std::move(doc));
  }
  return out;
}

}  // namespace

TEST_CASE("distinct_n hand counts") {
  // "a a a a": three bigram occurrences, one distinct bigram
  CHECK(ladder::distinct_n(to_corpus({"a a a a"}), 2) == doctest::Approx(1.0 / 3.0));

  // all bigrams unique
  CHECK(ladder::distinct_n(to_corpus({"a b c", "d e f"}), 2) == 1.0);

  // single one-token document
  CHECK(ladder::distinct_n(to_corpus({"x"}), 1) == 1.0);

  // mixed: tokens a,b,a,b,c -> 5 occurrences, 3 distinct
  CHECK(ladder::distinct_n(to_corpus({"a b", "a b c"}), 1) == doctest::Approx(3.0 / 5.0));

  // documents shorter than n contribute nothing but do not break the count
  CHECK(ladder::distinct_n(to_corpus({"a", "b c"}), 2) == 1.0);

  CHECK_THROWS_AS(ladder::distinct_n(to_corpus({"a", "b"}), 2), ladder::MetricError);
  CHECK_THROWS_AS(ladder::distinct_n(Corpus{}, 1), ladder::MetricError);
  CHECK_THROWS_AS(ladder::distinct_n(to_corpus({"a"}), 0), ladder::ContractError);
}

TEST_CASE("distinct_n never rises when a duplicate document is appended") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto docs = oracle::random_corpus(seed, 5, 8, 4);
    Corpus corpus(docs.begin(), docs.end());
    // make sure bigrams exist somewhere
    corpus.push_back({"p", "q", "r"});
    const double before = ladder::distinct_n(corpus, 2);
    corpus.push_back(corpus.front());
    const double after = ladder::distinct_n(corpus, 2);
    CHECK(after <= before + 1e-15);
  }
}

TEST_CASE("self_bleu boundary cases") {
  // identical documents match themselves perfectly
  CHECK(ladder::self_bleu(to_corpus({"a b c", "a b c", "a b c"}), 2) ==
        doctest::Approx(1.0).epsilon(1e-15));

  // disjoint unigram vocabularies have nothing in common
  CHECK(ladder::self_bleu(to_corpus({"a b", "c d"}), 1) == 0.0);

  CHECK_THROWS_AS(ladder::self_bleu(to_corpus({"a b"}), 2), ladder::MetricError);
  CHECK_THROWS_AS(ladder::self_bleu(Corpus{{"a"}, {}}, 1), ladder::MetricError);
  CHECK_THROWS_AS(ladder::self_bleu(to_corpus({"a", "b"}), 0), ladder::ContractError);
}

TEST_CASE("self_bleu equals the brute-force oracle on a worked corpus") {
  auto corpus = to_corpus({"the cat sat", "the cat ran far", "a dog sat"});
  const double got = ladder::self_bleu(corpus, 2);
  std::vector<oracle::Doc> docs(corpus.begin(), corpus.end());
  const double want = oracle::self_bleu(docs, 2);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // spot-check the first candidate by hand: "the cat sat" against the two
  // others. unigrams the/cat/sat all appear somewhere (3 of 3); bigrams only
  // "the cat" does (1 of 2). closest ref length to 3 is 3 -> BP = 1.
  const double hand = std::exp(0.5 * std::log(3.0 / 3.0) + 0.5 * std::log(1.0 / 2.0));
  std::vector<oracle::Doc> refs{docs[1], docs[2]};
  CHECK(oracle::bleu_against(docs[0], refs, 2) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("self_bleu and distinct_n match the oracle on randomized corpora") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    auto docs = oracle::random_corpus(seed, 2 + seed % 5, 9, 3 + seed % 4);
    Corpus corpus(docs.begin(), docs.end());
    for (std::size_t max_n : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
      CAPTURE(max_n);
      CHECK(ladder::self_bleu(corpus, max_n) ==
            doctest::Approx(oracle::self_bleu(docs, max_n)).epsilon(1e-12));
    }
    bool has_bigram = false;
    for (const auto& d : docs) has_bigram = has_bigram || d.size() >= 2;
    if (has_bigram) {
      CHECK(ladder::distinct_n(corpus, 2) ==
            doctest::Approx(oracle::distinct_n(docs, 2)).epsilon(1e-12));
    }
    CHECK(ladder::distinct_n(corpus, 1) ==
          doctest::Approx(oracle::distinct_n(docs, 1)).epsilon(1e-12));
  }
}

TEST_CASE("both diversity metrics ignore document order") {
  auto corpus = to_corpus({"a b c d", "b c", "a a b", "d c b a"});
  auto shuffled = to_corpus({"d c b a", "a a b", "a b c d", "b c"});
  CHECK(ladder::self_bleu(corpus, 2) == ladder::self_bleu(shuffled, 2));
  CHECK(ladder::distinct_n(corpus, 2) == ladder::distinct_n(shuffled, 2));
}

TEST_CASE("appending a duplicate document never lowers self_bleu") {
  for (std::uint64_t seed = 31; seed <= 40; ++seed) {
    CAPTURE(seed);
    auto docs = oracle::random_corpus(seed, 4, 7, 3);
    Corpus corpus(docs.begin(), docs.end());
    const double before = ladder::self_bleu(corpus, 2);
    corpus.push_back(corpus[seed % corpus.size()]);
    const double after = ladder::self_bleu(corpus, 2);
    CHECK(after >= before - 1e-15);
  }
}

TEST_CASE("self_bleu stays within [0, 1] and distinct_n within (0, 1]") {
  for (std::uint64_t seed = 50; seed < 60; ++seed) {
    auto docs = oracle::random_corpus(seed, 3 + seed % 4, 10, 5);
    Corpus corpus(docs.begin(), docs.end());
    const double sb = ladder::self_bleu(corpus, 3);
    CHECK(sb >= 0.0);
    CHECK(sb <= 1.0);
    const double d1 = ladder::distinct_n(corpus, 1);
    CHECK(d1 > 0.0);
    CHECK(d1 <= 1.0);
  }
}

TEST_CASE("task_success counts exact matches") {
  CHECK(ladder::task_success({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(ladder::task_success({1, 2, 3}, {4, 5, 6}) == 0.0);
  CHECK(ladder::task_success({1, 2, 3, 4}, {1, 2, 3, 9}) == 0.75);
  CHECK_THROWS_AS(ladder::task_success({1}, {1, 2}), ladder::ContractError);
  CHECK_THROWS_AS(ladder::task_success({}, {}), ladder::ContractError);
}

TEST_CASE("utilization_entropy closed forms") {
  auto trace_with_counts = [](std::vector<std::size_t> counts) {
    ladder::RoutingTrace t;
    t.expert_counts = std::move(counts);
    t.batch = 1;
    return t;
  };

  // one expert takes everything
  auto stats = ladder::utilization_entropy({trace_with_counts({8, 0, 0})});
  CHECK(stats.loads[0] == 1.0);
  CHECK(stats.entropy == 0.0);

  // perfectly uniform over 4
  stats = ladder::utilization_entropy({trace_with_counts({3, 3, 3, 3})});
  CHECK(stats.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  // (0.5, 0.5, 0, 0)
  stats = ladder::utilization_entropy({trace_with_counts({2, 2, 0, 0})});
  CHECK(stats.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // aggregation across several traces
  stats = ladder::utilization_entropy(
      {trace_with_counts({1, 0}), trace_with_counts({0, 1})});
  CHECK(stats.loads[0] == 0.5);
  CHECK(stats.loads[1] == 0.5);

  // never exceeds ln(n); loads sum to 1
  for (std::uint64_t seed = 3; seed < 9; ++seed) {
    std::vector<std::size_t> counts(5);
    std::uint64_t s = seed;
    for (auto& c : counts) {
      s = s * 6364136223846793005ULL + 1442695040888963407ULL;
      c = s % 7;
    }
    if (counts == std::vector<std::size_t>(5, 0)) counts[0] = 1;
    auto st = ladder::utilization_entropy({trace_with_counts(counts)});
    double sum = 0.0;
    for (double l : st.loads) sum += l;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(st.entropy <= std::log(5.0) + 1e-12);
  }

  CHECK_THROWS_AS(ladder::utilization_entropy({}), ladder::ContractError);
  CHECK_THROWS_AS(ladder::utilization_entropy({trace_with_counts({0, 0})}),
                  ladder::ContractError);
}

TEST_CASE("metrics report serializes to the fixed CSV schema") {
  ladder::MetricsReport report;
  report.self_bleu = 0.25;
  report.distinct[1] = 0.5;
  report.distinct[2] = 0.75;
  report.task_success = 1.0;
  report.utilization = {0.5, 0.25, 0.25};
  report.entropy = 1.5;

  CHECK(ladder::MetricsReport::csv_header() ==
        "metrics_version,self_bleu,distinct1,distinct2,task_success,entropy,"
        "utilization");
  CHECK(report.csv_row() == "1,0.25,0.5,0.75,1,1.5,0.5;0.25;0.25");

  ladder::MetricsReport incomplete;
  incomplete.distinct[1] = 0.5;  // distinct-2 missing
  CHECK_THROWS_AS(incomplete.csv_row(), ladder::ContractError);
}
