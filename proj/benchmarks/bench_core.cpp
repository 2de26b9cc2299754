// Microbenchmarks for the hot paths: dense matmul (the autodiff workhorse),
// the full reasoning block forward at a few sparsity levels, and Self-BLEU
// (quadratic in corpus size, the slowest metric).
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ladder/config.hpp"
#include "ladder/ladder.hpp"
#include "ladder/metrics.hpp"
#include "ladder/model.hpp"
#include "ladder/rng.hpp"
#include "ladder/tensor.hpp"

namespace {

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ladder::Rng rng(1);
  ladder::NoGradGuard guard;
  const ladder::Tensor a = ladder::Tensor::random_normal({n, n}, rng, 0.0, 1.0);
  const ladder::Tensor b = ladder::Tensor::random_normal({n, n}, rng, 0.0, 1.0);
  for (auto _ : state) {
    ladder::Tensor c = ladder::matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(2 * n * n * n));
}

void bm_ladder_forward(benchmark::State& state) {
  ladder::LadderConfig cfg;
  cfg.base_dim = 16;
  cfg.lifted_dim = 64;
  cfg.n_experts = 8;
  cfg.top_k = static_cast<std::size_t>(state.range(0));
  cfg.cot_steps = 2;
  cfg.n_heads = 2;
  cfg.n_anchors = 8;
  cfg.seed = 1;
  const ladder::LadderModel model = ladder::LadderModel::init(cfg, 32, 8);
  ladder::Rng rng(2);
  ladder::NoGradGuard guard;
  const ladder::Tensor x = ladder::Tensor::random_normal({64, cfg.base_dim}, rng, 0.0, 1.0);
  for (auto _ : state) {
    ladder::LadderOutput out = ladder::ladder_forward(x, model);
    benchmark::DoNotOptimize(out.x_final.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 64);
}

void bm_self_bleu(benchmark::State& state) {
  const auto docs = static_cast<std::size_t>(state.range(0));
  ladder::Rng rng(3);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
  ladder::Corpus corpus;
  for (std::size_t d = 0; d < docs; ++d) {
    ladder::Document doc;
    for (std::size_t t = 0; t < 12; ++t) {
      doc.push_back(vocab[rng.bounded(vocab.size())]);
    }
    corpus.push_back(std::move(doc));
  }
  for (auto _ : state) {
    double v = ladder::self_bleu(corpus, 2);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(docs));
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_ladder_forward)->Arg(1)->Arg(2)->Arg(8);
BENCHMARK(bm_self_bleu)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
