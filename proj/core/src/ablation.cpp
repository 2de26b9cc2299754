#include "ladder/ablation.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "ladder/errors.hpp"

namespace ladder {
namespace {

struct JobResult {
  std::optional<AblationRow> row;
  std::string warning;
};

JobResult run_one(const Dataset& dataset, const LadderConfig& base_model_cfg,
                  const TrainConfig& base_train_cfg, const std::string& variant,
                  std::uint64_t seed) {
  JobResult result;
  try {
    LadderConfig model_cfg = apply_variant(base_model_cfg, variant);
    model_cfg.seed = seed;
    TrainConfig train_cfg = base_train_cfg;
    train_cfg.seed = seed;
    LadderModel model =
        LadderModel::init(model_cfg, dataset.vocab.size(), dataset.labels.size());
    const RunRecord record = train(model, dataset, train_cfg);
    result.row = AblationRow{variant, seed, record.final_metrics.task_success,
                             record.final_metrics.distinct.at(2), record.final_metrics.entropy};
  } catch (const std::exception& e) {
    result.warning = "warning: ablation variant '" + variant + "' seed " +
                     std::to_string(seed) + " failed: " + e.what();
  }
  return result;
}

struct Aggregate {
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.runs = values.size();
  if (values.empty()) {
    return a;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) {
      sq += (v - a.mean) * (v - a.mean);
    }
    a.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return a;
}

}  // namespace

ToyOptions default_ablation_data_options() {
  ToyOptions opt;
  opt.n_classes = 16;  // sixteen disjoint keyword signatures
  opt.signature_size = 6;
  opt.overlap = 0;
  opt.noise = 0.1;  // rarely more than one filler token per eight-token bag
  opt.noise_pool = 6;
  opt.sample_len = 8;
  return opt;
}

LadderConfig default_ablation_model_config() {
  LadderConfig cfg;
  cfg.base_dim = 8;
  cfg.lifted_dim = 16;
  cfg.n_experts = 8;
  cfg.top_k = 4;
  cfg.cot_steps = 2;
  cfg.n_heads = 2;
  cfg.n_anchors = 16;
  return cfg;
}

TrainConfig default_ablation_train_config() {
  TrainConfig cfg;
  cfg.optimizer = Optimizer::adam;
  cfg.learning_rate = 0.01;
  cfg.epochs = 100;
  cfg.batch_size = 16;
  cfg.lambda_drift = 0.1;
  cfg.lambda_balance = 0.01;
  return cfg;
}

const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {
      "Full LADDER", "w/o CoT", "w/o MoE", "w/o DimMap", "Only-DimMap",
  };
  return names;
}

LadderConfig apply_variant(const LadderConfig& base, const std::string& name) {
  LadderConfig cfg = base;
  if (name == "Full LADDER") {
    return cfg;
  }
  if (name == "w/o CoT") {
    cfg.use_cot = false;
    return cfg;
  }
  if (name == "w/o MoE") {
    cfg.use_moe = false;
    cfg.n_experts = 1;
    cfg.top_k = 1;
    return cfg;
  }
  if (name == "w/o DimMap") {
    cfg.use_dimmap = false;
    cfg.lifted_dim = cfg.base_dim;
    return cfg;
  }
  if (name == "Only-DimMap") {
    cfg.use_cot = false;
    cfg.use_moe = false;
    cfg.n_experts = 1;
    cfg.top_k = 1;
    return cfg;
  }
  throw ConfigError("apply_variant: unknown variant '" + name + "'");
}

AblationTable run_ablation(const Dataset& dataset, const LadderConfig& base_model_cfg,
                           const TrainConfig& base_train_cfg,
                           const std::vector<std::uint64_t>& seeds, std::size_t n_threads) {
  if (seeds.size() < 3) {
    throw ContractError("run_ablation: need at least 3 seeds, got " +
                        std::to_string(seeds.size()));
  }
  const std::vector<std::string>& names = ablation_variant_names();
  std::vector<std::pair<std::size_t, std::size_t>> jobs;  // (variant idx, seed idx)
  for (std::size_t vi = 0; vi < names.size(); ++vi) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      jobs.emplace_back(vi, si);
    }
  }
  std::vector<JobResult> results(jobs.size());

  auto run_job = [&](std::size_t j) {
    const auto [vi, si] = jobs[j];
    results[j] = run_one(dataset, base_model_cfg, base_train_cfg, names[vi], seeds[si]);
  };
  if (n_threads <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      run_job(j);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const std::size_t count = std::min(n_threads, jobs.size());
    workers.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
          run_job(j);
        }
      });
    }
    for (std::thread& t : workers) {
      t.join();
    }
  }

  AblationTable table;
  for (const JobResult& r : results) {  // jobs are already (variant, seed)-ordered
    if (!r.warning.empty()) {
      std::cerr << r.warning << '\n';
    }
    if (r.row) {
      table.rows.push_back(*r.row);
    }
  }
  return table;
}

std::string AblationTable::runs_csv() const {
  std::ostringstream out;
  out << "variant,seed,task_success,distinct2,entropy\n";
  for (const AblationRow& r : rows) {
    out << r.variant << ',' << r.seed << ',' << format_double(r.task_success) << ','
        << format_double(r.distinct2) << ',' << format_double(r.entropy) << '\n';
  }
  return out.str();
}

std::string AblationTable::summary_csv() const {
  std::ostringstream out;
  out << "variant,runs,mean_task_success,stddev_task_success,mean_distinct2,stddev_distinct2,"
         "mean_entropy,stddev_entropy\n";
  for (const std::string& name : ablation_variant_names()) {
    std::vector<double> success;
    std::vector<double> distinct2;
    std::vector<double> entropy;
    for (const AblationRow& r : rows) {
      if (r.variant == name) {
        success.push_back(r.task_success);
        distinct2.push_back(r.distinct2);
        entropy.push_back(r.entropy);
      }
    }
    if (success.empty()) {
      continue;
    }
    const Aggregate s = aggregate(success);
    const Aggregate d = aggregate(distinct2);
    const Aggregate e = aggregate(entropy);
    out << name << ',' << s.runs << ',' << format_double(s.mean) << ','
        << format_double(s.stddev) << ',' << format_double(d.mean) << ','
        << format_double(d.stddev) << ',' << format_double(e.mean) << ','
        << format_double(e.stddev) << '\n';
  }
  return out.str();
}

}  // namespace ladder
