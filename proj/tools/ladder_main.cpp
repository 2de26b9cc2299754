// Command-line surface for the ladder block: data generation, training,
// evaluation, the ablation sweep, gradient checking, and routing statistics.
// Diagnostics go to stderr; data lands in files; exit codes are 0 success,
// 1 usage error, 2 data/format error, 3 failed check or internal error.
#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ladder/ablation.hpp"
#include "ladder/checkpoint.hpp"
#include "ladder/config.hpp"
#include "ladder/dataset.hpp"
#include "ladder/errors.hpp"
#include "ladder/grad_check.hpp"
#include "ladder/keyvalue.hpp"
#include "ladder/ladder.hpp"
#include "ladder/metrics.hpp"
#include "ladder/model.hpp"
#include "ladder/train.hpp"

namespace {

using ladder::KeyValueMap;

/// Declares the shared model/optimizer flags on a subcommand and remembers
/// how to fold the ones the user actually set over a config-file map, so
/// explicit flags always win over the file.
struct ConfigFlags {
  std::string config_path;
  CLI::App* cmd = nullptr;

  void attach(CLI::App* sub) {
    cmd = sub;
    sub->add_option("--config", config_path, "key=value config file (# comments)");
    add<std::size_t>("--base-dim", "base_dim", "concrete semantic width d");
    add<std::size_t>("--lifted-dim", "lifted_dim", "abstract width D (d <= D)");
    add<std::size_t>("--experts", "n_experts", "number of experts");
    add<std::size_t>("--top-k", "top_k", "experts kept per row");
    add<std::size_t>("--steps", "cot_steps", "reasoning steps T");
    add<std::size_t>("--heads", "n_heads", "descent heads");
    add<std::size_t>("--anchors", "n_anchors", "semantic anchors");
    add<std::string>("--activation", "activation", "expert nonlinearity: relu|tanh");
    add_toggle("--cot", "use_cot", "toggle the multi-step loop");
    add_toggle("--moe", "use_moe", "toggle sparse expert routing");
    add_toggle("--dimmap", "use_dimmap", "toggle lift/descend");
    add<std::string>("--optimizer", "optimizer", "sgd|adam");
    add<double>("--lr", "learning_rate", "learning rate");
    add<double>("--beta1", "beta1", "adam first-moment decay");
    add<double>("--beta2", "beta2", "adam second-moment decay");
    add<double>("--adam-eps", "adam_eps", "adam denominator floor");
    add<std::size_t>("--epochs", "epochs", "training epochs");
    add<std::size_t>("--batch-size", "batch_size", "samples per step");
    add<double>("--lambda-drift", "lambda_drift", "drift loss weight");
    add<double>("--lambda-balance", "lambda_balance", "balance loss weight");
    add<std::uint64_t>("--seed", "seed", "model init and run seed");
  }

  /// File options first, explicit flags on top. `overrides` holds exactly
  /// the keys whose flags were passed (the callbacks run only then).
  void resolve(ladder::LadderConfig& model_cfg, ladder::TrainConfig& train_cfg) const {
    KeyValueMap map;
    if (!config_path.empty()) {
      map = ladder::parse_key_value_file(config_path);
    }
    for (const auto& [key, value] : overrides) {
      map[key] = value;
    }
    ladder::apply_options(map, model_cfg, train_cfg);
  }

 private:
  KeyValueMap overrides;  // map key -> flag text, only for flags the user set

  template <typename T>
  void add(const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<T>(
        flag,
        [this, key](const T& v) {
          if constexpr (std::is_same_v<T, std::string>) {
            overrides[key] = v;
          } else {
            overrides[key] = ladder::format_double(static_cast<double>(v));
          }
        },
        help);
  }

  void add_toggle(const std::string& flag, const std::string& key, const std::string& help) {
    const std::string spec = flag + ",!--no" + flag.substr(1);
    cmd->add_flag_function(spec, [this, key](std::int64_t count) {
      overrides[key] = count > 0 ? "true" : "false";
    }, help);
  }
};

std::vector<std::size_t> all_indices(const ladder::Dataset& ds) {
  std::vector<std::size_t> idx(ds.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

/// Loads a TSV against a checkpoint's token inventories so indices line up
/// with the embedding. Unknown tokens are a data error, not a crash.
ladder::Dataset dataset_for_model(const std::string& path, const ladder::CheckpointData& ckpt) {
  ladder::Dataset ds = ladder::load_dataset(path);
  std::map<std::string, std::size_t> vocab;
  for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) {
    vocab[ckpt.vocab[i]] = i;
  }
  std::map<std::string, std::size_t> labels;
  for (std::size_t i = 0; i < ckpt.labels.size(); ++i) {
    labels[ckpt.labels[i]] = i;
  }
  for (const ladder::Sample& s : ds.samples) {
    for (const std::string& t : s.input) {
      if (!vocab.contains(t)) {
        throw ladder::FormatError("data file '" + path + "': token '" + t +
                                  "' is not in the model's vocabulary");
      }
    }
    for (const std::string& t : s.target) {
      if (!labels.contains(t)) {
        throw ladder::FormatError("data file '" + path + "': label '" + t +
                                  "' is not in the model's label set");
      }
    }
  }
  ds.vocab = std::move(vocab);
  ds.labels = std::move(labels);
  return ds;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ladder::FormatError("cannot open '" + path + "' for writing");
  }
  out << text;
  if (!out) {
    throw ladder::FormatError("write to '" + path + "' failed");
  }
}

int dispatch(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ladder::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ladder::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ladder::VersionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ladder::MetricError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"train and probe the ladder reasoning block"};
  app.require_subcommand(1);

  // gen-data -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as TSV");
  std::string gen_kind = "keyword-class";
  std::size_t gen_size = 200;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  ladder::ToyOptions gen_opt;
  gen->add_option("--kind", gen_kind, "keyword-class | char-continuation");
  gen->add_option("--size", gen_size, "number of samples");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output TSV path")->required();
  gen->add_option("--noise", gen_opt.noise, "filler-token probability");
  gen->add_option("--overlap", gen_opt.overlap, "keywords shared between adjacent classes");
  gen->add_option("--classes", gen_opt.n_classes, "number of classes");

  // train ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train on a TSV dataset");
  ConfigFlags tr_flags;
  tr_flags.attach(tr);
  std::string tr_data;
  std::string tr_ckpt = "ladder.ckpt";
  std::string tr_csv = "run_record.csv";
  std::uint64_t tr_split_seed = 1;
  tr->add_option("--data", tr_data, "training TSV")->required();
  tr->add_option("--out", tr_ckpt, "checkpoint to write");
  tr->add_option("--run-csv", tr_csv, "per-epoch RunRecord CSV to write");
  tr->add_option("--split-seed", tr_split_seed, "held-out split seed");

  // eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a TSV dataset");
  std::string ev_ckpt;
  std::string ev_data;
  std::string ev_out = "metrics.csv";
  std::uint64_t ev_seed = 1;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to load")->required();
  ev->add_option("--data", ev_data, "evaluation TSV")->required();
  ev->add_option("--out", ev_out, "MetricsReport CSV to write");
  ev->add_option("--seed", ev_seed, "generation sampling seed");

  // ablate ---------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "train the five ablation variants across seeds");
  ConfigFlags ab_flags;
  ab_flags.attach(ab);
  std::string ab_data;
  std::size_t ab_seeds = 5;
  std::size_t ab_threads = 1;
  std::string ab_runs = "ablation_runs.csv";
  std::string ab_summary = "ablation_summary.csv";
  ab->add_option("--data", ab_data, "TSV dataset (default: the pinned keyword-class task)");
  ab->add_option("--seeds", ab_seeds, "number of seeds (base..base+n-1)");
  ab->add_option("--threads", ab_threads, "worker threads for independent runs");
  ab->add_option("--runs-csv", ab_runs, "per-run CSV to write");
  ab->add_option("--summary-csv", ab_summary, "aggregate CSV to write");

  // gradcheck -------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of the full pipeline");
  std::uint64_t gc_seed = 1;
  double gc_threshold = 1e-4;
  double gc_eps = 1e-5;
  gc->add_option("--seed", gc_seed, "model and data seed");
  gc->add_option("--threshold", gc_threshold, "max relative error allowed");
  gc->add_option("--eps", gc_eps, "finite-difference step");

  // route-stats ------------------------------------------------------------
  auto* rs = app.add_subcommand("route-stats", "dump per-step expert loads as CSV");
  std::string rs_ckpt;
  std::string rs_data;
  std::string rs_out = "route_stats.csv";
  std::size_t rs_batch = 32;
  rs->add_option("--checkpoint", rs_ckpt, "checkpoint to load")->required();
  rs->add_option("--data", rs_data, "TSV dataset to route")->required();
  rs->add_option("--out", rs_out, "CSV to write");
  rs->add_option("--batch-size", rs_batch, "rows per forward pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) {
    return dispatch([&] {
      const ladder::Dataset ds = ladder::gen_toy_dataset(gen_kind, gen_size, gen_seed, gen_opt);
      ladder::save_dataset(ds, gen_out);
      std::cerr << "wrote " << ds.samples.size() << " samples (" << ds.vocab.size()
                << " tokens, " << ds.labels.size() << " labels) to " << gen_out << '\n';
    });
  }

  if (tr->parsed()) {
    return dispatch([&] {
      ladder::LadderConfig model_cfg;
      ladder::TrainConfig train_cfg;
      tr_flags.resolve(model_cfg, train_cfg);
      const ladder::Dataset ds = ladder::load_dataset(tr_data, tr_split_seed);
      ladder::LadderModel model =
          ladder::LadderModel::init(model_cfg, ds.vocab.size(), ds.labels.size());
      const ladder::RunRecord record = ladder::train(model, ds, train_cfg);
      ladder::save_checkpoint(model, ladder::index_ordered(ds.vocab),
                              ladder::index_ordered(ds.labels), tr_ckpt);
      write_file(tr_csv, ladder::run_record_csv(record));
      std::cerr << "trained " << record.epochs.size() << " epochs on " << ds.train_indices.size()
                << " samples; final held-out success "
                << ladder::format_double(record.epochs.back().heldout_success) << '\n'
                << "checkpoint: " << tr_ckpt << "\nrun record: " << tr_csv << '\n';
    });
  }

  if (ev->parsed()) {
    return dispatch([&] {
      const ladder::CheckpointData ckpt = ladder::load_checkpoint(ev_ckpt);
      const ladder::Dataset ds = dataset_for_model(ev_data, ckpt);
      const std::vector<std::size_t> idx = all_indices(ds);
      const ladder::MetricsReport report = ladder::evaluate(ckpt.model, ds, idx, ev_seed);
      write_file(ev_out, ladder::MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
      std::cerr << "evaluated " << idx.size() << " samples; success "
                << ladder::format_double(report.task_success) << "; metrics: " << ev_out << '\n';
    });
  }

  if (ab->parsed()) {
    return dispatch([&] {
      ladder::LadderConfig model_cfg = ladder::default_ablation_model_config();
      ladder::TrainConfig train_cfg = ladder::default_ablation_train_config();
      ab_flags.resolve(model_cfg, train_cfg);
      ladder::Dataset ds;
      if (ab_data.empty()) {
        ds = ladder::gen_toy_dataset("keyword-class", ladder::kAblationDataSize,
                                     ladder::kAblationDataSeed,
                                     ladder::default_ablation_data_options());
      } else {
        ds = ladder::load_dataset(ab_data);
      }
      std::vector<std::uint64_t> seeds(ab_seeds);
      std::iota(seeds.begin(), seeds.end(), train_cfg.seed);
      const ladder::AblationTable table =
          ladder::run_ablation(ds, model_cfg, train_cfg, seeds, ab_threads);
      write_file(ab_runs, table.runs_csv());
      write_file(ab_summary, table.summary_csv());
      std::cerr << "ablation: " << table.rows.size() << " of "
                << ladder::ablation_variant_names().size() * seeds.size()
                << " runs succeeded\nruns: " << ab_runs << "\nsummary: " << ab_summary << '\n';
    });
  }

  if (gc->parsed()) {
    const int code = dispatch([&] {
      ladder::LadderConfig cfg;
      cfg.base_dim = 8;
      cfg.lifted_dim = 16;
      cfg.n_experts = 4;
      cfg.top_k = 2;
      cfg.cot_steps = 2;
      cfg.n_heads = 2;
      cfg.n_anchors = 3;
      cfg.seed = gc_seed;
      const ladder::Dataset ds = ladder::gen_toy_dataset("keyword-class", 12, gc_seed);
      const ladder::LadderModel model =
          ladder::LadderModel::init(cfg, ds.vocab.size(), ds.labels.size());
      const std::vector<std::size_t> batch(ds.train_indices.begin(),
                                           ds.train_indices.begin() + 6);
      const std::vector<ladder::Tensor> params = model.parameters();
      const double err = ladder::grad_check(
          [&] {
            return ladder::forward_batch(model, ds, batch, cfg.lambda_drift,
                                         cfg.lambda_balance)
                .total;
          },
          params, gc_eps);
      std::cerr << "max relative gradient error: " << ladder::format_double(err)
                << " (threshold " << ladder::format_double(gc_threshold) << ")\n";
      if (err > gc_threshold) {
        throw ladder::ContractError("gradient check failed");
      }
    });
    return code;
  }

  if (rs->parsed()) {
    return dispatch([&] {
      const ladder::CheckpointData ckpt = ladder::load_checkpoint(rs_ckpt);
      const ladder::Dataset ds = dataset_for_model(rs_data, ckpt);
      const std::vector<std::size_t> idx = all_indices(ds);
      const std::size_t steps = ckpt.model.config.effective_steps();
      const std::size_t experts = ckpt.model.config.n_experts;
      std::vector<std::vector<std::size_t>> selections(steps,
                                                       std::vector<std::size_t>(experts, 0));
      std::vector<std::vector<std::size_t>> evaluations = selections;
      std::vector<std::vector<double>> gate_mass(steps, std::vector<double>(experts, 0.0));

      ladder::NoGradGuard guard;
      for (std::size_t start = 0; start < idx.size(); start += rs_batch) {
        const std::size_t count = std::min(rs_batch, idx.size() - start);
        const std::span<const std::size_t> batch{idx.data() + start, count};
        const ladder::Tensor bags = ladder::encode_batch(ds, batch);
        const ladder::Tensor x0 = ladder::matmul(bags, ckpt.model.embedding);
        const ladder::LadderOutput out = ladder::ladder_forward(x0, ckpt.model);
        for (std::size_t s = 0; s < out.traces.size(); ++s) {
          for (std::size_t e = 0; e < experts; ++e) {
            selections[s][e] += out.traces[s].expert_counts[e];
            evaluations[s][e] += out.traces[s].eval_counts[e];
            gate_mass[s][e] +=
                out.traces[s].mean_gate[e] * static_cast<double>(out.traces[s].batch);
          }
        }
      }

      std::string csv = "step,expert,selections,evaluations,mean_gate\n";
      for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t e = 0; e < experts; ++e) {
          csv += std::to_string(s + 1) + "," + std::to_string(e) + "," +
                 std::to_string(selections[s][e]) + "," + std::to_string(evaluations[s][e]) +
                 "," + ladder::format_double(gate_mass[s][e] / static_cast<double>(idx.size())) +
                 "\n";
        }
      }
      write_file(rs_out, csv);
      std::cerr << "routed " << idx.size() << " samples over " << steps << " steps; loads: "
                << rs_out << '\n';
    });
  }

  return 0;
}
