#include "ladder/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "ladder/errors.hpp"
#include "ladder/ladder.hpp"
#include "ladder/rng.hpp"

namespace ladder {
namespace {

void check_scalar(const Tensor& t, const char* name) {
  if (!t.defined() || t.size() != 1) {
    throw ContractError(std::string("total_loss: ") + name + " must be a defined scalar");
  }
  if (!std::isfinite(t.data()[0])) {
    throw DomainError(std::string("total_loss: ") + name + " is not finite");
  }
}

/// Average of the per-step balance losses, so the weight is comparable
/// across runs with different step counts.
Tensor mean_balance(const LadderOutput& out) {
  Tensor acc = load_balance_loss(out.traces.at(0));
  for (std::size_t s = 1; s < out.traces.size(); ++s) {
    acc = add(acc, load_balance_loss(out.traces[s]));
  }
  return scale(acc, 1.0 / static_cast<double>(out.traces.size()));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  const auto data = logits.data();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (data[r * cols + c] > data[r * cols + best]) {
        best = c;
      }
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

struct HeldoutEval {
  double success = 0.0;
  double entropy = 0.0;
};

/// Gradient-free held-out pass: classification success plus utilization
/// entropy over the routing traces. Reused per epoch and by evaluate().
HeldoutEval heldout_eval(const LadderModel& model, const Dataset& dataset,
                         std::span<const std::size_t> indices, LadderOutput* out_keep) {
  NoGradGuard guard;
  const Tensor bags = encode_batch(dataset, indices);
  const Tensor x0 = matmul(bags, model.embedding);
  LadderOutput out = ladder_forward(x0, model);
  const Tensor logits = linear(out.x_final, model.output_weight, model.output_bias);
  const UtilizationStats stats = utilization_entropy(out.traces);
  HeldoutEval ev;
  ev.success = task_success(argmax_rows(logits), batch_targets(dataset, indices));
  ev.entropy = stats.entropy;
  if (out_keep != nullptr) {
    *out_keep = std::move(out);
  }
  return ev;
}

}  // namespace

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd") {
    return Optimizer::sgd;
  }
  if (name == "adam") {
    return Optimizer::adam;
  }
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string optimizer_to_string(Optimizer opt) {
  return opt == Optimizer::sgd ? "sgd" : "adam";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("TrainConfig: learning_rate must be positive and finite");
  }
  if (epochs < 1) {
    throw ConfigError("TrainConfig: epochs must be at least 1");
  }
  if (batch_size < 1) {
    throw ConfigError("TrainConfig: batch_size must be at least 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("TrainConfig: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) {
    throw ConfigError("TrainConfig: adam_eps must be positive");
  }
  if (lambda_drift < 0.0 || lambda_balance < 0.0) {
    throw ConfigError("TrainConfig: loss weights must be nonnegative");
  }
}

Tensor total_loss(const Tensor& task, const Tensor& drift, const Tensor& balance,
                  double lambda_drift, double lambda_balance) {
  if (lambda_drift < 0.0 || lambda_balance < 0.0) {
    throw ConfigError("total_loss: loss weights must be nonnegative");
  }
  check_scalar(task, "task term");
  check_scalar(drift, "drift term");
  check_scalar(balance, "balance term");
  return add(task, add(scale(drift, lambda_drift), scale(balance, lambda_balance)));
}

void optimizer_step(OptimizerState& state, const std::vector<Tensor>& params,
                    const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.optimizer == Optimizer::adam) {
    if (state.m.empty()) {
      state.m.resize(params.size());
      state.v.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i].assign(params[i].size(), 0.0);
        state.v[i].assign(params[i].size(), 0.0);
      }
    }
    if (state.m.size() != params.size()) {
      throw ContractError("optimizer_step: state was built for a different parameter set");
    }
  }

  if (cfg.optimizer == Optimizer::sgd) {
    for (Tensor p : params) {
      const auto g = std::as_const(p).grad();  // throws ContractError when missing
      auto x = p.data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] -= cfg.learning_rate * g[i];
      }
    }
    return;
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    const auto g = std::as_const(p).grad();
    auto x = p.data();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != x.size()) {
      throw ContractError("optimizer_step: parameter " + std::to_string(pi) +
                          " changed size under an existing state");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      x[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw ContractError("clip_global_norm: max_norm must be positive");
  }
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) {
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor p : params) {
      for (double& g : p.grad()) {
        g *= factor;
      }
    }
  }
  return norm;
}

Tensor encode_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) {
    throw ContractError("encode_batch: empty index list");
  }
  const std::size_t vocab_size = dataset.vocab.size();
  std::vector<double> data(indices.size() * vocab_size, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t idx = indices[r];
    if (idx >= dataset.samples.size()) {
      throw ContractError("encode_batch: sample index " + std::to_string(idx) + " out of range");
    }
    const Sample& s = dataset.samples[idx];
    if (s.input.empty()) {
      throw ContractError("encode_batch: sample " + std::to_string(idx) + " has an empty input");
    }
    const double w = 1.0 / static_cast<double>(s.input.size());
    for (const std::string& token : s.input) {
      const auto it = dataset.vocab.find(token);
      if (it == dataset.vocab.end()) {
        throw ContractError("encode_batch: token '" + token + "' missing from vocab");
      }
      data[r * vocab_size + it->second] += w;
    }
  }
  return Tensor::from_data({indices.size(), vocab_size}, std::move(data));
}

std::vector<int> batch_targets(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= dataset.samples.size()) {
      throw ContractError("batch_targets: sample index " + std::to_string(idx) + " out of range");
    }
    const Sample& s = dataset.samples[idx];
    if (s.target.empty()) {
      throw ContractError("batch_targets: sample " + std::to_string(idx) + " has no target");
    }
    const auto it = dataset.labels.find(s.target.front());
    if (it == dataset.labels.end()) {
      throw ContractError("batch_targets: label '" + s.target.front() + "' missing from labels");
    }
    out.push_back(static_cast<int>(it->second));
  }
  return out;
}

BatchLosses forward_batch(const LadderModel& model, const Dataset& dataset,
                          std::span<const std::size_t> indices, double lambda_drift,
                          double lambda_balance) {
  const Tensor bags = encode_batch(dataset, indices);
  const Tensor x0 = matmul(bags, model.embedding);
  BatchLosses b;
  b.out = ladder_forward(x0, model);
  b.logits = linear(b.out.x_final, model.output_weight, model.output_bias);
  b.task = cross_entropy(b.logits, batch_targets(dataset, indices));
  b.drift = drift_loss(b.out.x_final, model.anchors);
  b.balance = mean_balance(b.out);
  b.total = total_loss(b.task, b.drift, b.balance, lambda_drift, lambda_balance);
  return b;
}

std::string run_record_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "epoch,task_loss,drift_loss,balance_loss,heldout_success,entropy\n";
  for (std::size_t e = 0; e < record.epochs.size(); ++e) {
    const EpochRecord& r = record.epochs[e];
    out << (e + 1) << ',' << format_double(r.task_loss) << ',' << format_double(r.drift_loss)
        << ',' << format_double(r.balance_loss) << ',' << format_double(r.heldout_success)
        << ',' << format_double(r.entropy) << '\n';
  }
  return out.str();
}

MetricsReport evaluate(const LadderModel& model, const Dataset& dataset,
                       std::span<const std::size_t> indices, std::uint64_t seed) {
  NoGradGuard guard;
  LadderOutput out;
  const HeldoutEval ev = heldout_eval(model, dataset, indices, &out);
  const UtilizationStats stats = utilization_entropy(out.traces);

  // Generation mode: treat x_final as a next-token query against the
  // embedding table and sample a short continuation per prompt.
  const Tensor gen_logits = matmul(out.x_final, transpose(model.embedding));
  const Tensor gen_probs = softmax(gen_logits);
  const std::vector<std::string> tokens = index_ordered(dataset.vocab);
  const auto probs = gen_probs.data();
  const std::size_t vocab_size = dataset.vocab.size();
  Rng rng(seed);
  Corpus corpus;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    Document doc;
    const std::span<const double> row{probs.data() + r * vocab_size, vocab_size};
    for (std::size_t t = 0; t < kGenTokens; ++t) {
      doc.push_back(tokens[rng.categorical(row)]);
    }
    corpus.push_back(std::move(doc));
  }

  MetricsReport report;
  report.self_bleu = self_bleu(corpus, 2);
  report.distinct[1] = distinct_n(corpus, 1);
  report.distinct[2] = distinct_n(corpus, 2);
  report.task_success = ev.success;
  report.utilization = stats.loads;
  report.entropy = stats.entropy;
  return report;
}

RunRecord train(LadderModel& model, const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  dataset.validate();
  if (dataset.samples.empty() || dataset.train_indices.empty()) {
    throw ContractError("train: dataset has no training samples");
  }
  if (dataset.heldout_indices.empty()) {
    throw ContractError("train: held-out split is empty; per-epoch evaluation needs it");
  }
  if (model.vocab_size != dataset.vocab.size() || model.n_classes != dataset.labels.size()) {
    throw ContractError("train: model was initialized for vocab " +
                        std::to_string(model.vocab_size) + "/classes " +
                        std::to_string(model.n_classes) + " but the dataset has " +
                        std::to_string(dataset.vocab.size()) + "/" +
                        std::to_string(dataset.labels.size()));
  }

  const std::vector<Tensor> params = model.parameters();
  OptimizerState state;
  Rng rng(cfg.seed);
  RunRecord record;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = dataset.train_indices;
    rng.shuffle(order);

    double task_sum = 0.0;
    double drift_sum = 0.0;
    double balance_sum = 0.0;
    for (std::size_t start = 0, batch_no = 0; start < order.size();
         start += cfg.batch_size, ++batch_no) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch{order.data() + start, count};
      const std::string where =
          "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch_no + 1);
      model.zero_grad();
      BatchLosses losses;
      try {
        losses = forward_batch(model, dataset, batch, cfg.lambda_drift, cfg.lambda_balance);
      } catch (const DomainError& e) {
        throw DivergenceError("training diverged at " + where + ": " + e.what());
      }
      const double total = losses.total.value();
      if (!std::isfinite(total)) {
        throw DivergenceError("training diverged at " + where + ": loss is not finite");
      }
      backward(losses.total);
      clip_global_norm(params, kGradClipNorm);
      optimizer_step(state, params, cfg);

      const double n = static_cast<double>(count);
      task_sum += losses.task.value() * n;
      drift_sum += losses.drift.value() * n;
      balance_sum += losses.balance.value() * n;
    }

    const double n_train = static_cast<double>(order.size());
    EpochRecord er;
    er.task_loss = task_sum / n_train;
    er.drift_loss = drift_sum / n_train;
    er.balance_loss = balance_sum / n_train;
    const HeldoutEval ev = heldout_eval(model, dataset, dataset.heldout_indices, nullptr);
    er.heldout_success = ev.success;
    er.entropy = ev.entropy;
    record.epochs.push_back(er);
  }

  record.final_metrics = evaluate(model, dataset, dataset.heldout_indices, cfg.seed);
  return record;
}

void apply_options(const KeyValueMap& options, LadderConfig& model_cfg, TrainConfig& train_cfg) {
  static const std::set<std::string> known = {
      "base_dim",   "lifted_dim",     "n_experts",  "top_k",          "cot_steps",
      "n_heads",    "n_anchors",      "activation", "use_cot",        "use_moe",
      "use_dimmap", "lambda_drift",   "lambda_balance", "seed",       "optimizer",
      "learning_rate", "beta1",       "beta2",      "adam_eps",       "epochs",
      "batch_size",
  };
  for (const auto& [key, value] : options) {
    (void)value;
    if (!known.contains(key)) {
      throw ConfigError("unknown option '" + key + "'");
    }
  }

  model_cfg.base_dim = parse_size(options, "base_dim", model_cfg.base_dim);
  model_cfg.lifted_dim = parse_size(options, "lifted_dim", model_cfg.lifted_dim);
  model_cfg.n_experts = parse_size(options, "n_experts", model_cfg.n_experts);
  model_cfg.top_k = parse_size(options, "top_k", model_cfg.top_k);
  model_cfg.cot_steps = parse_size(options, "cot_steps", model_cfg.cot_steps);
  model_cfg.n_heads = parse_size(options, "n_heads", model_cfg.n_heads);
  model_cfg.n_anchors = parse_size(options, "n_anchors", model_cfg.n_anchors);
  model_cfg.activation = activation_from_string(
      parse_string(options, "activation", to_string(model_cfg.activation)));
  model_cfg.use_cot = parse_bool(options, "use_cot", model_cfg.use_cot);
  model_cfg.use_moe = parse_bool(options, "use_moe", model_cfg.use_moe);
  model_cfg.use_dimmap = parse_bool(options, "use_dimmap", model_cfg.use_dimmap);

  train_cfg.optimizer = optimizer_from_string(
      parse_string(options, "optimizer", optimizer_to_string(train_cfg.optimizer)));
  train_cfg.learning_rate = parse_double(options, "learning_rate", train_cfg.learning_rate);
  train_cfg.beta1 = parse_double(options, "beta1", train_cfg.beta1);
  train_cfg.beta2 = parse_double(options, "beta2", train_cfg.beta2);
  train_cfg.adam_eps = parse_double(options, "adam_eps", train_cfg.adam_eps);
  train_cfg.epochs = parse_size(options, "epochs", train_cfg.epochs);
  train_cfg.batch_size = parse_size(options, "batch_size", train_cfg.batch_size);

  // Shared knobs keep the two configs in agreement.
  model_cfg.lambda_drift = parse_double(options, "lambda_drift", model_cfg.lambda_drift);
  model_cfg.lambda_balance = parse_double(options, "lambda_balance", model_cfg.lambda_balance);
  train_cfg.lambda_drift = model_cfg.lambda_drift;
  train_cfg.lambda_balance = model_cfg.lambda_balance;
  model_cfg.seed = parse_u64(options, "seed", model_cfg.seed);
  train_cfg.seed = model_cfg.seed;
}

}  // namespace ladder
