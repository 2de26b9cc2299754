#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ladder/dataset.hpp"
#include "ladder/keyvalue.hpp"
#include "ladder/metrics.hpp"
#include "ladder/model.hpp"

namespace ladder {

enum class Optimizer { sgd, adam };

Optimizer optimizer_from_string(const std::string& name);  // ConfigError on unknown
std::string optimizer_to_string(Optimizer opt);

/// Optimization hyperparameters. The loss weights live here as well so a
/// training run is fully described by (TrainConfig, LadderConfig, seed).
struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lambda_drift = 0.1;
  double lambda_balance = 0.01;
  std::uint64_t seed = 1;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

/// Gradients are rescaled to this global L2 norm before every optimizer
/// step; it keeps the multi-step reasoning loop from blowing up early in
/// training.
inline constexpr double kGradClipNorm = 5.0;

/// Tokens sampled per held-out prompt when building the generation corpus
/// that the diversity metrics score.
inline constexpr std::size_t kGenTokens = 8;

/// task + lambda_drift·drift + lambda_balance·balance, graph-recorded.
/// Negative lambdas → ConfigError; non-scalar terms → ContractError;
/// non-finite terms → DomainError.
Tensor total_loss(const Tensor& task, const Tensor& drift, const Tensor& balance,
                  double lambda_drift, double lambda_balance);

/// Adam moment buffers; sized lazily on the first step. SGD runs keep it
/// empty. Reusing a state across parameter sets of different shapes is a
/// ContractError.
struct OptimizerState {
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One optimizer update in place: SGD θ←θ−lr·g, or Adam with bias-corrected
/// moments. A parameter whose gradient was never populated (no backward/
/// zero_grad) is a ContractError.
void optimizer_step(OptimizerState& state, const std::vector<Tensor>& params,
                    const TrainConfig& cfg);

/// Returns the pre-clip global L2 norm over all parameter gradients and, if
/// it exceeds max_norm, scales every gradient in place by max_norm/norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

/// Mean-pooled bag encoding: row r has 1/len(input_r) at each input token's
/// vocab column, counted with multiplicity. Constant (no gradient) — the
/// learnable embedding is applied by the caller. Unknown token or empty
/// index list → ContractError.
Tensor encode_batch(const Dataset& dataset, std::span<const std::size_t> indices);

/// Label indices for the first target token of each sample, in the int form
/// the cross-entropy and task-success functions consume.
std::vector<int> batch_targets(const Dataset& dataset, std::span<const std::size_t> indices);

/// The full differentiable pipeline for one batch: bag → embedding →
/// reasoning block → class logits, plus the three loss components and
/// their weighted total.
struct BatchLosses {
  Tensor task;     // cross-entropy on class logits
  Tensor drift;    // anchor alignment on the final representation
  Tensor balance;  // load-balance loss averaged over reasoning steps
  Tensor total;
  Tensor logits;
  LadderOutput out;
};
BatchLosses forward_batch(const LadderModel& model, const Dataset& dataset,
                          std::span<const std::size_t> indices, double lambda_drift,
                          double lambda_balance);

struct EpochRecord {
  double task_loss = 0.0;     // training means, weighted per sample
  double drift_loss = 0.0;
  double balance_loss = 0.0;
  double heldout_success = 0.0;
  double entropy = 0.0;       // expert-utilization entropy on the held-out pass
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  MetricsReport final_metrics;
};

/// CSV text for a run: header epoch,task_loss,drift_loss,balance_loss,
/// heldout_success,entropy with epochs numbered from 1.
std::string run_record_csv(const RunRecord& record);

/// Deterministic evaluation over `indices`: classification success, expert
/// utilization, and diversity (Self-BLEU max_n=2, Distinct-1/2) over a
/// generated corpus — kGenTokens tokens per sample drawn i.i.d. from
/// softmax(x_final · embeddingᵀ) with Rng(seed). Needs ≥ 2 samples for the
/// corpus metrics.
MetricsReport evaluate(const LadderModel& model, const Dataset& dataset,
                       std::span<const std::size_t> indices, std::uint64_t seed);

/// Minimizes the total loss over the train split with per-epoch seeded
/// shuffles, recording one EpochRecord per epoch and a final MetricsReport
/// on the held-out split. Deterministic given (configs, dataset, seed).
/// A non-finite loss aborts with DivergenceError naming the epoch and
/// batch. The model must be initialized against this dataset's vocab and
/// label sizes; the held-out split must be nonempty.
RunRecord train(LadderModel& model, const Dataset& dataset, const TrainConfig& cfg);

/// Overlays key=value options (e.g. a parsed config file) onto the two
/// configs. Recognized keys mirror the field names; unknown keys raise
/// ConfigError so typos cannot silently pick defaults. The shared keys
/// lambda_drift/lambda_balance and seed set both configs.
void apply_options(const KeyValueMap& options, LadderConfig& model_cfg, TrainConfig& train_cfg);

}  // namespace ladder
