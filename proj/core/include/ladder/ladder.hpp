#pragma once

#include <cstddef>
#include <vector>

#include "ladder/model.hpp"
#include "ladder/tensor.hpp"

namespace ladder {

/// Everything observed while routing one batch through the expert layer.
///
/// `gate` is the dense pre-Top-k distribution and stays attached to the
/// computation graph so the balance loss can push gradients into the gating
/// network. eval_counts[i] is the number of rows expert i was actually run
/// on; a zero there for an unselected expert is the proof that sparsity is
/// real and not a masked dense pass.
struct RoutingTrace {
  Tensor gate;                                     // [batch x n], rows sum to 1
  std::vector<std::vector<std::size_t>> selected;  // per row, k expert ids, ascending
  std::vector<std::size_t> expert_counts;          // rows routed to expert i
  std::vector<std::size_t> eval_counts;            // rows expert i computed on
  std::vector<double> mean_gate;                   // column means of `gate`
  std::size_t batch = 0;
};

struct TopkRouting {
  Tensor sparse_weights;  // [batch x n]; k nonzeros per row, each row sums to 1
  std::vector<std::vector<std::size_t>> selected;
};

struct MoeOutput {
  Tensor y;  // [batch x D]
  RoutingTrace trace;
};

struct LadderOutput {
  Tensor x_final;                    // [batch x d]
  std::vector<RoutingTrace> traces;  // one per reasoning step
};

/// Expansion into the abstract space: x[batch x d] -> x.W_lift^T + b [batch x D].
Tensor lift(const Tensor& x, const LadderModel& model);

/// Dense expert distribution: softmax(h.W_gate^T + b_gate), rows sum to 1.
Tensor gate(const Tensor& h, const LadderModel& model);

/// Keeps the k largest entries per row, zeroes the rest, and renormalizes
/// the kept mass to sum 1. Ties broken toward the lower expert index. With
/// k == n the input tensor is returned unchanged (same handle, bit-exact).
TopkRouting gate_topk(const Tensor& weights, std::size_t k);

/// One expert: activation(x.W_i^T + b_i).
Tensor expert_forward(std::size_t i, const Tensor& x, const LadderModel& model);

/// Sparse weighted expert mixture: y = sum over selected experts of
/// sparse_weight_i * expert_i(h). Each expert runs only on the rows that
/// selected it (gather -> expert -> scale -> scatter), which is what the
/// trace's eval_counts certify.
MoeOutput moe_forward(const Tensor& h, const LadderModel& model, std::size_t k);

/// Descent through one head: y[batch x D] -> y.W_down^T + b [batch x d].
Tensor descend(const Tensor& y, std::size_t head, const LadderModel& model);

/// Fusion of all descent heads, weighted by softmax(head_mix). A single
/// head short-circuits to descend(y, 0), so H=1 is bit-identical to it.
Tensor multi_head_descend(const Tensor& y, const LadderModel& model);

/// Mean over the batch of half the squared distance to the nearest anchor
/// (ties toward the lower anchor index). Differentiable in both arguments;
/// the nearest-anchor assignment itself is treated as constant.
Tensor drift_loss(const Tensor& x_final, const Tensor& anchors);

/// n * sum_i f_i * P_i where f_i is expert i's share of the Top-k selections
/// and P_i the mean dense gate weight. Equals 1 under perfect balance and n
/// when one expert takes everything. f is a constant; gradients flow through
/// P into the gating network.
Tensor load_balance_loss(const RoutingTrace& trace);

/// The full block: T times s <- multi_head_descend(moe_forward(lift(s)))
/// with shared weights, starting from s = x. Toggles: use_cot=false runs a
/// single step; use_moe=false replaces the mixture with expert 0 applied
/// densely (trace shows expert 0 at weight 1); use_dimmap=false makes
/// lift/descend the identity (config validation requires d == D for it).
LadderOutput ladder_forward(const Tensor& x, const LadderModel& model);

}  // namespace ladder
