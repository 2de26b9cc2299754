#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ladder/config.hpp"
#include "ladder/tensor.hpp"

namespace ladder {

/// The trainable parameter bundle.
///
/// Shapes (d = base_dim, D = lifted_dim, n = n_experts, H = n_heads,
/// A = n_anchors, V = vocab_size, C = n_classes):
///   embedding      [V x d]   token -> concrete semantic vector
///   lift           [D x d] weight, [D] bias
///   gate           [n x D] weight, [n] bias
///   experts[i]     [D x D] weight, [D] bias
///   heads[j]       [d x D] weight, [d] bias
///   head_mix       [H]       softmaxed into head fusion weights
///   anchors        [A x d]   learnable drift targets in output space
///   output         [C x d] weight, [C] bias   classification head
struct LadderModel {
  LadderConfig config;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 0;

  Tensor embedding;
  Tensor lift_weight;
  Tensor lift_bias;
  Tensor gate_weight;
  Tensor gate_bias;
  struct Affine {
    Tensor weight;
    Tensor bias;
  };
  std::vector<Affine> experts;
  std::vector<Affine> heads;
  Tensor head_mix;
  Tensor anchors;
  Tensor output_weight;
  Tensor output_bias;

  /// Fresh model with seeded near-orthogonal-scale init (weights drawn
  /// N(0, 1/sqrt(fan_in)), biases zero, anchors N(0,1), head_mix zero so the
  /// head fusion starts uniform). The draw order is the canonical parameter
  /// order below, so identical (config, vocab_size, n_classes) always yields
  /// bit-identical parameters.
  static LadderModel init(const LadderConfig& cfg, std::size_t vocab_size,
                          std::size_t n_classes);

  /// Canonical (name, tensor) pairs, in the fixed order: embedding,
  /// lift.weight, lift.bias, gate.weight, gate.bias, expert{i}.weight,
  /// expert{i}.bias (i ascending), head{j}.weight, head{j}.bias (j
  /// ascending), head_mix, anchors, output.weight, output.bias.
  /// Checkpoints and the optimizer both rely on this order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void zero_grad() const;
};

}  // namespace ladder
