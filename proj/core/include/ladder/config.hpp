#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ladder/errors.hpp"

namespace ladder {

/// Expert nonlinearity f_i; one-layer maps keep the block easy to verify.
enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Every dial of the block in one place.
///
/// base_dim is the concrete semantic width d, lifted_dim the abstract width
/// D the input is expanded into (d <= D, with d << D the intended regime).
/// cot_steps is how many times the lift -> experts -> descend round trip is
/// applied with shared weights; the toggles carve out the ablation variants:
///   use_cot=false     run a single reasoning step regardless of cot_steps
///   use_moe=false     one dense expert, no gate
///   use_dimmap=false  identity lift/descend (requires base_dim == lifted_dim)
struct LadderConfig {
  std::size_t base_dim = 16;    // d
  std::size_t lifted_dim = 64;  // D
  std::size_t n_experts = 8;
  std::size_t top_k = 2;
  std::size_t cot_steps = 2;  // T
  std::size_t n_heads = 2;    // H, parallel descent channels
  std::size_t n_anchors = 8;  // A
  double lambda_drift = 0.1;
  double lambda_balance = 0.01;
  Activation activation = Activation::relu;
  std::uint64_t seed = 1;
  bool use_cot = true;
  bool use_moe = true;
  bool use_dimmap = true;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  std::size_t effective_steps() const { return use_cot ? cot_steps : 1; }
};

}  // namespace ladder
