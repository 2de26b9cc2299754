#include "ladder/config.hpp"

namespace ladder {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") {
    return Activation::relu;
  }
  if (name == "tanh") {
    return Activation::tanh;
  }
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

void LadderConfig::validate() const {
  if (base_dim == 0) {
    throw ConfigError("base_dim must be positive");
  }
  if (lifted_dim == 0) {
    throw ConfigError("lifted_dim must be positive");
  }
  if (base_dim > lifted_dim) {
    throw ConfigError("base_dim (" + std::to_string(base_dim) +
                      ") must not exceed lifted_dim (" + std::to_string(lifted_dim) +
                      ")");
  }
  if (n_experts == 0) {
    throw ConfigError("n_experts must be positive");
  }
  if (top_k == 0 || top_k > n_experts) {
    throw ConfigError("top_k (" + std::to_string(top_k) + ") must lie in [1, " +
                      std::to_string(n_experts) + "]");
  }
  if (cot_steps == 0) {
    throw ConfigError("cot_steps must be at least 1");
  }
  if (n_heads == 0) {
    throw ConfigError("n_heads must be at least 1");
  }
  if (n_anchors == 0) {
    throw ConfigError("n_anchors must be at least 1");
  }
  if (lambda_drift < 0.0) {
    throw ConfigError("lambda_drift must be nonnegative");
  }
  if (lambda_balance < 0.0) {
    throw ConfigError("lambda_balance must be nonnegative");
  }
  if (!use_dimmap && base_dim != lifted_dim) {
    throw ConfigError(
        "use_dimmap=false replaces lift/descend with the identity, which "
        "requires base_dim == lifted_dim; got " +
        std::to_string(base_dim) + " vs " + std::to_string(lifted_dim));
  }
}

}  // namespace ladder
