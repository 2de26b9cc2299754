#include "ladder/model.hpp"

#include <cmath>

#include "ladder/rng.hpp"

namespace ladder {

LadderModel LadderModel::init(const LadderConfig& cfg, std::size_t vocab_size,
                              std::size_t n_classes) {
  cfg.validate();
  if (vocab_size == 0) {
    throw ConfigError("LadderModel::init: vocab_size must be positive");
  }
  if (n_classes == 0) {
    throw ConfigError("LadderModel::init: n_classes must be positive");
  }

  const std::size_t d = cfg.base_dim;
  const std::size_t D = cfg.lifted_dim;
  const double lift_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double inner_sd = 1.0 / std::sqrt(static_cast<double>(D));

  LadderModel m;
  m.config = cfg;
  m.vocab_size = vocab_size;
  m.n_classes = n_classes;

  Rng rng(cfg.seed);
  m.embedding = Tensor::random_normal({vocab_size, d}, rng, 0.0, 0.5, true);
  m.lift_weight = Tensor::random_normal({D, d}, rng, 0.0, lift_sd, true);
  m.lift_bias = Tensor::zeros({D}, true);
  m.gate_weight = Tensor::random_normal({cfg.n_experts, D}, rng, 0.0, inner_sd, true);
  m.gate_bias = Tensor::zeros({cfg.n_experts}, true);
  m.experts.reserve(cfg.n_experts);
  for (std::size_t i = 0; i < cfg.n_experts; ++i) {
    m.experts.push_back({Tensor::random_normal({D, D}, rng, 0.0, inner_sd, true),
                         Tensor::zeros({D}, true)});
  }
  m.heads.reserve(cfg.n_heads);
  for (std::size_t j = 0; j < cfg.n_heads; ++j) {
    m.heads.push_back({Tensor::random_normal({d, D}, rng, 0.0, inner_sd, true),
                       Tensor::zeros({d}, true)});
  }
  m.head_mix = Tensor::zeros({cfg.n_heads}, true);
  m.anchors = Tensor::random_normal({cfg.n_anchors, d}, rng, 0.0, 1.0, true);
  m.output_weight = Tensor::random_normal({n_classes, d}, rng, 0.0, lift_sd, true);
  m.output_bias = Tensor::zeros({n_classes}, true);
  return m;
}

std::vector<std::pair<std::string, Tensor>> LadderModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(9 + 2 * (experts.size() + heads.size()));
  out.emplace_back("embedding", embedding);
  out.emplace_back("lift.weight", lift_weight);
  out.emplace_back("lift.bias", lift_bias);
  out.emplace_back("gate.weight", gate_weight);
  out.emplace_back("gate.bias", gate_bias);
  for (std::size_t i = 0; i < experts.size(); ++i) {
    out.emplace_back("expert" + std::to_string(i) + ".weight", experts[i].weight);
    out.emplace_back("expert" + std::to_string(i) + ".bias", experts[i].bias);
  }
  for (std::size_t j = 0; j < heads.size(); ++j) {
    out.emplace_back("head" + std::to_string(j) + ".weight", heads[j].weight);
    out.emplace_back("head" + std::to_string(j) + ".bias", heads[j].bias);
  }
  out.emplace_back("head_mix", head_mix);
  out.emplace_back("anchors", anchors);
  out.emplace_back("output.weight", output_weight);
  out.emplace_back("output.bias", output_bias);
  return out;
}

std::vector<Tensor> LadderModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    (void)name;
    out.push_back(t);
  }
  return out;
}

void LadderModel::zero_grad() const {
  for (Tensor p : parameters()) {
    p.zero_grad();
  }
}

}  // namespace ladder
