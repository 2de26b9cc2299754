#include "ladder/ladder.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ladder/errors.hpp"

namespace ladder {

namespace {

void check_width(const Tensor& t, std::size_t want, const char* who) {
  if (t.rank() != 2 || t.cols() != want) {
    throw DimensionError(std::string(who) + ": expected [batch x " +
                         std::to_string(want) + "] input, got " + t.shape_str());
  }
}

}  // namespace

Tensor lift(const Tensor& x, const LadderModel& model) {
  check_width(x, model.config.base_dim, "lift");
  return linear(x, model.lift_weight, model.lift_bias);
}

Tensor gate(const Tensor& h, const LadderModel& model) {
  check_width(h, model.config.lifted_dim, "gate");
  return softmax(linear(h, model.gate_weight, model.gate_bias));
}

TopkRouting gate_topk(const Tensor& weights, std::size_t k) {
  if (weights.rank() != 2) {
    throw DimensionError("gate_topk: expected [batch x n] weights, got " +
                         weights.shape_str());
  }
  const std::size_t batch = weights.rows();
  const std::size_t n = weights.cols();
  if (k == 0 || k > n) {
    throw ConfigError("gate_topk: k (" + std::to_string(k) + ") must lie in [1, " +
                      std::to_string(n) + "]");
  }

  TopkRouting out;
  out.selected.resize(batch);

  if (k == n) {
    // Degenerate routing keeps everything; returning the input handle makes
    // the sparse path provably identical to the dense one.
    for (std::size_t r = 0; r < batch; ++r) {
      out.selected[r].resize(n);
      std::iota(out.selected[r].begin(), out.selected[r].end(), std::size_t{0});
    }
    out.sparse_weights = weights;
    return out;
  }

  auto w = weights.data();
  std::vector<double> mask(batch * n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < batch; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // descending weight, ties toward the lower expert index
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return w[r * n + a] > w[r * n + b];
    });
    auto& sel = out.selected[r];
    sel.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(sel.begin(), sel.end());
    for (std::size_t idx : sel) {
      mask[r * n + idx] = 1.0;
    }
  }

  Tensor kept = mul(weights, Tensor::from_data({batch, n}, std::move(mask)));
  Tensor kept_mass = sum_axis1(kept);  // [batch]
  out.sparse_weights = div_colvec(kept, kept_mass);
  return out;
}

Tensor expert_forward(std::size_t i, const Tensor& x, const LadderModel& model) {
  if (i >= model.experts.size()) {
    throw ConfigError("expert_forward: expert " + std::to_string(i) +
                      " out of range for " + std::to_string(model.experts.size()) +
                      " experts");
  }
  check_width(x, model.config.lifted_dim, "expert_forward");
  Tensor z = linear(x, model.experts[i].weight, model.experts[i].bias);
  return model.config.activation == Activation::relu ? relu(z) : ladder::tanh(z);
}

MoeOutput moe_forward(const Tensor& h, const LadderModel& model, std::size_t k) {
  check_width(h, model.config.lifted_dim, "moe_forward");
  const std::size_t batch = h.rows();
  const std::size_t n = model.experts.size();

  Tensor dense = gate(h, model);
  TopkRouting routing = gate_topk(dense, k);

  RoutingTrace trace;
  trace.gate = dense;
  trace.selected = routing.selected;
  trace.expert_counts.assign(n, 0);
  trace.eval_counts.assign(n, 0);
  trace.batch = batch;
  trace.mean_gate.assign(n, 0.0);
  {
    auto g = dense.data();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        trace.mean_gate[c] += g[r * n + c];
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      trace.mean_gate[c] /= static_cast<double>(batch);
    }
  }

  // Row lists per expert; the fixed expert iteration order keeps the graph
  // (and therefore summation order) deterministic.
  std::vector<std::vector<std::size_t>> rows_for(n);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t idx : routing.selected[r]) {
      rows_for[idx].push_back(r);
      ++trace.expert_counts[idx];
    }
  }

  Tensor acc;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rows = rows_for[i];
    if (rows.empty()) {
      continue;  // unselected experts are never evaluated
    }
    trace.eval_counts[i] += rows.size();
    // rows is ascending by construction, so a full-length list is exactly
    // 0..batch-1 and the gather/scatter copies can be skipped.
    const bool whole_batch = rows.size() == batch;
    Tensor sub = whole_batch ? h : gather_rows(h, rows);
    Tensor expert_out = expert_forward(i, sub, model);
    Tensor w_col = select_column(routing.sparse_weights, i);  // [batch]
    Tensor w_sub = whole_batch ? w_col : gather_rows(w_col, rows);
    Tensor weighted = mul_colvec(expert_out, w_sub);
    Tensor placed = whole_batch ? weighted : scatter_rows(weighted, rows, batch);
    acc = acc.defined() ? add(acc, placed) : placed;
  }
  return {acc, std::move(trace)};
}

Tensor descend(const Tensor& y, std::size_t head, const LadderModel& model) {
  if (head >= model.heads.size()) {
    throw ConfigError("descend: head " + std::to_string(head) + " out of range for " +
                      std::to_string(model.heads.size()) + " heads");
  }
  check_width(y, model.config.lifted_dim, "descend");
  return linear(y, model.heads[head].weight, model.heads[head].bias);
}

Tensor multi_head_descend(const Tensor& y, const LadderModel& model) {
  if (model.heads.size() == 1) {
    return descend(y, 0, model);  // softmax over one logit is exactly 1
  }
  Tensor mix = softmax(model.head_mix);
  Tensor acc;
  for (std::size_t j = 0; j < model.heads.size(); ++j) {
    Tensor term = mul_scalar(descend(y, j, model), select_element(mix, j));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor drift_loss(const Tensor& x_final, const Tensor& anchors) {
  if (!anchors.defined() || anchors.rank() != 2) {
    throw ConfigError("drift_loss: anchors must be a defined [A x d] tensor");
  }
  if (x_final.rank() != 2 || x_final.cols() != anchors.cols()) {
    throw DimensionError("drift_loss: output " + x_final.shape_str() +
                         " and anchors " + anchors.shape_str() +
                         " disagree on width");
  }
  const std::size_t batch = x_final.rows();
  const std::size_t a_count = anchors.rows();
  const std::size_t d = anchors.cols();

  // Nearest-anchor assignment on values (constant w.r.t. the graph); ties
  // resolve toward the lower anchor index via strict less-than.
  auto xv = x_final.data();
  auto av = anchors.data();
  std::vector<std::size_t> nearest(batch, 0);
  for (std::size_t r = 0; r < batch; ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < a_count; ++a) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xv[r * d + c] - av[a * d + c];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        nearest[r] = a;
      }
    }
  }

  Tensor picked = gather_rows(anchors, nearest);  // [batch x d]
  Tensor diff = sub(x_final, picked);
  return scale(sum_all(mul(diff, diff)), 0.5 / static_cast<double>(batch));
}

Tensor load_balance_loss(const RoutingTrace& trace) {
  if (trace.batch == 0 || !trace.gate.defined()) {
    throw ContractError("load_balance_loss: trace covers no samples");
  }
  const std::size_t n = trace.gate.cols();
  std::size_t total = 0;
  for (std::size_t c : trace.expert_counts) {
    total += c;
  }
  if (total == 0) {
    throw ContractError("load_balance_loss: trace records no selections");
  }
  std::vector<double> f(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = static_cast<double>(trace.expert_counts[i]) / static_cast<double>(total);
  }
  Tensor col_means =
      scale(sum_axis0(trace.gate), 1.0 / static_cast<double>(trace.batch));  // P
  Tensor weighted = mul(col_means, Tensor::from_data({n}, std::move(f)));
  return scale(sum_all(weighted), static_cast<double>(n));
}

LadderOutput ladder_forward(const Tensor& x, const LadderModel& model) {
  const LadderConfig& cfg = model.config;
  cfg.validate();
  check_width(x, cfg.base_dim, "ladder_forward");
  const std::size_t batch = x.rows();
  const std::size_t steps = cfg.effective_steps();

  LadderOutput out;
  out.traces.reserve(steps);
  Tensor s = x;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor h = cfg.use_dimmap ? lift(s, model) : s;
    Tensor y;
    if (cfg.use_moe) {
      MoeOutput mo = moe_forward(h, model, cfg.top_k);
      y = mo.y;
      out.traces.push_back(std::move(mo.trace));
    } else {
      y = expert_forward(0, h, model);
      // Synthetic trace: the dense single expert takes every row at weight 1.
      RoutingTrace trace;
      const std::size_t n = model.experts.size();
      std::vector<double> g(batch * n, 0.0);
      for (std::size_t r = 0; r < batch; ++r) {
        g[r * n] = 1.0;
      }
      trace.gate = Tensor::from_data({batch, n}, std::move(g));
      trace.selected.assign(batch, {0});
      trace.expert_counts.assign(n, 0);
      trace.expert_counts[0] = batch;
      trace.eval_counts.assign(n, 0);
      trace.eval_counts[0] = batch;
      trace.mean_gate.assign(n, 0.0);
      trace.mean_gate[0] = 1.0;
      trace.batch = batch;
      out.traces.push_back(std::move(trace));
    }
    s = cfg.use_dimmap ? multi_head_descend(y, model) : y;
  }
  out.x_final = s;
  return out;
}

}  // namespace ladder
