#include "ladder/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace ladder {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};
thread_local int g_no_grad_depth = 0;

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) {
      s += "x";
    }
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t e : shape) {
    p *= e;
  }
  return p;
}

void check_shape_valid(const std::vector<std::size_t>& shape, const char* who) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError(std::string(who) + ": only rank-1 and rank-2 tensors are supported, got " +
                         shape_to_string(shape));
  }
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError(std::string(who) + ": shape extents must be positive, got " +
                           shape_to_string(shape));
    }
  }
}

std::shared_ptr<detail::TensorNode> new_node(std::vector<std::size_t> shape,
                                             std::vector<double> data) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

const detail::TensorNode& node_of(const Tensor& t, const char* who) {
  if (!t.defined()) {
    throw ContractError(std::string(who) + ": undefined tensor operand");
  }
  return *t.impl();
}

}  // namespace

namespace detail {

Tensor wrap(std::shared_ptr<TensorNode> node) { return Tensor(std::move(node)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// NoGradGuard
// ---------------------------------------------------------------------------

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  check_shape_valid(shape, "Tensor::zeros");
  const std::size_t n = shape_product(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, 0.0));
  node->requires_grad = requires_grad;
  return detail::wrap(std::move(node));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  check_shape_valid(shape, "Tensor::full");
  const std::size_t n = shape_product(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return detail::wrap(std::move(node));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  check_shape_valid(shape, "Tensor::from_data");
  if (shape_product(shape) != data.size()) {
    throw DimensionError("Tensor::from_data: shape " + shape_to_string(shape) + " expects " +
                         std::to_string(shape_product(shape)) + " elements, got " +
                         std::to_string(data.size()));
  }
  auto node = new_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return detail::wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::random_normal(std::vector<std::size_t> shape, Rng& rng, double mean,
                             double stddev, bool requires_grad) {
  check_shape_valid(shape, "Tensor::random_normal");
  std::vector<double> data(shape_product(shape));
  for (double& x : data) {
    x = rng.normal(mean, stddev);
  }
  return from_data(std::move(shape), std::move(data), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  return node_of(*this, "Tensor::shape").shape;
}

std::size_t Tensor::size() const { return node_of(*this, "Tensor::size").data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() == 2 ? s[1] : s[0];
}

std::span<double> Tensor::data() {
  auto& n = const_cast<detail::TensorNode&>(node_of(*this, "Tensor::data"));
  return {n.data.data(), n.data.size()};
}

std::span<const double> Tensor::data() const {
  const auto& n = node_of(*this, "Tensor::data");
  return {n.data.data(), n.data.size()};
}

double Tensor::at(std::size_t i) const {
  const auto& n = node_of(*this, "Tensor::at");
  if (i >= n.data.size()) {
    throw ContractError("Tensor::at: index " + std::to_string(i) + " out of range for " +
                        shape_to_string(n.shape));
  }
  return n.data[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = node_of(*this, "Tensor::at");
  if (n.shape.size() != 2 || r >= n.shape[0] || c >= n.shape[1]) {
    throw ContractError("Tensor::at: index (" + std::to_string(r) + "," + std::to_string(c) +
                        ") out of range for " + shape_to_string(n.shape));
  }
  return n.data[r * n.shape[1] + c];
}

double Tensor::value() const {
  const auto& n = node_of(*this, "Tensor::value");
  if (n.data.size() != 1) {
    throw ContractError("Tensor::value: tensor " + shape_to_string(n.shape) + " is not scalar");
  }
  return n.data[0];
}

bool Tensor::requires_grad() const {
  return node_ != nullptr && node_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool v) {
  node_of(*this, "Tensor::set_requires_grad");
  node_->requires_grad = v;
  return *this;
}

bool Tensor::has_grad() const { return node_ != nullptr && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  const auto& n = node_of(*this, "Tensor::grad");
  if (n.grad.empty()) {
    throw ContractError("Tensor::grad: gradient not populated; run backward (or zero_grad) first");
  }
  return {n.grad.data(), n.grad.size()};
}

std::span<double> Tensor::grad() {
  auto& n = const_cast<detail::TensorNode&>(node_of(*this, "Tensor::grad"));
  if (n.grad.empty()) {
    throw ContractError("Tensor::grad: gradient not populated; run backward (or zero_grad) first");
  }
  return {n.grad.data(), n.grad.size()};
}

void Tensor::zero_grad() {
  auto& n = const_cast<detail::TensorNode&>(node_of(*this, "Tensor::zero_grad"));
  n.grad.assign(n.data.size(), 0.0);
}

std::string Tensor::shape_str() const {
  if (!defined()) {
    return "[undefined]";
  }
  return shape_to_string(node_->shape);
}

// ---------------------------------------------------------------------------
// Op plumbing
// ---------------------------------------------------------------------------

namespace {

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_no_grad_depth > 0) {
    return false;
  }
  for (const Tensor* t : inputs) {
    if (t->defined() && t->impl()->requires_grad) {
      return true;
    }
  }
  return false;
}

/// Creates the output node and, when recording, wires parents + closure.
Tensor finish_op(const char* op, std::vector<std::size_t> shape, std::vector<double> data,
                 std::initializer_list<const Tensor*> inputs,
                 const std::function<std::function<void()>(detail::TensorNode*)>& make_backprop) {
  auto node = new_node(std::move(shape), std::move(data));
  node->op = op;
  if (recording(inputs)) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) {
      node->parents.push_back(t->impl());
    }
    node->backprop = make_backprop(node.get());
  }
  return detail::wrap(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
  }
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
  }
}

void check_rank1(const Tensor& t, const char* op) {
  if (t.rank() != 1) {
    throw DimensionError(std::string(op) + ": expected rank-1 tensor, got " + t.shape_str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  node_of(a, "add");
  node_of(b, "add");
  check_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] + bd[i];
  }
  auto* an = a.impl().get();
  auto* bn = b.impl().get();
  return finish_op("add", a.shape(), std::move(out), {&a, &b},
                   [an, bn](detail::TensorNode* on) {
                     return [an, bn, on] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i];
                         }
                       }
                       if (bn->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           bn->tmp_grad[i] += g[i];
                         }
                       }
                     };
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  node_of(a, "sub");
  node_of(b, "sub");
  check_same_shape(a, b, "sub");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] - bd[i];
  }
  auto* an = a.impl().get();
  auto* bn = b.impl().get();
  return finish_op("sub", a.shape(), std::move(out), {&a, &b},
                   [an, bn](detail::TensorNode* on) {
                     return [an, bn, on] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i];
                         }
                       }
                       if (bn->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           bn->tmp_grad[i] -= g[i];
                         }
                       }
                     };
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  node_of(a, "mul");
  node_of(b, "mul");
  check_same_shape(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * bd[i];
  }
  auto* an = a.impl().get();
  auto* bn = b.impl().get();
  return finish_op("mul", a.shape(), std::move(out), {&a, &b},
                   [an, bn](detail::TensorNode* on) {
                     return [an, bn, on] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i] * bn->data[i];
                         }
                       }
                       if (bn->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           bn->tmp_grad[i] += g[i] * an->data[i];
                         }
                       }
                     };
                   });
}

Tensor scale(const Tensor& a, double c) {
  node_of(a, "scale");
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * c;
  }
  auto* an = a.impl().get();
  return finish_op("scale", a.shape(), std::move(out), {&a},
                   [an, c](detail::TensorNode* on) {
                     return [an, c, on] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i] * c;
                         }
                       }
                     };
                   });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  node_of(a, "mul_scalar");
  const auto& sn = node_of(s, "mul_scalar");
  if (sn.data.size() != 1) {
    throw DimensionError("mul_scalar: scalar operand must have one element, got " +
                         s.shape_str());
  }
  const double sv = sn.data[0];
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * sv;
  }
  auto* an = a.impl().get();
  auto* snp = s.impl().get();
  return finish_op("mul_scalar", a.shape(), std::move(out), {&a, &s},
                   [an, snp](detail::TensorNode* on) {
                     return [an, snp, on] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         const double sv2 = snp->data[0];
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i] * sv2;
                         }
                       }
                       if (snp->requires_grad) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           acc += g[i] * an->data[i];
                         }
                         snp->tmp_grad[0] += acc;
                       }
                     };
                   });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  node_of(a, "add_rowvec");
  node_of(v, "add_rowvec");
  check_rank2(a, "add_rowvec");
  check_rank1(v, "add_rowvec");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (v.size() != n) {
    throw DimensionError("add_rowvec: row vector " + v.shape_str() + " does not match " +
                         a.shape_str());
  }
  const auto ad = a.data();
  const auto vd = v.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = ad[r * n + j] + vd[j];
    }
  }
  auto* an = a.impl().get();
  auto* vn = v.impl().get();
  return finish_op("add_rowvec", a.shape(), std::move(out), {&a, &v},
                   [an, vn, m, n](detail::TensorNode* on) {
                     return [an, vn, on, m, n] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           an->tmp_grad[i] += g[i];
                         }
                       }
                       if (vn->requires_grad) {
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < n; ++j) {
                             vn->tmp_grad[j] += g[r * n + j];
                           }
                         }
                       }
                     };
                   });
}

Tensor mul_colvec(const Tensor& a, const Tensor& v) {
  node_of(a, "mul_colvec");
  node_of(v, "mul_colvec");
  check_rank2(a, "mul_colvec");
  check_rank1(v, "mul_colvec");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (v.size() != m) {
    throw DimensionError("mul_colvec: column vector " + v.shape_str() + " does not match " +
                         a.shape_str());
  }
  const auto ad = a.data();
  const auto vd = v.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = ad[r * n + j] * vd[r];
    }
  }
  auto* an = a.impl().get();
  auto* vn = v.impl().get();
  return finish_op("mul_colvec", a.shape(), std::move(out), {&a, &v},
                   [an, vn, m, n](detail::TensorNode* on) {
                     return [an, vn, on, m, n] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[r * n + j] += g[r * n + j] * vn->data[r];
                           }
                         }
                       }
                       if (vn->requires_grad) {
                         for (std::size_t r = 0; r < m; ++r) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             acc += g[r * n + j] * an->data[r * n + j];
                           }
                           vn->tmp_grad[r] += acc;
                         }
                       }
                     };
                   });
}

Tensor div_colvec(const Tensor& a, const Tensor& v) {
  node_of(a, "div_colvec");
  node_of(v, "div_colvec");
  check_rank2(a, "div_colvec");
  check_rank1(v, "div_colvec");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (v.size() != m) {
    throw DimensionError("div_colvec: column vector " + v.shape_str() + " does not match " +
                         a.shape_str());
  }
  const auto vd = v.data();
  for (std::size_t r = 0; r < m; ++r) {
    if (vd[r] == 0.0) {
      throw DomainError("div_colvec: zero divisor at row " + std::to_string(r));
    }
  }
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = ad[r * n + j] / vd[r];
    }
  }
  auto* an = a.impl().get();
  auto* vn = v.impl().get();
  return finish_op("div_colvec", a.shape(), std::move(out), {&a, &v},
                   [an, vn, m, n](detail::TensorNode* on) {
                     return [an, vn, on, m, n] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[r * n + j] += g[r * n + j] / vn->data[r];
                           }
                         }
                       }
                       if (vn->requires_grad) {
                         for (std::size_t r = 0; r < m; ++r) {
                           const double vr = vn->data[r];
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             acc += g[r * n + j] * an->data[r * n + j];
                           }
                           vn->tmp_grad[r] -= acc / (vr * vr);
                         }
                       }
                     };
                   });
}

Tensor relu(const Tensor& a) {
  node_of(a, "relu");
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  }
  auto* an = a.impl().get();
  return finish_op("relu", a.shape(), std::move(out), {&a},
                   [an](detail::TensorNode* on) {
                     return [an, on] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         // subgradient at 0 is defined as 0
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           if (an->data[i] > 0.0) {
                             an->tmp_grad[i] += g[i];
                           }
                         }
                       }
                     };
                   });
}

Tensor tanh(const Tensor& a) {
  node_of(a, "tanh");
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::tanh(ad[i]);
  }
  auto* an = a.impl().get();
  return finish_op("tanh", a.shape(), std::move(out), {&a},
                   [an](detail::TensorNode* on) {
                     return [an, on] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const double y = on->data[i];
                           an->tmp_grad[i] += g[i] * (1.0 - y * y);
                         }
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  node_of(a, "matmul");
  node_of(b, "matmul");
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] += av * bd[p * n + j];
      }
    }
  }
  auto* an = a.impl().get();
  auto* bn = b.impl().get();
  return finish_op("matmul", {m, n}, std::move(out), {&a, &b},
                   [an, bn, m, k, n](detail::TensorNode* on) {
                     return [an, bn, on, m, k, n] {
                       const auto& g = on->tmp_grad;
                       if (an->requires_grad) {
                         // dA = dC . B^T
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               acc += g[i * n + j] * bn->data[p * n + j];
                             }
                             an->tmp_grad[i * k + p] += acc;
                           }
                         }
                       }
                       if (bn->requires_grad) {
                         // dB = A^T . dC
                         for (std::size_t p = 0; p < k; ++p) {
                           for (std::size_t j = 0; j < n; ++j) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < m; ++i) {
                               acc += an->data[i * k + p] * g[i * n + j];
                             }
                             bn->tmp_grad[p * n + j] += acc;
                           }
                         }
                       }
                     };
                   });
}

Tensor transpose(const Tensor& a) {
  node_of(a, "transpose");
  check_rank2(a, "transpose");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto ad = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j * m + i] = ad[i * n + j];
    }
  }
  auto* an = a.impl().get();
  return finish_op("transpose", {n, m}, std::move(out), {&a},
                   [an, m, n](detail::TensorNode* on) {
                     return [an, on, m, n] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[i * n + j] += g[j * m + i];
                           }
                         }
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Softmax and reductions
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& a) {
  if (!a.defined()) {
    throw DomainError("softmax: empty input");
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto ad = a.data();
  for (double x : ad) {
    if (!std::isfinite(x)) {
      throw DomainError("softmax: non-finite input entry");
    }
  }
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = ad.data() + r * n;
    double* orow = out.data() + r * n;
    // max-subtraction keeps exp in range; the result is unchanged
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] /= denom;
    }
  }
  auto* an = a.impl().get();
  return finish_op("softmax", a.shape(), std::move(out), {&a},
                   [an, m, n](detail::TensorNode* on) {
                     return [an, on, m, n] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t r = 0; r < m; ++r) {
                           const double* y = on->data.data() + r * n;
                           const double* gr = g.data() + r * n;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             dot += gr[j] * y[j];
                           }
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[r * n + j] += y[j] * (gr[j] - dot);
                           }
                         }
                       }
                     };
                   });
}

Tensor sum_all(const Tensor& a) {
  node_of(a, "sum_all");
  const auto ad = a.data();
  double s = 0.0;
  for (double x : ad) {
    s += x;
  }
  auto* an = a.impl().get();
  return finish_op("sum_all", {1}, {s}, {&a},
                   [an](detail::TensorNode* on) {
                     return [an, on] {
                       if (an->requires_grad) {
                         const double g = on->tmp_grad[0];
                         for (double& t : an->tmp_grad) {
                           t += g;
                         }
                       }
                     };
                   });
}

Tensor sum_axis0(const Tensor& a) {
  node_of(a, "sum_axis0");
  check_rank2(a, "sum_axis0");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto ad = a.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j] += ad[r * n + j];
    }
  }
  auto* an = a.impl().get();
  return finish_op("sum_axis0", {n}, std::move(out), {&a},
                   [an, m, n](detail::TensorNode* on) {
                     return [an, on, m, n] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[r * n + j] += g[j];
                           }
                         }
                       }
                     };
                   });
}

Tensor sum_axis1(const Tensor& a) {
  node_of(a, "sum_axis1");
  check_rank2(a, "sum_axis1");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto ad = a.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      out[r] += ad[r * n + j];
    }
  }
  auto* an = a.impl().get();
  return finish_op("sum_axis1", {m}, std::move(out), {&a},
                   [an, m, n](detail::TensorNode* on) {
                     return [an, on, m, n] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < n; ++j) {
                             an->tmp_grad[r * n + j] += g[r];
                           }
                         }
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Indexing ops
// ---------------------------------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
  node_of(a, "gather_rows");
  if (indices.empty()) {
    throw ContractError("gather_rows: empty index list");
  }
  const bool mat = a.rank() == 2;
  const std::size_t nrows = mat ? a.rows() : a.size();
  const std::size_t width = mat ? a.cols() : 1;
  for (std::size_t idx : indices) {
    if (idx >= nrows) {
      throw ContractError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                          a.shape_str());
    }
  }
  const auto ad = a.data();
  std::vector<double> out(indices.size() * width);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    for (std::size_t j = 0; j < width; ++j) {
      out[t * width + j] = ad[indices[t] * width + j];
    }
  }
  std::vector<std::size_t> oshape =
      mat ? std::vector<std::size_t>{indices.size(), width}
          : std::vector<std::size_t>{indices.size()};
  auto* an = a.impl().get();
  auto idx_copy = indices;
  return finish_op("gather_rows", std::move(oshape), std::move(out), {&a},
                   [an, idx_copy, width](detail::TensorNode* on) {
                     return [an, on, idx_copy, width] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t t = 0; t < idx_copy.size(); ++t) {
                           for (std::size_t j = 0; j < width; ++j) {
                             an->tmp_grad[idx_copy[t] * width + j] += g[t * width + j];
                           }
                         }
                       }
                     };
                   });
}

Tensor scatter_rows(const Tensor& src, const std::vector<std::size_t>& indices,
                    std::size_t m) {
  node_of(src, "scatter_rows");
  const bool mat = src.rank() == 2;
  const std::size_t srows = mat ? src.rows() : src.size();
  const std::size_t width = mat ? src.cols() : 1;
  if (indices.size() != srows) {
    throw ContractError("scatter_rows: " + std::to_string(indices.size()) + " indices for " +
                        std::to_string(srows) + " source rows");
  }
  for (std::size_t idx : indices) {
    if (idx >= m) {
      throw ContractError("scatter_rows: index " + std::to_string(idx) +
                          " out of range for target with " + std::to_string(m) + " rows");
    }
  }
  const auto sd = src.data();
  std::vector<double> out(m * width, 0.0);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    for (std::size_t j = 0; j < width; ++j) {
      out[indices[t] * width + j] += sd[t * width + j];
    }
  }
  std::vector<std::size_t> oshape = mat ? std::vector<std::size_t>{m, width}
                                        : std::vector<std::size_t>{m};
  auto* sn = src.impl().get();
  auto idx_copy = indices;
  return finish_op("scatter_rows", std::move(oshape), std::move(out), {&src},
                   [sn, idx_copy, width](detail::TensorNode* on) {
                     return [sn, on, idx_copy, width] {
                       if (sn->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t t = 0; t < idx_copy.size(); ++t) {
                           for (std::size_t j = 0; j < width; ++j) {
                             sn->tmp_grad[t * width + j] += g[idx_copy[t] * width + j];
                           }
                         }
                       }
                     };
                   });
}

Tensor select_column(const Tensor& a, std::size_t col) {
  node_of(a, "select_column");
  check_rank2(a, "select_column");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (col >= n) {
    throw ContractError("select_column: column " + std::to_string(col) + " out of range for " +
                        a.shape_str());
  }
  const auto ad = a.data();
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    out[r] = ad[r * n + col];
  }
  auto* an = a.impl().get();
  return finish_op("select_column", {m}, std::move(out), {&a},
                   [an, col, n](detail::TensorNode* on) {
                     return [an, on, col, n] {
                       if (an->requires_grad) {
                         const auto& g = on->tmp_grad;
                         for (std::size_t r = 0; r < g.size(); ++r) {
                           an->tmp_grad[r * n + col] += g[r];
                         }
                       }
                     };
                   });
}

Tensor select_element(const Tensor& v, std::size_t index) {
  node_of(v, "select_element");
  check_rank1(v, "select_element");
  if (index >= v.size()) {
    throw ContractError("select_element: index " + std::to_string(index) +
                        " out of range for " + v.shape_str());
  }
  auto* vn = v.impl().get();
  return finish_op("select_element", {1}, {v.data()[index]}, {&v},
                   [vn, index](detail::TensorNode* on) {
                     return [vn, on, index] {
                       if (vn->requires_grad) {
                         vn->tmp_grad[index] += on->tmp_grad[0];
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  node_of(logits, "cross_entropy");
  check_rank2(logits, "cross_entropy");
  const std::size_t m = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(l) +
                          " out of range for " + std::to_string(c) + " classes");
    }
  }
  const auto ld = logits.data();
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = ld.data() + r * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) {
      mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(row[j] - mx);
      denom += probs[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] /= denom;
    }
    loss -= std::log(probs[r * c + static_cast<std::size_t>(labels[r])]);
  }
  loss /= static_cast<double>(m);
  auto* ln = logits.impl().get();
  auto labels_copy = labels;
  return finish_op("cross_entropy", {1}, {loss}, {&logits},
                   [ln, labels_copy, probs = std::move(probs), m, c](detail::TensorNode* on) {
                     return [ln, on, labels_copy, probs, m, c] {
                       if (ln->requires_grad) {
                         const double g = on->tmp_grad[0] / static_cast<double>(m);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t j = 0; j < c; ++j) {
                             double p = probs[r * c + j];
                             if (j == static_cast<std::size_t>(labels_copy[r])) {
                               p -= 1.0;
                             }
                             ln->tmp_grad[r * c + j] += g * p;
                           }
                         }
                       }
                     };
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, transpose(w)), b);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

/// Nodes reachable from `root` that participate in gradient flow, i.e. whose
/// requires_grad flag is set. Parents without the flag are constants.
std::vector<detail::TensorNode*> reachable_grad_nodes(detail::TensorNode* root) {
  std::vector<detail::TensorNode*> nodes;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<detail::TensorNode*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  return nodes;
}

}  // namespace

void backward(const Tensor& loss) {
  const auto& ln = node_of(loss, "backward");
  if (ln.data.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
  }
  if (!ln.requires_grad) {
    return;  // nothing trainable feeds the loss
  }
  auto* root = loss.impl().get();
  auto nodes = reachable_grad_nodes(root);
  // reverse creation order is a reverse topological order by construction
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::TensorNode* a, const detail::TensorNode* b) { return a->id > b->id; });
  for (auto* n : nodes) {
    n->tmp_grad.assign(n->data.size(), 0.0);
  }
  root->tmp_grad[0] = 1.0;
  for (auto* n : nodes) {
    if (n->backprop) {
      n->backprop();
    }
  }
  for (auto* n : nodes) {
    if (n->grad.empty()) {
      n->grad.assign(n->data.size(), 0.0);
    }
    for (std::size_t i = 0; i < n->grad.size(); ++i) {
      n->grad[i] += n->tmp_grad[i];
    }
    n->tmp_grad.clear();
  }
}

std::vector<GraphRecord> collect_graph(const Tensor& out) {
  node_of(out, "collect_graph");
  std::vector<detail::TensorNode*> nodes;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<detail::TensorNode*> stack{out.impl().get()};
  seen.insert(out.impl().get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::TensorNode* a, const detail::TensorNode* b) { return a->id < b->id; });
  std::vector<GraphRecord> records;
  records.reserve(nodes.size());
  for (auto* n : nodes) {
    GraphRecord rec;
    rec.id = n->id;
    rec.op = n->op;
    for (const auto& p : n->parents) {
      rec.parents.push_back(p->id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

bool all_finite(const Tensor& t) {
  if (!t.defined()) {
    return false;
  }
  for (double x : t.data()) {
    if (!std::isfinite(x)) {
      return false;
    }
  }
  return true;
}

}  // namespace ladder
