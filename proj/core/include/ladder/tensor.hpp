#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ladder/errors.hpp"
#include "ladder/rng.hpp"

namespace ladder {

class Tensor;

namespace detail {

/// One node of the recorded computation graph.
///
/// Nodes are created in strictly increasing id order, and an operation's
/// output node always has a larger id than its inputs, so sorting by id
/// yields a topological order and the backward pass can replay nodes in
/// exact reverse creation order.
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;      // persistent accumulator, lazily allocated
  std::vector<double> tmp_grad;  // scratch for the current backward pass
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's tmp_grad and adds contributions into the parents'
  // tmp_grad buffers. Captures raw pointers; ownership stays in `parents`.
  std::function<void()> backprop;
};

Tensor wrap(std::shared_ptr<TensorNode> node);

}  // namespace detail

/// Disables graph recording while alive (nestable, thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
///
/// Tensor is a cheap shared handle: copies alias the same storage. Rank 1
/// and rank 2 (batch x features) are the only supported layouts. Every
/// operation is a pure function of its operands; results are bit-identical
/// across calls with identical inputs.
class Tensor {
 public:
  Tensor() = default;  // undefined handle; ops reject it

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Seeded i.i.d. N(mean, stddev) entries, drawn in row-major order.
  static Tensor random_normal(std::vector<std::size_t> shape, Rng& rng,
                              double mean, double stddev,
                              bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Row/column extents; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data();
  std::span<const double> data() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;
  /// Value of a one-element tensor.
  double value() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);
  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  /// Allocates (if needed) and zero-fills the persistent gradient buffer.
  void zero_grad();

  std::string shape_str() const;

  const std::shared_ptr<detail::TensorNode>& impl() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor detail::wrap(std::shared_ptr<detail::TensorNode> node);
};

// ---------------------------------------------------------------------------
// Recorded operations
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Multiply by a compile-time constant.
Tensor scale(const Tensor& a, double c);
/// Multiply every element by a one-element tensor (gradient flows to both).
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// a[m x n] + v[n] broadcast over rows (the bias pattern).
Tensor add_rowvec(const Tensor& a, const Tensor& v);
/// Row i of a[m x n] scaled by v[i].
Tensor mul_colvec(const Tensor& a, const Tensor& v);
/// Row i of a[m x n] divided by v[i].
Tensor div_colvec(const Tensor& a, const Tensor& v);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Numerically safe softmax: rank-1 over the vector, rank-2 over each row.
Tensor softmax(const Tensor& a);
Tensor sum_all(const Tensor& a);
/// Column sums of a[m x n] -> [n].
Tensor sum_axis0(const Tensor& a);
/// Row sums of a[m x n] -> [m].
Tensor sum_axis1(const Tensor& a);
/// Rows (or elements, for rank 1) of a picked by index; duplicates allowed.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices);
/// Inverse of gather_rows: place src rows at `indices` of an m-row zero
/// tensor, accumulating on duplicate indices.
Tensor scatter_rows(const Tensor& src, const std::vector<std::size_t>& indices,
                    std::size_t m);
Tensor select_column(const Tensor& a, std::size_t col);
Tensor select_element(const Tensor& v, std::size_t index);
/// Mean negative log-likelihood of softmax(logits) at the label indices.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// x[m x d] . w[c x d]^T + b[c], the affine layer pattern.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---------------------------------------------------------------------------
// Backward pass and graph introspection
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Gradients of every reachable
/// requires_grad tensor are accumulated additively into their persistent
/// buffers; running twice without zeroing doubles them exactly.
void backward(const Tensor& loss);

struct GraphRecord {
  std::uint64_t id = 0;
  std::string op;
  std::vector<std::uint64_t> parents;
};

/// Recorded nodes reachable from `out`, in creation (topological) order.
std::vector<GraphRecord> collect_graph(const Tensor& out);

bool all_finite(const Tensor& t);

}  // namespace ladder
