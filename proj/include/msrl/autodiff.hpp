#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tensor is a handle to a graph node. Operations build the graph eagerly;
// backward() sweeps it in reverse topological order and returns the adjoints
// of every leaf created with Tensor::variable(). Intermediate nodes are owned
// by the tensors that reference them, so a graph is released as soon as the
// loss handle goes out of scope.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace msrl::ad {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inputs above this value are clamped before exponentiation.
inline constexpr double kExpClamp = 30.0;

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Adjoint of one node: receives the output gradient and one span per parent
/// (empty when that parent does not require a gradient).
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<const std::span<double>> parent_grads)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  BackwardFn backward;
  std::size_t saturated = 0;  // exp inputs clamped at kExpClamp
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return constant({}, {v}); }
  static Tensor zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  /// Row count in the 2-D view (1 for scalars and vectors).
  std::size_t rows() const;
  /// Column count in the 2-D view (length for vectors).
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  /// Writable storage; only leaves may be modified in place.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->parents.empty(); }
  const char* op() const { return node_->op; }
  std::size_t saturation_count() const { return node_->saturated; }
  const Node* id() const { return node_.get(); }
  const NodePtr& node() const { return node_; }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

/// Constant copy of `t` with no graph history.
Tensor detach(const Tensor& t);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m x in] * w[out x in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Elementwise, with 2-D broadcasting of singleton rows/columns.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
/// exp(min(x, kExpClamp)); clamped entries are counted in saturation_count().
Tensor exp(const Tensor& a);
/// Throws std::domain_error for non-positive inputs.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double alpha = 0.01);
Tensor sigmoid(const Tensor& a);

// Reductions. Scalar results have shape {}; axis reductions of a 2-D tensor
// keep the other dimension as a vector.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

// Structural
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor column(const Tensor& a, std::size_t j);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Adjoints of the variable leaves reached from a loss.
class GradientMap {
 public:
  bool contains(const Tensor& leaf) const { return grads_.count(leaf.id()) != 0; }
  /// Gradient of `leaf`; zeros if the leaf was not reachable.
  std::vector<double> of(const Tensor& leaf) const;
  std::span<const double> at(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend GradientMap backward(const Tensor& loss);
  std::unordered_map<const Node*, std::vector<double>> grads_;
};

/// Reverse sweep from a scalar loss. Gradients accumulate over every path, so
/// shared subexpressions are handled by summation.
GradientMap backward(const Tensor& loss);

/// Max over coordinates of |ad - fd| / max(1, |ad|, |fd|) with central
/// differences of step eps. Parameter values are perturbed in place and
/// restored before returning.
double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params, double eps = 1e-5);
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace msrl::ad
