#include "msrl/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace msrl::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

struct Dims {
  std::size_t r, c;
};

Dims dims2(const Shape& s) {
  if (s.empty()) return {1, 1};
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw DimensionError("tensors above 2-D are not supported: " + shape_str(s));
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

Tensor make(Shape shape, std::vector<double> value, const char* op, std::vector<NodePtr> parents,
            BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  n->requires_grad = any;
  if (any) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return Tensor(std::move(n));
}

// Binary elementwise op with 2-D broadcasting of singleton dimensions.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA dfa, DB dfb) {
  check_defined(a, op);
  check_defined(b, op);
  const Dims da = dims2(a.shape()), db = dims2(b.shape());
  auto pick = [op, &a, &b](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": shapes not broadcast-compatible " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  };
  const std::size_t R = pick(da.r, db.r), C = pick(da.c, db.c);
  Shape out_shape;
  if (dims2(a.shape()).r == R && dims2(a.shape()).c == C) {
    out_shape = a.shape();
  } else if (db.r == R && db.c == C) {
    out_shape = b.shape();
  } else {
    out_shape = {R, C};
  }
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(R * C);
  const bool same = da.r == R && da.c == C && db.r == R && db.c == C;
  if (same) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k], bv[k]);
  } else {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j)
        out[i * C + j] = f(av[(da.r == 1 ? 0 : i) * da.c + (da.c == 1 ? 0 : j)],
                           bv[(db.r == 1 ? 0 : i) * db.c + (db.c == 1 ? 0 : j)]);
  }
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out_shape), std::move(out), op, {an, bn},
              [an, bn, da, db, R, C, dfa, dfb](std::span<const double> g, std::span<const std::span<double>> pg) {
                const auto& av = an->value;
                const auto& bv = bn->value;
                for (std::size_t i = 0; i < R; ++i) {
                  for (std::size_t j = 0; j < C; ++j) {
                    const std::size_t ia = (da.r == 1 ? 0 : i) * da.c + (da.c == 1 ? 0 : j);
                    const std::size_t ib = (db.r == 1 ? 0 : i) * db.c + (db.c == 1 ? 0 : j);
                    const double go = g[i * C + j];
                    if (!pg[0].empty()) pg[0][ia] += go * dfa(av[ia], bv[ib]);
                    if (!pg[1].empty()) pg[1][ib] += go * dfb(av[ia], bv[ib]);
                  }
                }
              });
}

// Unary elementwise op whose adjoint depends on the input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, const char* op, F f, D df) {
  check_defined(a, op);
  const auto& av = a.node()->value;
  std::vector<double> out(av.size());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  NodePtr an = a.node();
  auto t = make(a.shape(), std::move(out), op, {an}, {});
  if (t.requires_grad()) {
    std::weak_ptr<Node> self = t.node();
    t.node()->backward = [an, self, df](std::span<const double> g, std::span<const std::span<double>> pg) {
      auto me = self.lock();
      const auto& x = an->value;
      const auto& y = me->value;
      for (std::size_t k = 0; k < x.size(); ++k) pg[0][k] += g[k] * df(x[k], y[k]);
    };
  }
  return t;
}

}  // namespace

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (product(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return requires_grad ? variable(std::move(shape), std::vector<double>(n, 0.0))
                       : constant(std::move(shape), std::vector<double>(n, 0.0));
}

std::size_t Tensor::rows() const { return dims2(shape()).r; }
std::size_t Tensor::cols() const { return dims2(shape()).c; }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw std::logic_error("only leaf tensors can be modified in place");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor detach(const Tensor& t) { return Tensor::constant(t.shape(), t.node()->value); }

// --- Linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = MapC(a.node()->value.data(), m, k) * MapC(b.node()->value.data(), k, n);
  NodePtr an = a.node(), bn = b.node();
  return make({m, n}, std::move(out), "matmul", {an, bn},
              [an, bn, m, k, n](std::span<const double> g, std::span<const std::span<double>> pg) {
                MapC G(g.data(), m, n);
                if (!pg[0].empty()) Map(pg[0].data(), m, k).noalias() += G * MapC(bn->value.data(), k, n).transpose();
                if (!pg[1].empty()) Map(pg[1].data(), k, n).noalias() += MapC(an->value.data(), m, k).transpose() * G;
              });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check_defined(x, "linear");
  check_defined(w, "linear");
  check_defined(bias, "linear");
  const Dims dx = dims2(x.shape());
  if (w.ndim() != 2 || dx.c != w.shape()[1] || bias.size() != w.shape()[0])
    throw DimensionError("linear: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) + ", bias " +
                         shape_str(bias.shape()));
  const std::size_t m = dx.r, in = dx.c, out_dim = w.shape()[0];
  std::vector<double> out(m * out_dim);
  Map O(out.data(), m, out_dim);
  O.noalias() = MapC(x.node()->value.data(), m, in) * MapC(w.node()->value.data(), out_dim, in).transpose();
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.node()->value.data(), out_dim);
  NodePtr xn = x.node(), wn = w.node(), bn = bias.node();
  return make({m, out_dim}, std::move(out), "linear", {xn, wn, bn},
              [xn, wn, m, in, out_dim](std::span<const double> g, std::span<const std::span<double>> pg) {
                MapC G(g.data(), m, out_dim);
                if (!pg[0].empty()) Map(pg[0].data(), m, in).noalias() += G * MapC(wn->value.data(), out_dim, in);
                if (!pg[1].empty())
                  Map(pg[1].data(), out_dim, in).noalias() += G.transpose() * MapC(xn->value.data(), m, in);
                if (!pg[2].empty())
                  Eigen::Map<Eigen::RowVectorXd>(pg[2].data(), out_dim) += G.colwise().sum();
              });
}

// --- Elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  return unary(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  auto t = unary(
      a, "exp", [](double x) { return std::exp(std::min(x, kExpClamp)); },
      [](double x, double y) { return x > kExpClamp ? 0.0 : y; });
  std::size_t sat = 0;
  for (double x : a.values())
    if (x > kExpClamp) ++sat;
  t.node()->saturated = sat;
  return t;
}

Tensor log(const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0.0)) throw std::domain_error("log of non-positive value " + std::to_string(x));
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double alpha) {
  return unary(
      a, "leaky_relu", [alpha](double x) { return x > 0.0 ? x : alpha * x; },
      [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// --- Reductions -----------------------------------------------------------

namespace {

Tensor reduce_all(const Tensor& a, double factor, const char* op) {
  check_defined(a, op);
  double s = 0.0;
  for (double x : a.values()) s += x;
  NodePtr an = a.node();
  return make({}, {s * factor}, op, {an}, [factor](std::span<const double> g, std::span<const std::span<double>> pg) {
    const double v = g[0] * factor;
    for (double& x : pg[0]) x += v;
  });
}

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool average, const char* op) {
  check_defined(a, op);
  if (a.ndim() != 2 || axis > 1)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(a.shape()));
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  const std::size_t len = axis == 0 ? C : R;
  const double factor = average ? 1.0 / static_cast<double>(axis == 0 ? R : C) : 1.0;
  std::vector<double> out(len, 0.0);
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[axis == 0 ? j : i] += av[i * C + j];
  for (double& v : out) v *= factor;
  NodePtr an = a.node();
  return make({len}, std::move(out), op, {an},
              [R, C, axis, factor](std::span<const double> g, std::span<const std::span<double>> pg) {
                for (std::size_t i = 0; i < R; ++i)
                  for (std::size_t j = 0; j < C; ++j) pg[0][i * C + j] += factor * g[axis == 0 ? j : i];
              });
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_all(a, 1.0, "sum"); }
Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  return reduce_all(a, 1.0 / static_cast<double>(a.size()), "mean");
}
Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, false, "sum_axis"); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, true, "mean_axis"); }

// --- Structural -----------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_defined(a, "concat_cols");
  check_defined(b, "concat_cols");
  const Dims da = dims2(a.shape()), db = dims2(b.shape());
  if (a.ndim() != 2 || b.ndim() != 2 || da.r != db.r)
    throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t R = da.r, C = da.c + db.c;
  std::vector<double> out(R * C);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < R; ++i) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * da.c), da.c, out.begin() + static_cast<std::ptrdiff_t>(i * C));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i * db.c), db.c,
                out.begin() + static_cast<std::ptrdiff_t>(i * C + da.c));
  }
  NodePtr an = a.node(), bn = b.node();
  return make({R, C}, std::move(out), "concat_cols", {an, bn},
              [R, C, da, db](std::span<const double> g, std::span<const std::span<double>> pg) {
                for (std::size_t i = 0; i < R; ++i) {
                  if (!pg[0].empty())
                    for (std::size_t j = 0; j < da.c; ++j) pg[0][i * da.c + j] += g[i * C + j];
                  if (!pg[1].empty())
                    for (std::size_t j = 0; j < db.c; ++j) pg[1][i * db.c + j] += g[i * C + da.c + j];
                }
              });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  check_defined(a, "gather_rows");
  if (a.ndim() != 2) throw DimensionError("gather_rows: expected 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  std::vector<double> out(rows.size() * C);
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R) throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " out of range");
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(rows[i] * C), C,
                out.begin() + static_cast<std::ptrdiff_t>(i * C));
  }
  NodePtr an = a.node();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make({rows.size(), C}, std::move(out), "gather_rows", {an},
              [idx = std::move(idx), C](std::span<const double> g, std::span<const std::span<double>> pg) {
                for (std::size_t i = 0; i < idx.size(); ++i)
                  for (std::size_t j = 0; j < C; ++j) pg[0][idx[i] * C + j] += g[i * C + j];
              });
}

Tensor column(const Tensor& a, std::size_t j) {
  check_defined(a, "column");
  if (a.ndim() != 2 || j >= a.shape()[1])
    throw DimensionError("column: index " + std::to_string(j) + " invalid for shape " + shape_str(a.shape()));
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  std::vector<double> out(R);
  for (std::size_t i = 0; i < R; ++i) out[i] = a.node()->value[i * C + j];
  NodePtr an = a.node();
  return make({R, 1}, std::move(out), "column", {an},
              [R, C, j](std::span<const double> g, std::span<const std::span<double>> pg) {
                for (std::size_t i = 0; i < R; ++i) pg[0][i * C + j] += g[i];
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (product(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  NodePtr an = a.node();
  return make(std::move(shape), an->value, "reshape", {an},
              [](std::span<const double> g, std::span<const std::span<double>> pg) {
                for (std::size_t k = 0; k < g.size(); ++k) pg[0][k] += g[k];
              });
}

// --- Backward -------------------------------------------------------------

std::vector<double> GradientMap::of(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) return std::vector<double>(leaf.size(), 0.0);
  return it->second;
}

std::span<const double> GradientMap::at(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw std::out_of_range("no gradient recorded for tensor");
  return it->second;
}

GradientMap backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  GradientMap result;
  if (!loss.requires_grad()) return result;

  // Iterative post-order DFS restricted to nodes on a gradient path.
  std::vector<Node*> order;
  std::unordered_map<const Node*, std::size_t> index;
  {
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::unordered_map<const Node*, bool> visited;
    stack.emplace_back(loss.node().get(), 0);
    visited[loss.node().get()] = true;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && !visited[p]) {
          visited[p] = true;
          stack.emplace_back(p, 0);
        }
      } else {
        index[node] = order.size();
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::vector<std::vector<double>> grads(order.size());
  grads.back().assign(1, 1.0);
  std::vector<std::span<double>> parent_spans;
  for (std::size_t k = order.size(); k-- > 0;) {
    Node* node = order[k];
    if (grads[k].empty()) continue;
    if (node->parents.empty()) continue;
    parent_spans.assign(node->parents.size(), std::span<double>());
    for (std::size_t p = 0; p < node->parents.size(); ++p) {
      Node* parent = node->parents[p].get();
      if (!parent->requires_grad) continue;
      auto& g = grads[index.at(parent)];
      if (g.empty()) g.assign(parent->value.size(), 0.0);
      parent_spans[p] = g;
    }
    node->backward(grads[k], parent_spans);
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k]->parents.empty()) {
      auto& g = grads[k];
      if (g.empty()) g.assign(order[k]->value.size(), 0.0);
      result.grads_.emplace(order[k], std::move(g));
    }
  }
  return result;
}

// --- Gradient check -------------------------------------------------------

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params, double eps) {
  const Tensor loss = f();
  const GradientMap grads = backward(loss);
  double worst = 0.0;
  for (const Tensor& p : params) {
    const std::vector<double> ad = grads.of(p);
    auto& vals = p.node()->value;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double saved = vals[k];
      vals[k] = saved + eps;
      const double up = f().item();
      vals[k] = saved - eps;
      const double down = f().item();
      vals[k] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(ad[k]), std::abs(fd)});
      worst = std::max(worst, std::abs(ad[k] - fd) / denom);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  const Tensor leaf = Tensor::variable(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  const Tensor params[] = {leaf};
  return grad_check([&] { return f(leaf); }, params, eps);
}

}  // namespace msrl::ad
