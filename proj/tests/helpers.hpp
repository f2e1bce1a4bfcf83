#pragma once

#include <vector>

#include "msrl/autodiff.hpp"
#include "msrl/matrix.hpp"
#include "msrl/nn.hpp"
#include "msrl/rng.hpp"

namespace msrl::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, bool grad = false) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return grad ? ad::Tensor::variable({rows, cols}, v) : ad::Tensor::constant({rows, cols}, v);
}

/// Single affine layer out = W x + b with given values.
inline nn::MLP affine(std::size_t in, std::vector<double> w, double b) {
  nn::MLPSpec spec{in, {}, 1};
  return nn::MLP(spec, {{ad::Tensor::variable({1, in}, std::move(w)), ad::Tensor::variable({1}, {b})}});
}

/// Network whose parameters are all zero.
inline nn::MLP zero_net(const nn::MLPSpec& spec) {
  nn::MLP net = nn::MLP::init(spec, 1);
  for (const auto& p : net.parameters()) {
    auto v = ad::Tensor(p).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  return net;
}

}  // namespace msrl::test
