#pragma once

#include <Eigen/Dense>

#include "msrl/autodiff.hpp"

namespace msrl {

/// Row-major so that rows map directly onto ad::Tensor storage.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline ad::Tensor to_tensor(const Matrix& m) {
  return ad::Tensor::constant({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                              std::vector<double>(m.data(), m.data() + m.size()));
}

inline Matrix to_matrix(const ad::Tensor& t) {
  Matrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy(t.values().begin(), t.values().end(), m.data());
  return m;
}

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace msrl
