#pragma once

#include <span>
#include <vector>

#include "msrl/matrix.hpp"

namespace msrl::baselines {

struct SDRResult {
  /// [d_X x d] in the original predictor scale; directions' * Cov * directions = I.
  Matrix directions;
  /// [d_X x d] orthonormal eigenvectors in the standardized scale.
  Matrix standardized_directions;
  /// All d_X kernel-matrix eigenvalues, non-increasing.
  Vector eigenvalues;
  std::size_t n_slices = 0;
  Eigen::RowVectorXd center;
  bool ridge_whitening = false;

  /// (X - center) * directions.
  Matrix project(const Matrix& X) const;
};

enum class Method { sir, save };

/// Sliced inverse regression: top-d eigenvectors of sum_h p_h m_h m_h'.
SDRResult sir(const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices);
/// Sliced average variance estimation: top-d eigenvectors of sum_h p_h (I - V_h)^2.
SDRResult save(const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices);
SDRResult fit(Method method, const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices);

/// Equal-count slices of the order statistics of y (slice h holds ranks
/// [h n / H, (h + 1) n / H)).
std::vector<std::vector<std::size_t>> make_slices(const Vector& y, std::size_t n_slices);

/// Slice count from `candidates` maximizing validation DC of the projection;
/// ties keep the earliest candidate.
std::size_t select_slices(Method method, const Matrix& X, const Vector& y, std::size_t d,
                          std::span<const std::size_t> candidates, const Matrix& X_val, const Matrix& Y_val);

/// Largest principal angle, in degrees, between the column spans of A and B.
double principal_angle_deg(const Matrix& A, const Matrix& B);

}  // namespace msrl::baselines
