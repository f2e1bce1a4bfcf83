#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "msrl/matrix.hpp"

namespace msrl::metrics {

/// Rows above this are subsampled (seeded) before the O(n^2) distance statistics.
inline constexpr std::size_t kDistanceRowCap = 5000;

struct DistanceStats {
  double dcov2 = 0.0;  // squared distance covariance (V-statistic)
  double dvar2_a = 0.0;
  double dvar2_b = 0.0;
};

/// Squared distance covariance and variances from double-centered Euclidean
/// distance matrices, computed in O(n^2) time and O(n) memory.
DistanceStats distance_stats(const Matrix& A, const Matrix& B);
double distance_covariance(const Matrix& A, const Matrix& B);
/// Value in [0, 1]; 0 when either sample is constant. Inputs above `row_cap`
/// rows are subsampled with `seed`.
double distance_correlation(const Matrix& A, const Matrix& B, std::size_t row_cap = kDistanceRowCap,
                            std::uint64_t seed = 0);

struct OlsFit {
  Vector coef;  // intercept first
  bool ridge_fallback = false;
};

/// Least squares with intercept; falls back to a 1e-8 ridge when the design
/// is rank deficient. Multi-column Y is fit column by column.
OlsFit fit_ols(const Matrix& features, const Vector& y);
Vector predict_ols(const OlsFit& fit, const Matrix& features);

/// Root-mean-square test error of an OLS read-out fit on the training features.
double ape_linear(const Matrix& R_train, const Matrix& Y_train, const Matrix& R_test, const Matrix& Y_test,
                  bool* ridge_fallback = nullptr);

/// One-sample Kolmogorov-Smirnov statistic against Uniform[0, 1].
/// Throws std::invalid_argument for empty input or values outside [0, 1].
double ks_uniform(std::span<const double> samples);
/// Same statistic against the Uniform[0, 1] CDF clamp(t, 0, 1), accepting
/// values anywhere on the line (mass outside [0, 1] counts against the fit).
double ks_statistic_uniform(std::span<const double> samples);

double silverman_bandwidth(std::span<const double> samples);
/// Gaussian kernel density estimate evaluated on `grid`.
std::vector<double> kde_1d(std::span<const double> samples, double bandwidth, std::span<const double> grid);

struct MetricReport {
  double dc = 0.0;
  double ape = 0.0;
  std::vector<double> per_coordinate_ks;
  std::size_t n_eval = 0;
};

/// DC and APE on the test rows plus the per-coordinate KS statistic against
/// Uniform[0, 1].
MetricReport evaluate_representation(const Matrix& R_train, const Matrix& Y_train, const Matrix& R_test,
                                     const Matrix& Y_test);

std::string csv_header(std::size_t d0);
std::string csv_row(const MetricReport& r);

}  // namespace msrl::metrics
