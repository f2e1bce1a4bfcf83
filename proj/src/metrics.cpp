#include "msrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "msrl/rng.hpp"

namespace msrl::metrics {

namespace {

double row_distance(const Matrix& M, Eigen::Index i, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < M.cols(); ++k) {
    const double d = M(i, k) - M(j, k);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

DistanceStats distance_stats(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows()) throw std::invalid_argument("distance statistics: row counts differ");
  const Eigen::Index n = A.rows();
  if (n < 2) throw std::invalid_argument("distance statistics: need at least 2 rows");
  // Pass 1: row means of both distance matrices.
  Vector ra = Vector::Zero(n), rb = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = row_distance(A, i, j), b = row_distance(B, i, j);
      ra(i) += a;
      ra(j) += a;
      rb(i) += b;
      rb(j) += b;
    }
  }
  const double nd = static_cast<double>(n);
  ra /= nd;
  rb /= nd;
  const double ga = ra.mean(), gb = rb.mean();
  // Pass 2: sum_ij a_ij b_ij, a_ij^2, b_ij^2.
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = row_distance(A, i, j), b = row_distance(B, i, j);
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
  }
  const double n2 = nd * nd;
  DistanceStats s;
  s.dcov2 = 2.0 * sab / n2 - 2.0 * ra.dot(rb) / nd + ga * gb;
  s.dvar2_a = 2.0 * saa / n2 - 2.0 * ra.squaredNorm() / nd + ga * ga;
  s.dvar2_b = 2.0 * sbb / n2 - 2.0 * rb.squaredNorm() / nd + gb * gb;
  return s;
}

double distance_covariance(const Matrix& A, const Matrix& B) {
  return std::sqrt(std::max(0.0, distance_stats(A, B).dcov2));
}

double distance_correlation(const Matrix& A, const Matrix& B, std::size_t row_cap, std::uint64_t seed) {
  if (A.rows() != B.rows()) throw std::invalid_argument("distance_correlation: row counts differ");
  if (row_cap >= 2 && static_cast<std::size_t>(A.rows()) > row_cap) {
    Rng rng(seed, 50);
    auto perm = rng.permutation(static_cast<std::size_t>(A.rows()));
    perm.resize(row_cap);
    std::sort(perm.begin(), perm.end());
    return distance_correlation(select_rows(A, perm), select_rows(B, perm), row_cap, seed);
  }
  const DistanceStats s = distance_stats(A, B);
  const double denom = std::sqrt(std::max(0.0, s.dvar2_a) * std::max(0.0, s.dvar2_b));
  if (s.dvar2_a <= 0.0 || s.dvar2_b <= 0.0 || !(denom > 0.0)) return 0.0;
  const double r2 = std::max(0.0, s.dcov2) / denom;
  return std::clamp(std::sqrt(r2), 0.0, 1.0);
}

// --- OLS ------------------------------------------------------------------

OlsFit fit_ols(const Matrix& features, const Vector& y) {
  const Eigen::Index n = features.rows(), p = features.cols();
  if (y.size() != n) throw std::invalid_argument("fit_ols: row counts differ");
  Eigen::MatrixXd Z(n, p + 1);
  Z.col(0).setOnes();
  Z.rightCols(p) = features;
  OlsFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  // Rounding over many rows hides exact collinearity from the default threshold.
  qr.setThreshold(1e-10);
  if (qr.rank() == p + 1 && n >= p + 1) {
    fit.coef = qr.solve(y);
    return fit;
  }
  // Ridge on the slopes only, so a constant feature reproduces the mean.
  Eigen::MatrixXd G = Z.transpose() * Z;
  for (Eigen::Index j = 1; j <= p; ++j) G(j, j) += 1e-8 * std::max(1.0, G(j, j));
  fit.coef = G.ldlt().solve(Z.transpose() * y);
  fit.ridge_fallback = true;
  return fit;
}

Vector predict_ols(const OlsFit& fit, const Matrix& features) {
  if (features.cols() + 1 != fit.coef.size()) throw std::invalid_argument("predict_ols: feature width mismatch");
  Vector out = features * fit.coef.tail(features.cols());
  out.array() += fit.coef(0);
  return out;
}

double ape_linear(const Matrix& R_train, const Matrix& Y_train, const Matrix& R_test, const Matrix& Y_test,
                  bool* ridge_fallback) {
  if (R_train.rows() != Y_train.rows() || R_test.rows() != Y_test.rows() || Y_train.cols() != Y_test.cols())
    throw std::invalid_argument("ape_linear: inconsistent shapes");
  if (R_test.rows() == 0) throw std::invalid_argument("ape_linear: empty test set");
  double sse = 0.0;
  bool fallback = false;
  for (Eigen::Index c = 0; c < Y_train.cols(); ++c) {
    const OlsFit fit = fit_ols(R_train, Y_train.col(c));
    fallback = fallback || fit.ridge_fallback;
    const Vector pred = predict_ols(fit, R_test);
    sse += (Y_test.col(c) - pred).squaredNorm();
  }
  if (ridge_fallback) *ridge_fallback = fallback;
  return std::sqrt(sse / static_cast<double>(R_test.rows()));
}

// --- Distributional checks -----------------------------------------------

double ks_statistic_uniform(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic_uniform: no samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = std::clamp(x[i], 0.0, 1.0);
    const double hi = static_cast<double>(i + 1) / n - F;
    const double lo = F - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return std::min(d, 1.0);
}

double ks_uniform(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("ks_uniform: no samples");
  for (double v : samples)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ks_uniform: value outside [0, 1]");
  return ks_statistic_uniform(samples);
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 1.0;
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

std::vector<double> kde_1d(std::span<const double> samples, double bandwidth, std::span<const double> grid) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde_1d: bandwidth must be positive");
  if (samples.empty()) throw std::invalid_argument("kde_1d: no samples");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double x : samples) {
      const double z = (grid[g] - x) / bandwidth;
      s += std::exp(-0.5 * z * z);
    }
    out[g] = s * norm;
  }
  return out;
}

// --- Reports --------------------------------------------------------------

MetricReport evaluate_representation(const Matrix& R_train, const Matrix& Y_train, const Matrix& R_test,
                                     const Matrix& Y_test) {
  MetricReport r;
  r.n_eval = static_cast<std::size_t>(R_test.rows());
  r.dc = distance_correlation(Y_test, R_test);
  r.ape = ape_linear(R_train, Y_train, R_test, Y_test);
  std::vector<double> col(static_cast<std::size_t>(R_test.rows()));
  for (Eigen::Index c = 0; c < R_test.cols(); ++c) {
    for (Eigen::Index i = 0; i < R_test.rows(); ++i) col[static_cast<std::size_t>(i)] = R_test(i, c);
    r.per_coordinate_ks.push_back(ks_statistic_uniform(col));
  }
  return r;
}

std::string csv_header(std::size_t d0) {
  std::string h = "n_eval,dc,ape";
  for (std::size_t k = 0; k < d0; ++k) h += ",ks" + std::to_string(k + 1);
  return h;
}

std::string csv_row(const MetricReport& r) {
  std::ostringstream os;
  char buf[32];
  os << r.n_eval;
  std::snprintf(buf, sizeof buf, "%.17g", r.dc);
  os << ',' << buf;
  std::snprintf(buf, sizeof buf, "%.17g", r.ape);
  os << ',' << buf;
  for (double k : r.per_coordinate_ks) {
    std::snprintf(buf, sizeof buf, "%.17g", k);
    os << ',' << buf;
  }
  return os.str();
}

}  // namespace msrl::metrics
