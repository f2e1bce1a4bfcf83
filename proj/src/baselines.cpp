#include "msrl/baselines.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "msrl/metrics.hpp"

namespace msrl::baselines {

namespace {

struct Whitened {
  Matrix Z;                // standardized predictors
  Eigen::MatrixXd inv_sqrt;  // Cov^{-1/2}
  Eigen::RowVectorXd center;
  bool ridge = false;
};

Whitened whiten(const Matrix& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Whitened w;
  w.center = X.colwise().mean();
  const Matrix Xc = X.rowwise() - w.center;
  Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Vector evals = es.eigenvalues();
  if (evals.minCoeff() <= 1e-12 * std::max(1.0, evals.maxCoeff())) {
    std::cerr << "sdr: singular predictor covariance, whitening with 1e-8 ridge\n";
    cov += 1e-8 * Eigen::MatrixXd::Identity(p, p);
    es.compute(cov);
    evals = es.eigenvalues();
    w.ridge = true;
  }
  w.inv_sqrt = es.eigenvectors() * evals.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  w.Z = Xc * w.inv_sqrt;
  return w;
}

void check_inputs(const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw std::invalid_argument("sdr: X and y row counts differ");
  if (X.rows() <= X.cols()) throw std::invalid_argument("sdr: need more rows than predictors");
  if (d < 1 || d > static_cast<std::size_t>(X.cols())) throw std::invalid_argument("sdr: need 1 <= d <= d_X");
  if (n_slices < 2 || n_slices > static_cast<std::size_t>(X.rows()))
    throw std::invalid_argument("sdr: need 2 <= n_slices <= n");
}

SDRResult finish(const Eigen::MatrixXd& kernel, const Whitened& w, std::size_t d, std::size_t n_slices) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel);
  const Eigen::Index p = kernel.rows();
  SDRResult r;
  r.eigenvalues = es.eigenvalues().reverse();
  r.standardized_directions.resize(p, static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) {
    Vector v = es.eigenvectors().col(p - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.standardized_directions.col(k) = v;
  }
  r.directions = w.inv_sqrt * r.standardized_directions;
  r.n_slices = n_slices;
  r.center = w.center;
  r.ridge_whitening = w.ridge;
  return r;
}

}  // namespace

Matrix SDRResult::project(const Matrix& X) const { return (X.rowwise() - center) * directions; }

std::vector<std::vector<std::size_t>> make_slices(const Vector& y, std::size_t n_slices) {
  const std::size_t n = static_cast<std::size_t>(y.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y(static_cast<Eigen::Index>(a)) < y(static_cast<Eigen::Index>(b));
  });
  std::vector<std::vector<std::size_t>> slices(n_slices);
  for (std::size_t h = 0; h < n_slices; ++h) {
    const std::size_t lo = h * n / n_slices, hi = (h + 1) * n / n_slices;
    slices[h].assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return slices;
}

SDRResult sir(const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices) {
  check_inputs(X, y, d, n_slices);
  const Whitened w = whiten(X);
  const Eigen::Index p = X.cols();
  const double n = static_cast<double>(X.rows());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
  for (const auto& slice : make_slices(y, n_slices)) {
    if (slice.empty()) continue;
    Vector mean = Vector::Zero(p);
    for (auto i : slice) mean += w.Z.row(static_cast<Eigen::Index>(i)).transpose();
    mean /= static_cast<double>(slice.size());
    M += (static_cast<double>(slice.size()) / n) * mean * mean.transpose();
  }
  return finish(M, w, d, n_slices);
}

SDRResult save(const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices) {
  check_inputs(X, y, d, n_slices);
  const Whitened w = whiten(X);
  const Eigen::Index p = X.cols();
  const double n = static_cast<double>(X.rows());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
  for (const auto& slice : make_slices(y, n_slices)) {
    if (slice.size() < 2) continue;
    Matrix Zh = select_rows(w.Z, slice);
    const Eigen::RowVectorXd mu = Zh.colwise().mean();
    Zh.rowwise() -= mu;
    const Eigen::MatrixXd V = (Zh.transpose() * Zh) / static_cast<double>(slice.size());
    const Eigen::MatrixXd A = I - V;
    M += (static_cast<double>(slice.size()) / n) * (A * A);
  }
  return finish(M, w, d, n_slices);
}

SDRResult fit(Method method, const Matrix& X, const Vector& y, std::size_t d, std::size_t n_slices) {
  return method == Method::sir ? sir(X, y, d, n_slices) : save(X, y, d, n_slices);
}

std::size_t select_slices(Method method, const Matrix& X, const Vector& y, std::size_t d,
                          std::span<const std::size_t> candidates, const Matrix& X_val, const Matrix& Y_val) {
  if (candidates.empty()) throw std::invalid_argument("select_slices: no candidates");
  std::size_t best = candidates.front();
  double best_dc = -1.0;
  for (auto h : candidates) {
    const SDRResult r = fit(method, X, y, d, h);
    const double dc = metrics::distance_correlation(Y_val, r.project(X_val));
    if (dc > best_dc) {
      best_dc = dc;
      best = h;
    }
  }
  return best;
}

double principal_angle_deg(const Matrix& A, const Matrix& B) {
  const Eigen::MatrixXd Qa = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() *
                             Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd Qb = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() *
                             Eigen::MatrixXd::Identity(B.rows(), B.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Qa.transpose() * Qb);
  const double smallest = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
  return std::acos(smallest) * 180.0 / std::numbers::pi;
}

}  // namespace msrl::baselines
