#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "msrl/baselines.hpp"
#include "msrl/data.hpp"

using namespace msrl;

namespace {

struct Linked {
  Matrix X;
  Vector y;
  Matrix beta;
};

Linked index_model(std::size_t n, std::size_t p, bool quadratic, std::uint64_t seed) {
  Rng rng(seed);
  Linked d{Matrix(n, p), Vector(n), Matrix(p, 1)};
  for (std::size_t j = 0; j < p; ++j) d.beta(j, 0) = rng.normal();
  d.beta /= d.beta.norm();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d.X(i, j) = rng.normal();
    const double t = d.X.row(i).dot(d.beta.col(0));
    d.y(i) = (quadratic ? t * t : t) + 0.3 * rng.normal();
  }
  return d;
}

Matrix well_conditioned(std::size_t p, Rng& rng) {
  Matrix A = Matrix::Identity(p, p);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] += rng.uniform(-0.3, 0.3);
  return A;
}

}  // namespace

TEST_CASE("slices partition the order statistics") {
  Vector y(10);
  y << 5, 3, 9, 1, 7, 0, 2, 8, 4, 6;
  const auto s = baselines::make_slices(y, 3);
  REQUIRE(s.size() == 3);
  std::size_t total = 0;
  for (const auto& h : s) total += h.size();
  CHECK(total == 10);
  CHECK(s[0].size() == 3);
  for (std::size_t i : s[0]) CHECK(y(i) < 3);
  for (std::size_t i : s[2]) CHECK(y(i) >= 6);
}

TEST_CASE("principal angles") {
  Matrix a(3, 1), b(3, 1);
  a << 1, 0, 0;
  b << 1, 1, 0;
  CHECK(baselines::principal_angle_deg(a, b) == doctest::Approx(45.0).epsilon(1e-10));
  CHECK(baselines::principal_angle_deg(a, -2.0 * a) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("SIR recovers a linear index") {
  const auto d = index_model(5000, 6, false, 1);
  const auto fit = baselines::sir(d.X, d.y, 1, 10);
  CHECK(baselines::principal_angle_deg(fit.directions, d.beta) < 5.0);
  CHECK(fit.eigenvalues.size() == 6);
  for (Eigen::Index k = 1; k < fit.eigenvalues.size(); ++k) CHECK(fit.eigenvalues(k) <= fit.eigenvalues(k - 1));

  // whitened orthonormality
  const Matrix Xc = d.X.rowwise() - d.X.colwise().mean();
  const Matrix cov = Xc.transpose() * Xc / static_cast<double>(d.X.rows());
  const Matrix gram = fit.directions.transpose() * cov * fit.directions;
  CHECK(std::abs(gram(0, 0) - 1.0) < 1e-2);

  const auto again = baselines::sir(d.X, d.y, 1, 10);
  CHECK(again.directions == fit.directions);
}

TEST_CASE("SIR sees nothing under independence") {
  Rng rng(4);
  Matrix X(5000, 5);
  Vector y(5000);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal();
  CHECK(baselines::sir(X, y, 1, 10).eigenvalues(0) < 0.05);
  CHECK(baselines::save(X, y, 1, 10).eigenvalues(0) < 0.1);
}

TEST_CASE("SAVE recovers a symmetric quadratic link") {
  const auto d = index_model(5000, 6, true, 2);
  const auto fit = baselines::save(d.X, d.y, 1, 10);
  CHECK(baselines::principal_angle_deg(fit.directions, d.beta) < 10.0);
}

TEST_CASE("affine invariance of SIR and SAVE") {
  Rng rng(9);
  for (auto method : {baselines::Method::sir, baselines::Method::save}) {
    const auto d = index_model(5000, 5, method == baselines::Method::save, 3);
    const Matrix A = well_conditioned(5, rng);
    Eigen::RowVectorXd shift(5);
    for (Eigen::Index j = 0; j < 5; ++j) shift(j) = rng.uniform(-3, 3);
    const Matrix Xt = (d.X * A).rowwise() + shift;
    const auto a = baselines::fit(method, d.X, d.y, 2, 10);
    const auto b = baselines::fit(method, Xt, d.y, 2, 10);
    // directions in X map to A^{-1} directions in X A + b
    const Matrix mapped = A.lu().solve(a.directions);
    CHECK(baselines::principal_angle_deg(mapped, b.directions) < 1.0);
  }
}

TEST_CASE("slice selection returns a candidate") {
  const auto d = index_model(600, 4, false, 5);
  const Matrix Xv = d.X.bottomRows(200);
  const Matrix Yv = d.y.tail(200);
  const std::vector<std::size_t> one{7};
  CHECK(baselines::select_slices(baselines::Method::sir, d.X.topRows(400), d.y.head(400), 1, one, Xv, Yv) == 7);
  const std::vector<std::size_t> cands{5, 10, 15, 20, 25, 30};
  const auto s = baselines::select_slices(baselines::Method::save, d.X.topRows(400), d.y.head(400), 1, cands, Xv, Yv);
  CHECK(std::find(cands.begin(), cands.end(), s) != cands.end());
  CHECK(s == baselines::select_slices(baselines::Method::save, d.X.topRows(400), d.y.head(400), 1, cands, Xv, Yv));
}

TEST_CASE("SIR read-out error on Model I") {
  const auto d = data::gen_model(data::Model::I, data::Scenario::i, 6000, 10, 11);
  const auto s = data::split(d, {5000, 0, 1000, 11});
  const auto fit = baselines::sir(s.train.X, s.train.Y.col(0), 1, 10);
  const Matrix Ptr = fit.project(s.train.X), Pte = fit.project(s.test.X);
  Matrix design(Ptr.rows(), 2);
  design << Matrix::Ones(Ptr.rows(), 1), Ptr;
  const Vector coef = design.colPivHouseholderQr().solve(s.train.Y.col(0));
  const Vector pred = (coef(0) + (Pte * coef.tail(1)).array()).matrix();
  const double ape = std::sqrt((pred - s.test.Y.col(0)).squaredNorm() / static_cast<double>(pred.size()));
  CHECK(std::abs(ape - 0.25) < 0.03);
}
