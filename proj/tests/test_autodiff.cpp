#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "msrl/autodiff.hpp"

using namespace msrl;
using ad::Tensor;

namespace {

Tensor var(ad::Shape s, std::vector<double> v) { return Tensor::variable(std::move(s), std::move(v)); }
Tensor cst(ad::Shape s, std::vector<double> v) { return Tensor::constant(std::move(s), std::move(v)); }

}  // namespace

TEST_CASE("matmul values and adjoints") {
  const Tensor I = cst({2, 2}, {1, 0, 0, 1});
  const Tensor b = cst({2, 1}, {2, 3});
  const Tensor c = ad::matmul(I, b);
  CHECK(c.shape() == ad::Shape{2, 1});
  CHECK(c.at(0, 0) == 2.0);
  CHECK(c.at(1, 0) == 3.0);

  const Tensor A = var({1, 2}, {1, 2});
  const Tensor B = var({2, 1}, {3, 4});
  const Tensor AB = ad::matmul(A, B);
  CHECK(AB.item() == 11.0);
  const auto g = ad::backward(ad::sum(AB));
  CHECK(g.of(A) == std::vector<double>{3, 4});
  CHECK(g.of(B) == std::vector<double>{1, 2});

  CHECK_THROWS_AS(ad::matmul(A, A), ad::DimensionError);
}

TEST_CASE("elementwise ops") {
  const Tensor e = ad::exp(cst({2}, {0, 1}));
  CHECK(e.values()[0] == 1.0);
  CHECK(e.values()[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-15));

  const Tensor l = ad::leaky_relu(cst({2}, {-2, 3}), 0.01);
  CHECK(l.values()[0] == doctest::Approx(-0.02));
  CHECK(l.values()[1] == 3.0);

  const Tensor x = var({}, {1.0});
  CHECK(ad::backward(ad::exp(x)).of(x)[0] == doctest::Approx(std::exp(1.0)));

  CHECK_THROWS_AS(ad::log(cst({2}, {1.0, 0.0})), std::domain_error);
  CHECK_THROWS_AS(ad::log(cst({1}, {-1.0})), std::domain_error);
  CHECK_THROWS_AS(ad::add(cst({2, 3}, std::vector<double>(6)), cst({3, 2}, std::vector<double>(6))),
                  ad::DimensionError);
}

TEST_CASE("exp clamps large inputs and counts them") {
  const Tensor e = ad::exp(cst({3}, {1.0, 31.0, 100.0}));
  CHECK(e.saturation_count() == 2);
  CHECK(e.values()[1] == std::exp(ad::kExpClamp));
  CHECK(std::isfinite(e.values()[2]));
}

TEST_CASE("reductions") {
  CHECK(ad::mean(cst({3}, {1, 2, 3})).item() == 2.0);
  const Tensor s = ad::sum(cst({2, 2}, {1, 2, 3, 4}), 0);
  CHECK(s.values()[0] == 4.0);
  CHECK(s.values()[1] == 6.0);
  const Tensor r = ad::sum(cst({2, 2}, {1, 2, 3, 4}), 1);
  CHECK(r.values()[0] == 3.0);
  CHECK(r.values()[1] == 7.0);

  const Tensor ab = var({2}, {5, -1});
  CHECK(ad::backward(ad::mean(ab)).of(ab) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS(ad::sum(cst({2, 2}, {1, 2, 3, 4}), 2));
}

TEST_CASE("backward basics") {
  const Tensor x = var({}, {3.0});
  CHECK(ad::backward(x * x).of(x)[0] == 6.0);
  CHECK(ad::backward(x + x).of(x)[0] == 2.0);

  // sum(W x) over rows: each row of the gradient is x.
  const Tensor W = var({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor v = cst({2, 1}, {7, -1});
  const auto g = ad::backward(ad::sum(ad::matmul(W, v)));
  CHECK(g.of(W) == std::vector<double>{7, -1, 7, -1, 7, -1});

  CHECK_THROWS(ad::backward(W));
}

TEST_CASE("shared subexpressions accumulate like the unshared graph") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = test::random_tensor(3, 2, rng, true);
    const Tensor h = ad::leaky_relu(x) * x;
    const Tensor shared = ad::sum(ad::exp(ad::scale(h, 0.3)) + h);
    const Tensor unshared = ad::sum(ad::exp(ad::scale(ad::leaky_relu(x) * x, 0.3)) + ad::leaky_relu(x) * x);
    CHECK(shared.item() == doctest::Approx(unshared.item()).epsilon(1e-15));
    const auto a = ad::backward(shared).of(x), b = ad::backward(unshared).of(x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
  }
}

TEST_CASE("grad_check examples") {
  const Tensor x = var({}, {3.0});
  CHECK(ad::grad_check([](const Tensor& t) { return t * t; }, x, 1e-5) < 1e-6);
  const Tensor y = var({}, {2.0});
  CHECK(ad::grad_check([](const Tensor& t) { return ad::exp(t) * ad::log(t); }, y, 1e-5) < 1e-6);
  // parameters are restored
  CHECK(x.item() == 3.0);
  CHECK(y.item() == 2.0);
}

TEST_CASE("every differentiable op passes finite differences on random inputs") {
  Rng rng(11);
  using F = std::function<Tensor(const Tensor&)>;
  const Tensor other = test::random_tensor(3, 4, rng);
  const Tensor row = test::random_tensor(1, 4, rng);
  const Tensor col = test::random_tensor(3, 1, rng);
  const Tensor W = test::random_tensor(2, 4, rng);
  const Tensor b = cst({2}, {0.3, -0.7});
  const std::vector<std::size_t> rows{2, 0, 0, 1};
  const std::vector<std::pair<const char*, F>> ops{
      {"add", [&](const Tensor& t) { return ad::sum(t + other); }},
      {"sub", [&](const Tensor& t) { return ad::sum(ad::exp(other - t)); }},
      {"mul", [&](const Tensor& t) { return ad::sum(t * other); }},
      {"broadcast row", [&](const Tensor& t) { return ad::sum(ad::mul(t, row) * t); }},
      {"broadcast col", [&](const Tensor& t) { return ad::sum(ad::add(t, col) * t); }},
      {"scale", [&](const Tensor& t) { return ad::sum(ad::scale(t, -1.7) * t); }},
      {"add_scalar", [&](const Tensor& t) { return ad::sum(ad::add_scalar(t, 0.5) * t); }},
      {"exp", [&](const Tensor& t) { return ad::sum(ad::exp(t)); }},
      {"log", [&](const Tensor& t) { return ad::sum(ad::log(ad::add_scalar(t * t, 0.5))); }},
      {"relu", [&](const Tensor& t) { return ad::sum(ad::relu(t) * t); }},
      {"leaky_relu", [&](const Tensor& t) { return ad::sum(ad::leaky_relu(t, 0.2) * t); }},
      {"sigmoid", [&](const Tensor& t) { return ad::sum(ad::sigmoid(t)); }},
      {"mean axis 0", [&](const Tensor& t) { return ad::sum(ad::exp(ad::mean(t, 0))); }},
      {"sum axis 1", [&](const Tensor& t) { return ad::sum(ad::exp(ad::scale(ad::sum(t, 1), 0.3))); }},
      {"matmul", [&](const Tensor& t) { return ad::sum(ad::exp(ad::scale(ad::matmul(t, ad::reshape(other, {4, 3})), 0.2))); }},
      {"linear", [&](const Tensor& t) { return ad::sum(ad::exp(ad::scale(ad::linear(t, W, b), 0.3))); }},
      {"concat", [&](const Tensor& t) { return ad::sum(ad::exp(ad::scale(ad::concat_cols(t, t), 0.4))); }},
      {"gather", [&](const Tensor& t) { return ad::sum(ad::exp(ad::scale(ad::gather_rows(t, rows), 0.4))); }},
      {"column", [&](const Tensor& t) { return ad::sum(ad::exp(ad::column(t, 2))); }},
      {"neg", [&](const Tensor& t) { return ad::sum(-t * t); }},
  };
  for (const auto& [name, f] : ops) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor x = test::random_tensor(3, 4, rng, true);
      worst = std::max(worst, ad::grad_check(f, x, 1e-6));
    }
    INFO(name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("forward evaluation is deterministic and leaves are the only mutable tensors") {
  Rng rng(5);
  const Tensor x = test::random_tensor(4, 3, rng, true);
  const Tensor a = ad::sum(ad::exp(ad::leaky_relu(x)));
  const Tensor b = ad::sum(ad::exp(ad::leaky_relu(x)));
  CHECK(a.item() == b.item());
  Tensor derived = ad::exp(x);
  CHECK_THROWS(derived.mutable_values());
  CHECK(ad::detach(x).requires_grad() == false);
  const auto g = ad::backward(ad::sum(ad::detach(x) * x));
  CHECK(g.of(x) == std::vector<double>(x.values().begin(), x.values().end()));
}
