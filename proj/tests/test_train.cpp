#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "msrl/train.hpp"

using namespace msrl;
using train::Direction;

namespace {

ad::Tensor scalar_param(double v) { return ad::Tensor::variable({1}, {v}); }

train::MSRLConfig tiny_config() {
  train::MSRLConfig cfg;
  cfg.d0 = 1;
  cfg.batch_size = 64;
  cfg.max_epochs = 6;
  cfg.patience = 3;
  cfg.restarts = 2;
  cfg.r_hidden = {8};
  cfg.d_hidden = {8};
  cfg.q_hidden = {8};
  cfg.seed = 5;
  return cfg;
}

data::Split tiny_split() {
  const data::Dataset d = data::gen_model(data::Model::I, data::Scenario::i, 300, 4, 3);
  return data::split(d, {200, 50, 50, 3});
}

}  // namespace

TEST_CASE("first Adam step in closed form") {
  train::AdamConfig cfg;
  cfg.lr = 0.1;
  const std::vector<ad::Tensor> p{scalar_param(0.0)};
  auto state = train::AdamState::for_params(p);
  const std::vector<std::vector<double>> g{{1.0}};
  CHECK(train::adam_step(p, g, state, cfg, Direction::descend) == train::StepStatus::ok);
  CHECK(state.step == 1);
  CHECK(p[0].values()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));

  const std::vector<ad::Tensor> q{scalar_param(0.0)};
  auto qs = train::AdamState::for_params(q);
  train::adam_step(q, g, qs, cfg, Direction::ascend);
  CHECK(q[0].values()[0] == -p[0].values()[0]);
}

TEST_CASE("zero gradient leaves parameters alone but counts the step") {
  const std::vector<ad::Tensor> p{ad::Tensor::variable({2}, {0.3, -1.2})};
  auto state = train::AdamState::for_params(p);
  train::AdamConfig cfg;
  const std::vector<std::vector<double>> g{{0.0, 0.0}};
  train::adam_step(p, g, state, cfg, Direction::descend);
  CHECK(state.step == 1);
  CHECK(p[0].values()[0] == 0.3);
  CHECK(p[0].values()[1] == -1.2);
}

TEST_CASE("weight decay modes") {
  train::AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  const std::vector<std::vector<double>> g{{0.0}};
  {
    const std::vector<ad::Tensor> p{scalar_param(2.0)};
    auto s = train::AdamState::for_params(p);
    train::adam_step(p, g, s, cfg, Direction::descend);
    CHECK(p[0].values()[0] == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-15));
  }
  {
    cfg.decay_mode = train::WeightDecayMode::coupled;
    const std::vector<ad::Tensor> p{scalar_param(2.0)};
    auto s = train::AdamState::for_params(p);
    train::adam_step(p, g, s, cfg, Direction::descend);
    // the gradient becomes wd * p = 1, so the first step moves by -lr
    CHECK(p[0].values()[0] == doctest::Approx(2.0 - 0.1 / (1 + 1e-8)).epsilon(1e-14));
  }
}

TEST_CASE("a NaN gradient aborts the step") {
  const std::vector<ad::Tensor> p{scalar_param(1.0)};
  auto state = train::AdamState::for_params(p);
  const std::vector<std::vector<double>> g{{std::numeric_limits<double>::quiet_NaN()}};
  CHECK(train::adam_step(p, g, state, train::AdamConfig{}, Direction::descend) == train::StepStatus::diverged);
  CHECK(state.step == 0);
  CHECK(p[0].values()[0] == 1.0);
}

TEST_CASE("Adam step 1 agrees in sign with the descent direction") {
  Rng rng(3);
  const Matrix X = test::random_matrix(8, 3, rng), Y = test::random_matrix(8, 1, rng);
  const Matrix U = test::random_matrix(8, 1, rng, 0, 1);
  const auto batch = objective::make_batch(X, Y, U);
  nn::MLP R = nn::MLP::init({3, {6}, 1}, 1);
  const nn::MLP D = nn::MLP::init({2, {6}, 1}, 2), Q = nn::MLP::init({1, {6}, 1}, 3);
  Rng mode_rng(0);
  const auto graph = objective::msrl_objective_graph(R, D, Q, 2.0, batch, objective::LossMode::exact, mode_rng);
  const auto params = R.parameters();
  const auto grads = ad::backward(graph.total);
  std::vector<std::vector<double>> g;
  std::vector<std::vector<double>> before;
  for (const auto& p : params) {
    g.push_back(grads.of(p));
    before.emplace_back(p.values().begin(), p.values().end());
  }
  auto state = train::AdamState::for_params(params);
  train::adam_step(params, g, state, train::AdamConfig{}, Direction::descend);
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < g[k].size(); ++i) CHECK((params[k].values()[i] - before[k][i]) * g[k][i] <= 0.0);
}

TEST_CASE("reference draws") {
  Rng a(42), b(42);
  const Matrix U = train::sample_reference(20000, 2, a);
  CHECK(U == train::sample_reference(20000, 2, b));
  CHECK(U.minCoeff() >= 0.0);
  CHECK(U.maxCoeff() <= 1.0);
  const double tol = 3.0 / std::sqrt(12.0 * 20000);
  for (Eigen::Index j = 0; j < 2; ++j) CHECK(std::abs(U.col(j).mean() - 0.5) < tol);

  train::MSRLConfig cfg;
  cfg.d0 = 1;
  cfg.reference = train::Reference::sine_normal;
  Rng c(1);
  const Matrix S = train::sample_reference(cfg, 1000, c);
  CHECK(S.minCoeff() >= -1.0);
  CHECK(S.minCoeff() < 0.0);
  CHECK(S.maxCoeff() <= 1.0);

  cfg.reference = train::Reference::custom;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.custom_sampler = [](std::size_t n, std::size_t d0, Rng&) { return Matrix::Constant(n, d0, 0.25); };
  Rng d(1);
  CHECK(train::sample_reference(cfg, 3, d) == Matrix::Constant(3, 1, 0.25));
}

TEST_CASE("minibatch arithmetic") {
  Rng rng(1);
  auto batches = train::minibatch_indices(10, 4, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 10);

  auto dropped = train::minibatch_indices(9, 4, rng);
  CHECK(dropped.size() == 2);

  Rng a(7), b(7);
  CHECK(train::minibatch_indices(50, 8, a) == train::minibatch_indices(50, 8, b));
}

TEST_CASE("config validation and presets") {
  train::MSRLConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.d0 = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.patience = 2000;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK(train::simulation_preset(data::Model::III).lr == 3e-4);
  CHECK(train::simulation_preset(data::Model::I).lr == 1e-3);
  CHECK(train::simulation_preset(data::Model::IV).d0 == 2);
  const auto r = train::reduced(train::dimension_preset());
  CHECK(r.restarts == 3);
  CHECK(r.max_epochs == 500);
  CHECK(r.patience <= 100);
  CHECK(train::dimension_preset().r_hidden == std::vector<std::size_t>{128});

  for (auto m : {train::EsMetric::distance_correlation, train::EsMetric::distance_covariance, train::EsMetric::none})
    CHECK(train::parse_es_metric(train::to_string(m)) == m);
  for (auto m : {train::Reference::uniform01, train::Reference::sine_normal})
    CHECK(train::parse_reference(train::to_string(m)) == m);
  // a custom sampler is a callback and cannot come from text
  CHECK_THROWS(train::parse_reference("custom"));
}

TEST_CASE("zero epochs returns the initialized networks") {
  const auto s = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 0;
  cfg.patience = 0;
  const auto model = train::train_restart(s.train, s.val, cfg, 0);
  CHECK(model.history.empty());
  CHECK(model.best_epoch == 0);
  const nn::MLP fresh = nn::MLP::init(cfg.r_spec(s.train.dx()), Rng(cfg.seed, 1).next());
  const auto a = model.R.parameters(), b = fresh.parameters();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(a[k].values()[i] == b[k].values()[i]);
}

TEST_CASE("training is deterministic and honours the selection invariants") {
  const auto s = tiny_split();
  const auto cfg = tiny_config();
  const auto a = train::train_msrl(s.train, s.val, cfg);
  const auto b = train::train_msrl(s.train, s.val, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].total == b.history[e].total);
    CHECK(a.history[e].val_metric == b.history[e].val_metric);
  }
  std::ostringstream sa, sb;
  train::save_model(sa, a);
  train::save_model(sb, b);
  CHECK(sa.str() == sb.str());

  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= a.history.size());
  for (const auto& rec : a.history) CHECK(a.history[a.best_epoch - 1].val_metric >= rec.val_metric);
  CHECK(a.best_val_metric == a.history[a.best_epoch - 1].val_metric);
  for (const auto& r : a.restarts) CHECK(a.best_val_metric >= r.best_val_metric);
  CHECK(a.best_val_metric == doctest::Approx(train::validation_metric(cfg.es_metric, a.R, s.val)).epsilon(1e-12));

  auto threaded = cfg;
  threaded.threads = 2;
  const auto c = train::train_msrl(s.train, s.val, threaded);
  std::ostringstream sc;
  train::save_model(sc, c);
  CHECK(sc.str() == sa.str());
}

TEST_CASE("patience stops a restart early") {
  const auto s = tiny_split();
  auto cfg = tiny_config();
  cfg.max_epochs = 60;
  cfg.patience = 2;
  cfg.restarts = 1;
  const auto m = train::train_msrl(s.train, s.val, cfg);
  CHECK(m.history.size() <= m.best_epoch + cfg.patience);
  CHECK(m.restarts[0].epochs_run == m.history.size());
}

TEST_CASE("early stopping off keeps the last epoch") {
  const auto s = tiny_split();
  auto cfg = tiny_config();
  cfg.es_metric = train::EsMetric::none;
  cfg.restarts = 1;
  const auto m = train::train_msrl(s.train, s.val, cfg);
  CHECK(m.history.size() == cfg.max_epochs);
  CHECK(m.best_epoch == cfg.max_epochs);
}

TEST_CASE("epoch callback sees every epoch") {
  const auto s = tiny_split();
  auto cfg = tiny_config();
  cfg.restarts = 1;
  std::size_t calls = 0;
  cfg.on_epoch = [&](std::size_t restart, const train::EpochRecord& rec, const nn::MLP&) {
    CHECK(restart == 0);
    CHECK(rec.epoch == ++calls);
  };
  const auto m = train::train_msrl(s.train, s.val, cfg);
  CHECK(calls == m.history.size());
}

TEST_CASE("model and history files round-trip") {
  const auto s = tiny_split();
  const auto m = train::train_msrl(s.train, s.val, tiny_config());
  std::stringstream ss;
  train::save_model(ss, m);
  const auto back = train::load_model(ss);
  CHECK(back.best_epoch == m.best_epoch);
  CHECK(back.restart_index == m.restart_index);
  CHECK(back.best_val_metric == m.best_val_metric);
  CHECK(back.R.predict(s.test.X) == m.R.predict(s.test.X));

  std::ostringstream log;
  train::write_history(log, m);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t rows = 0;
  bool header = false;
  while (std::getline(lines, line)) {
    if (line.rfind("#", 0) == 0) continue;
    if (!header) {
      CHECK(line == "epoch,mi_term,push_term,total,val_metric");
      header = true;
    } else {
      ++rows;
    }
  }
  CHECK(rows == m.history.size());
  std::istringstream bad("not a model\n");
  CHECK_THROWS(train::load_model(bad));
}

TEST_CASE("critic refit learns dependence") {
  const data::Dataset d = data::gen_gaussian_pair(3000, 0.8, 4);
  const data::Split s = data::split(d, {2000, 1000, 0, 1});
  train::CriticConfig cc;
  cc.max_epochs = 60;
  cc.patience = 20;
  const nn::MLP D = train::train_critic(s.train.Y, s.train.X, s.val.Y, s.val.X, cc);
  CHECK(objective::mi_estimate(D, s.val.Y, s.val.X) > 0.2);
}
