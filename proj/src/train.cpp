#include "msrl/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <istream>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "msrl/metrics.hpp"

namespace msrl::train {

// --- Adam -----------------------------------------------------------------

AdamState AdamState::for_params(std::span<const ad::Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

StepStatus adam_step(std::span<const ad::Tensor> params, std::span<const std::vector<double>> grads,
                     AdamState& state, const AdamConfig& cfg, Direction direction) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size())
      throw std::invalid_argument("adam_step: shape mismatch in parameter " + std::to_string(k));
    for (double g : grads[k])
      if (!std::isfinite(g)) return StepStatus::diverged;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double sign = direction == Direction::ascend ? -1.0 : 1.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    // Parameter leaves are updated in place between forward passes.
    auto& vals = params[k].node()->value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double g = sign * grads[k][i];
      if (cfg.decay_mode == WeightDecayMode::coupled) {
        g += cfg.weight_decay * vals[i];
      } else {
        vals[i] *= 1.0 - cfg.lr * cfg.weight_decay;
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      vals[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
  return StepStatus::ok;
}

// --- Configuration --------------------------------------------------------

EsMetric parse_es_metric(const std::string& s) {
  if (s == "distance_correlation" || s == "dc") return EsMetric::distance_correlation;
  if (s == "distance_covariance" || s == "dcov") return EsMetric::distance_covariance;
  if (s == "none") return EsMetric::none;
  throw std::invalid_argument("unknown early-stopping metric '" + s + "'");
}

std::string to_string(EsMetric m) {
  switch (m) {
    case EsMetric::distance_covariance: return "distance_covariance";
    case EsMetric::none: return "none";
    default: return "distance_correlation";
  }
}

Reference parse_reference(const std::string& s) {
  if (s == "uniform01" || s == "uniform") return Reference::uniform01;
  if (s == "sine_normal") return Reference::sine_normal;
  throw std::invalid_argument("unknown reference distribution '" + s + "'");
}

std::string to_string(Reference r) {
  switch (r) {
    case Reference::sine_normal: return "sine_normal";
    case Reference::custom: return "custom";
    default: return "uniform01";
  }
}

WeightDecayMode parse_decay_mode(const std::string& s) {
  if (s == "decoupled") return WeightDecayMode::decoupled;
  if (s == "coupled") return WeightDecayMode::coupled;
  throw std::invalid_argument("unknown weight-decay mode '" + s + "'");
}

std::string to_string(WeightDecayMode m) { return m == WeightDecayMode::coupled ? "coupled" : "decoupled"; }

void MSRLConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
  if (d0 < 1) throw std::invalid_argument("config: d0 must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
  if (patience > max_epochs && max_epochs > 0) throw std::invalid_argument("config: patience exceeds max_epochs");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (restarts < 1) throw std::invalid_argument("config: restarts must be >= 1");
  if (reference == Reference::custom && !custom_sampler)
    throw std::invalid_argument("config: custom reference requires a sampler");
}

AdamConfig MSRLConfig::adam() const { return {lr, weight_decay, beta1, beta2, adam_eps, decay_mode}; }

nn::MLPSpec MSRLConfig::r_spec(std::size_t d_x) const {
  return {d_x, r_hidden, d0, activation, negative_slope, r_output};
}

nn::MLPSpec MSRLConfig::d_spec(std::size_t d_y) const {
  return {d_y + d0, d_hidden, 1, activation, negative_slope, nn::OutputTransform::identity};
}

nn::MLPSpec MSRLConfig::q_spec() const {
  return {d0, q_hidden, 1, activation, negative_slope, nn::OutputTransform::identity};
}

MSRLConfig simulation_preset(data::Model model) {
  MSRLConfig c;
  c.lambda = 2.0;
  c.batch_size = 512;
  c.weight_decay = 1e-4;
  c.max_epochs = 1000;
  c.patience = 200;
  c.restarts = 10;
  c.r_hidden = {32, 16, 8};
  c.d_hidden = {16, 8};
  c.q_hidden = {16, 8};
  switch (model) {
    case data::Model::I:
    case data::Model::II:
      c.lr = 1e-3;
      c.d0 = 1;
      break;
    case data::Model::III:
      c.lr = 3e-4;
      c.d0 = 2;
      break;
    case data::Model::IV:
      c.lr = 1e-3;
      c.d0 = 2;
      break;
  }
  return c;
}

MSRLConfig dimension_preset() {
  MSRLConfig c;
  c.r_hidden = {128};
  c.d_hidden = {64};
  c.q_hidden = {64};
  c.max_epochs = 2000;
  c.lr = 1e-3;
  c.weight_decay = 1e-4;
  c.patience = 200;
  c.restarts = 10;
  return c;
}

MSRLConfig reduced(MSRLConfig cfg) {
  cfg.restarts = std::min<std::size_t>(cfg.restarts, 3);
  cfg.max_epochs = std::min<std::size_t>(cfg.max_epochs, 500);
  cfg.patience = std::min<std::size_t>(cfg.patience, 100);
  return cfg;
}

// --- Data plumbing --------------------------------------------------------

Matrix sample_reference(std::size_t n, std::size_t d0, Rng& rng) {
  Matrix U(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d0));
  for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = rng.uniform();
  return U;
}

Matrix sample_reference(const MSRLConfig& cfg, std::size_t n, Rng& rng) {
  switch (cfg.reference) {
    case Reference::sine_normal: {
      Matrix U(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.d0));
      for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = std::sin(rng.normal());
      return U;
    }
    case Reference::custom: {
      Matrix U = cfg.custom_sampler(n, cfg.d0, rng);
      if (U.rows() != static_cast<Eigen::Index>(n) || U.cols() != static_cast<Eigen::Index>(cfg.d0))
        throw std::invalid_argument("custom reference sampler returned the wrong shape");
      return U;
    }
    default: return sample_reference(n, cfg.d0, rng);
  }
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("minibatch_indices: batch_size must be >= 1");
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

// --- Training -------------------------------------------------------------

namespace {

// Stream tags keep the per-restart generators disjoint.
enum Stream : std::uint64_t { kInitR = 1, kInitD, kInitQ, kReference, kShuffle, kPermute };

std::uint64_t stream_id(std::size_t restart, Stream s) { return static_cast<std::uint64_t>(restart) * 64 + s; }

std::uint64_t init_seed(std::uint64_t seed, std::size_t restart, Stream s) {
  Rng r(seed, stream_id(restart, s));
  return r.next();
}

std::vector<std::vector<double>> grads_for(const ad::GradientMap& g, std::span<const ad::Tensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(g.of(p));
  return out;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

double validation_metric(EsMetric metric, const nn::MLP& R, const data::Dataset& val) {
  const Matrix r = R.predict(val.X);
  if (!r.allFinite()) return -std::numeric_limits<double>::infinity();
  switch (metric) {
    case EsMetric::distance_covariance: {
      if (static_cast<std::size_t>(val.n()) > metrics::kDistanceRowCap) {
        Rng rng(0, 50);
        auto perm = rng.permutation(val.n());
        perm.resize(metrics::kDistanceRowCap);
        std::sort(perm.begin(), perm.end());
        return metrics::distance_covariance(select_rows(val.Y, perm), select_rows(r, perm));
      }
      return metrics::distance_covariance(val.Y, r);
    }
    default: return metrics::distance_correlation(val.Y, r);
  }
}

TrainedModel train_restart(const data::Dataset& train, const data::Dataset& val, const MSRLConfig& cfg,
                           std::size_t restart) {
  cfg.validate();
  train.validate();
  if (train.categorical()) throw std::invalid_argument("train_restart: categorical responses are not supported here");
  const bool early_stopping = cfg.es_metric != EsMetric::none;
  if (early_stopping && val.n() == 0) throw std::invalid_argument("train_restart: validation data required");
  if (early_stopping && val.n() < 2) throw std::invalid_argument("train_restart: validation needs >= 2 rows");

  TrainedModel model;
  model.restart_index = restart;
  model.R = nn::MLP::init(cfg.r_spec(train.dx()), init_seed(cfg.seed, restart, kInitR));
  model.D = nn::MLP::init(cfg.d_spec(train.dy()), init_seed(cfg.seed, restart, kInitD));
  model.Q = nn::MLP::init(cfg.q_spec(), init_seed(cfg.seed, restart, kInitQ));
  if (cfg.max_epochs == 0) return model;

  Rng ref_rng(cfg.seed, stream_id(restart, kReference));
  Rng shuffle_rng(cfg.seed, stream_id(restart, kShuffle));
  Rng perm_rng(cfg.seed, stream_id(restart, kPermute));
  const Matrix U = sample_reference(cfg, train.n(), ref_rng);

  const auto r_params = model.R.parameters();
  const auto d_params = model.D.parameters();
  const auto q_params = model.Q.parameters();
  AdamState r_state = AdamState::for_params(r_params);
  AdamState d_state = AdamState::for_params(d_params);
  AdamState q_state = AdamState::for_params(q_params);
  const AdamConfig adam = cfg.adam();
  const std::size_t m = std::min(cfg.batch_size, train.n());

  std::optional<TrainedModel> best;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  auto diverged = [&](std::size_t epoch, const char* what) {
    throw TrainingError("restart " + std::to_string(restart) + " diverged at epoch " + std::to_string(epoch) + " (" +
                        what + ")");
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t n_batches = 0;
    for (const auto& idx : minibatch_indices(train.n(), m, shuffle_rng)) {
      const ad::Tensor Xb = to_tensor(select_rows(train.X, idx));
      const ad::Tensor Yb = to_tensor(select_rows(train.Y, idx));
      const ad::Tensor Ub = to_tensor(select_rows(U, idx));
      const bool exact = objective::use_exact(cfg.loss_mode, idx.size());

      auto mi_of = [&](const ad::Tensor& r, objective::Critic critic) {
        if (exact) return objective::mi_term(model.D, Yb, r, critic);
        const auto sigma = objective::sample_derangement(idx.size(), perm_rng);
        return objective::mi_term_permuted(model.D, Yb, r, sigma, critic);
      };

      // Critics ascend with the representer held fixed.
      {
        const ad::Tensor r_fixed = ad::detach(model.R.forward_frozen(Xb));
        const auto mi = mi_of(r_fixed, objective::Critic::trainable);
        const auto push = objective::push_term(model.Q, r_fixed, Ub, objective::Critic::trainable);
        const ad::Tensor critic_obj = mi.value + push.value;
        if (!finite(critic_obj.item())) diverged(epoch, "critic objective");
        const ad::GradientMap g = ad::backward(critic_obj);
        if (adam_step(d_params, grads_for(g, d_params), d_state, adam, Direction::ascend) == StepStatus::diverged ||
            adam_step(q_params, grads_for(g, q_params), q_state, adam, Direction::ascend) == StepStatus::diverged)
          diverged(epoch, "critic gradient");
      }
      // Representer descends lambda * push - mi with the critics held fixed.
      {
        const ad::Tensor r = model.R.forward(Xb);
        const auto mi = mi_of(r, objective::Critic::frozen);
        const auto push = objective::push_term(model.Q, r, Ub, objective::Critic::frozen);
        const ad::Tensor total = ad::scale(push.value, cfg.lambda) - mi.value;
        if (!finite(total.item())) diverged(epoch, "representer objective");
        const ad::GradientMap g = ad::backward(total);
        if (adam_step(r_params, grads_for(g, r_params), r_state, adam, Direction::descend) == StepStatus::diverged)
          diverged(epoch, "representer gradient");
        rec.mi_term += mi.value.item();
        rec.push_term += push.value.item();
        rec.total += total.item();
        rec.saturations += mi.saturated + push.saturated;
        ++n_batches;
      }
    }
    if (n_batches > 0) {
      rec.mi_term /= static_cast<double>(n_batches);
      rec.push_term /= static_cast<double>(n_batches);
      rec.total /= static_cast<double>(n_batches);
    }
    if (!model.R.all_finite()) diverged(epoch, "non-finite parameters");

    rec.val_metric = early_stopping ? validation_metric(cfg.es_metric, model.R, val)
                                    : std::numeric_limits<double>::quiet_NaN();
    model.history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(restart, rec, model.R);

    if (!early_stopping) {
      model.best_epoch = epoch;
      continue;
    }
    if (rec.val_metric > best_metric) {
      best_metric = rec.val_metric;
      since_best = 0;
      best.emplace();
      best->R = model.R;
      best->D = model.D;
      best->Q = model.Q;
      model.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (best) {
    model.R.assign_parameters(best->R);
    model.D.assign_parameters(best->D);
    model.Q.assign_parameters(best->Q);
  }
  model.best_val_metric = early_stopping ? best_metric : std::numeric_limits<double>::quiet_NaN();
  return model;
}

TrainedModel train_msrl(const data::Dataset& train, const data::Dataset& val, const MSRLConfig& cfg) {
  cfg.validate();
  const std::size_t R = cfg.restarts;
  std::vector<std::optional<TrainedModel>> results(R);
  std::vector<std::string> errors(R);

  auto run = [&](std::size_t k) {
    try {
      results[k] = train_restart(train, val, cfg, k);
    } catch (const TrainingError& e) {
      errors[k] = e.what();
    }
  };

  std::size_t workers = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  workers = std::min(workers, R);
  if (workers <= 1) {
    for (std::size_t k = 0; k < R; ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < R; k = next++) run(k);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<RestartSummary> summaries;
  std::optional<std::size_t> chosen;
  for (std::size_t k = 0; k < R; ++k) {
    RestartSummary s;
    s.restart = k;
    if (!results[k]) {
      s.diverged = true;
      std::cerr << "msrl: " << errors[k] << '\n';
    } else {
      s.epochs_run = results[k]->history.size();
      s.best_epoch = results[k]->best_epoch;
      s.best_val_metric = results[k]->best_val_metric;
      // Strict comparison keeps the lowest index on ties; NaN (no early stopping) keeps the first.
      if (!chosen || s.best_val_metric > results[*chosen]->best_val_metric) chosen = k;
    }
    summaries.push_back(s);
  }
  if (!chosen) throw TrainingError("all " + std::to_string(R) + " restarts diverged");
  TrainedModel out = std::move(*results[*chosen]);
  out.restarts = std::move(summaries);
  return out;
}

// --- Critic refit ---------------------------------------------------------

nn::MLP train_critic(const Matrix& Y, const Matrix& representation, const Matrix& Y_val,
                     const Matrix& representation_val, const CriticConfig& cfg, const nn::MLP* init) {
  if (Y.rows() != representation.rows() || Y.rows() < 2)
    throw std::invalid_argument("train_critic: need >= 2 rows with matching Y and representation");
  const nn::MLPSpec spec{static_cast<std::size_t>(Y.cols() + representation.cols()), cfg.hidden, 1, cfg.activation,
                         cfg.negative_slope, nn::OutputTransform::identity};
  nn::MLP D = init ? *init : nn::MLP::init(spec, Rng(cfg.seed, 7001).next());
  if (!(D.spec() == spec)) throw std::invalid_argument("train_critic: warm-start critic has the wrong spec");
  const auto params = D.parameters();
  AdamState state = AdamState::for_params(params);
  const AdamConfig adam{cfg.lr, cfg.weight_decay};
  Rng shuffle_rng(cfg.seed, 7002), perm_rng(cfg.seed, 7003);

  Matrix yv = Y_val, rv = representation_val;
  if (static_cast<std::size_t>(yv.rows()) > cfg.val_rows) {
    yv = Y_val.topRows(static_cast<Eigen::Index>(cfg.val_rows));
    rv = representation_val.topRows(static_cast<Eigen::Index>(cfg.val_rows));
  }
  const bool use_val = yv.rows() >= 2;
  nn::MLP best = D;
  double best_est = use_val ? objective::mi_estimate(D, yv, rv) : 0.0;
  std::size_t since = 0;
  const std::size_t n = static_cast<std::size_t>(Y.rows());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (const auto& idx : minibatch_indices(n, std::min(cfg.batch_size, n), shuffle_rng)) {
      const ad::Tensor Yb = to_tensor(select_rows(Y, idx));
      const ad::Tensor rb = to_tensor(select_rows(representation, idx));
      objective::Term mi;
      if (objective::use_exact(cfg.loss_mode, idx.size())) {
        mi = objective::mi_term(D, Yb, rb);
      } else {
        const auto sigma = objective::sample_derangement(idx.size(), perm_rng);
        mi = objective::mi_term_permuted(D, Yb, rb, sigma);
      }
      if (!finite(mi.value.item())) throw TrainingError("train_critic: non-finite objective");
      const ad::GradientMap g = ad::backward(mi.value);
      if (adam_step(params, grads_for(g, params), state, adam, Direction::ascend) == StepStatus::diverged)
        throw TrainingError("train_critic: non-finite gradient");
    }
    if (!use_val) continue;
    const double est = objective::mi_estimate(D, yv, rv);
    if (est > best_est) {
      best_est = est;
      best.assign_parameters(D);
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  if (!use_val) return D;
  return best;
}

// --- Persistence ----------------------------------------------------------

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_history(std::ostream& os, const TrainedModel& model) {
  os << "# restart=" << model.restart_index << " best_epoch=" << model.best_epoch
     << " best_val_metric=" << g17(model.best_val_metric) << '\n';
  for (const auto& s : model.restarts)
    os << "# restart " << s.restart << (s.diverged ? " diverged" : "") << " epochs=" << s.epochs_run
       << " best_epoch=" << s.best_epoch << " best_val_metric=" << g17(s.best_val_metric) << '\n';
  os << "epoch,mi_term,push_term,total,val_metric\n";
  for (const auto& r : model.history)
    os << r.epoch << ',' << g17(r.mi_term) << ',' << g17(r.push_term) << ',' << g17(r.total) << ','
       << g17(r.val_metric) << '\n';
}

void save_model(std::ostream& os, const TrainedModel& model) {
  os << "msrl-model 1\n";
  os << "restart " << model.restart_index << "\nbest_epoch " << model.best_epoch << "\nbest_val_metric "
     << g17(model.best_val_metric) << '\n';
  os << "[R]\n";
  nn::save(os, model.R);
  os << "[D]\n";
  nn::save(os, model.D);
  os << "[Q]\n";
  nn::save(os, model.Q);
}

TrainedModel load_model(std::istream& is) {
  std::string tok;
  int version = 0;
  if (!(is >> tok >> version) || tok != "msrl-model" || version != 1)
    throw std::runtime_error("model file: bad header");
  TrainedModel m;
  std::string metric;
  auto expect = [&](const std::string& key) {
    if (!(is >> tok) || tok != key) throw std::runtime_error("model file: expected '" + key + "'");
  };
  expect("restart");
  is >> m.restart_index;
  expect("best_epoch");
  is >> m.best_epoch;
  expect("best_val_metric");
  is >> metric;
  m.best_val_metric = std::strtod(metric.c_str(), nullptr);
  expect("[R]");
  m.R = nn::load(is);
  expect("[D]");
  m.D = nn::load(is);
  expect("[Q]");
  m.Q = nn::load(is);
  return m;
}

}  // namespace msrl::train
