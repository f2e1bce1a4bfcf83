#include "msrl/dimsel.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <ostream>
#include <stdexcept>

#include "msrl/objective.hpp"

namespace msrl::dimsel {

void DimSelectConfig::validate(std::size_t d_x) const {
  const std::size_t du = d_upper == 0 ? d_x : d_upper;
  if (du < 1 || du > d_x) throw std::invalid_argument("dimsel: need 1 <= d_upper <= d_X");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("dimsel: eta must lie in (0, 1)");
  if (n_folds < 2) throw std::invalid_argument("dimsel: need at least 2 folds");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("dimsel: train_fraction must lie in (0, 1)");
}

Probe cv_mi_estimate(const data::Dataset& data, std::size_t k, const DimSelectConfig& cfg) {
  cfg.validate(data.dx());
  if (k < 1 || k > data.dx()) throw std::invalid_argument("cv_mi_estimate: need 1 <= k <= d_X");
  const auto folds = data::kfold(data.n(), cfg.n_folds, cfg.seed);
  Probe probe;
  probe.k = k;
  for (std::size_t t = 0; t < folds.size(); ++t) {
    if (folds[t].size() < 2) throw std::invalid_argument("cv_mi_estimate: fold with fewer than 2 rows");
    auto rest = data::complement(data.n(), folds[t]);
    Rng rng(cfg.seed, 1000 + t);
    rng.shuffle(std::span<std::size_t>(rest));
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(rest.size())));
    if (n_train < 2 || rest.size() - n_train < 2)
      throw std::invalid_argument("cv_mi_estimate: fold complement too small to split");
    const std::span<const std::size_t> all(rest);
    const data::Dataset tr = data.subset(all.first(n_train));
    const data::Dataset va = data.subset(all.subspan(n_train));
    const data::Dataset held = data.subset(folds[t]);

    train::MSRLConfig tc = cfg.train_cfg;
    tc.d0 = k;
    tc.seed = cfg.seed * 1000003 + k * 101 + t;
    train::TrainedModel m = train::train_msrl(tr, va, tc);

    nn::MLP D = m.D;
    if (cfg.refit_critic) {
      train::CriticConfig cc = cfg.critic_cfg;
      cc.hidden = tc.d_hidden;
      cc.activation = tc.activation;
      cc.negative_slope = tc.negative_slope;
      cc.seed = tc.seed;
      D = train::train_critic(tr.Y, m.R.predict(tr.X), va.Y, m.R.predict(va.X), cc, &m.D);
    }
    probe.fold_estimates.push_back(objective::mi_estimate(D, held.Y, m.R.predict(held.X)));
  }
  double s = 0.0;
  for (double v : probe.fold_estimates) s += v;
  probe.mean = s / static_cast<double>(probe.fold_estimates.size());
  return probe;
}

DimSelectTrace select_dimension(std::size_t d_upper, double eta, const Estimator& estimator) {
  if (d_upper < 1) throw std::invalid_argument("select_dimension: d_upper must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("select_dimension: eta must lie in (0, 1)");
  DimSelectTrace trace;
  std::map<std::size_t, double> memo;
  auto estimate = [&](std::size_t k) {
    if (auto it = memo.find(k); it != memo.end()) return it->second;
    trace.probes.push_back(estimator(k));
    return memo[k] = trace.probes.back().mean;
  };

  std::size_t upper = d_upper, lower = 1;
  double mi = estimate(upper);
  if (!(mi > 0.0)) {
    std::cerr << "dimsel: estimate at d_upper is not positive (" << mi << "), selection unreliable\n";
    trace.unreliable = true;
    trace.selected = d_upper;
    return trace;
  }
  while (upper > lower) {
    const std::size_t u = (upper + lower) / 2;
    const double iu = estimate(u);
    const bool accept = std::abs(iu - mi) / mi <= eta;
    if (accept) {
      upper = u;
      mi = std::max(iu, 0.0);
    } else {
      lower = u + 1;
    }
    trace.decisions.push_back({u, accept, upper, lower});
  }
  trace.selected = upper;
  return trace;
}

DimSelectTrace select_dimension(const data::Dataset& data, const DimSelectConfig& cfg) {
  cfg.validate(data.dx());
  const std::size_t du = cfg.d_upper == 0 ? data.dx() : cfg.d_upper;
  return select_dimension(du, cfg.eta, [&](std::size_t k) { return cv_mi_estimate(data, k, cfg); });
}

void write_trace(std::ostream& os, const DimSelectTrace& trace) {
  char buf[40];
  auto g = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  // Decisions follow the probe order: decision i belongs to probe i + 1.
  for (std::size_t i = 0; i < trace.probes.size(); ++i) {
    const auto& p = trace.probes[i];
    os << "probe k=" << p.k << " folds=";
    for (std::size_t j = 0; j < p.fold_estimates.size(); ++j) os << (j ? "," : "") << g(p.fold_estimates[j]);
    os << " mean=" << g(p.mean);
    if (i == 0) {
      os << " init UD=" << p.k << " LD=1";
    } else if (i - 1 < trace.decisions.size()) {
      const auto& d = trace.decisions[i - 1];
      os << (d.accepted ? " accept" : " reject") << " UD=" << d.upper << " LD=" << d.lower;
    }
    if (i + 1 == trace.probes.size()) {
      os << " selected=" << trace.selected;
      if (trace.unreliable) os << " unreliable";
    }
    os << '\n';
  }
}

}  // namespace msrl::dimsel
