#pragma once

// Cross-validated choice of the representation dimension by bisection on the
// estimated mutual information between Y and R(X).

#include <cstdint>
#include <iosfwd>
#include <functional>
#include <map>
#include <vector>

#include "msrl/data.hpp"
#include "msrl/train.hpp"

namespace msrl::dimsel {

struct DimSelectConfig {
  /// Largest dimension considered; 0 means d_X.
  std::size_t d_upper = 0;
  double eta = 0.2;
  std::size_t n_folds = 5;
  /// Template for each probe; d0 is overridden.
  train::MSRLConfig train_cfg = train::reduced(train::dimension_preset());
  /// Share of each fold complement used for training (the rest drives early stopping).
  double train_fraction = 0.75;
  /// Refit the critic on the complement with R frozen before estimating on the fold.
  bool refit_critic = true;
  train::CriticConfig critic_cfg;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for values outside the documented ranges.
  void validate(std::size_t d_x) const;
};

struct Probe {
  std::size_t k = 0;
  std::vector<double> fold_estimates;
  double mean = 0.0;
};

struct Decision {
  std::size_t u = 0;
  bool accepted = false;
  std::size_t upper = 0;  // UD after the decision
  std::size_t lower = 0;  // LD after the decision
};

struct DimSelectTrace {
  std::vector<Probe> probes;
  std::vector<Decision> decisions;
  std::size_t selected = 0;
  /// Set when the estimate at d_upper is not positive.
  bool unreliable = false;
};

/// Fold-averaged plug-in MI of a k-dimensional representation; each fold's
/// estimate uses networks trained on the remaining folds.
Probe cv_mi_estimate(const data::Dataset& data, std::size_t k, const DimSelectConfig& cfg);

/// Bisection over [1, d_upper]. `estimator` is called at most once per k.
using Estimator = std::function<Probe(std::size_t k)>;
DimSelectTrace select_dimension(std::size_t d_upper, double eta, const Estimator& estimator);
DimSelectTrace select_dimension(const data::Dataset& data, const DimSelectConfig& cfg);

/// One line per probe ("probe k=<k> folds=<a,b,...> mean=<m>"), then one line
/// per decision and the selection.
void write_trace(std::ostream& os, const DimSelectTrace& trace);

}  // namespace msrl::dimsel
