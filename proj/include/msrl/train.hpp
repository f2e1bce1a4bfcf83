#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "msrl/data.hpp"
#include "msrl/nn.hpp"
#include "msrl/objective.hpp"
#include "msrl/rng.hpp"

namespace msrl::train {

// --- Adam -----------------------------------------------------------------

enum class Direction { ascend, descend };
enum class WeightDecayMode { decoupled, coupled };

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  WeightDecayMode decay_mode = WeightDecayMode::decoupled;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamState for_params(std::span<const ad::Tensor> params);
};

enum class StepStatus { ok, diverged };

/// One bias-corrected Adam update in place. Decoupled decay multiplies each
/// parameter by (1 - lr * wd) before the Adam delta; coupled decay adds
/// wd * param to the descent gradient. Ascend negates the gradient. A
/// non-finite gradient leaves parameters and state untouched and returns
/// StepStatus::diverged.
StepStatus adam_step(std::span<const ad::Tensor> params, std::span<const std::vector<double>> grads,
                     AdamState& state, const AdamConfig& cfg, Direction direction);

// --- Configuration --------------------------------------------------------

enum class EsMetric { distance_correlation, distance_covariance, none };
enum class Reference { uniform01, sine_normal, custom };

EsMetric parse_es_metric(const std::string& s);
std::string to_string(EsMetric m);
Reference parse_reference(const std::string& s);
std::string to_string(Reference r);
WeightDecayMode parse_decay_mode(const std::string& s);
std::string to_string(WeightDecayMode m);

struct EpochRecord;

using ReferenceSampler = std::function<Matrix(std::size_t n, std::size_t d0, Rng& rng)>;

struct MSRLConfig {
  double lambda = 2.0;
  std::size_t d0 = 1;
  std::size_t batch_size = 512;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  WeightDecayMode decay_mode = WeightDecayMode::decoupled;
  std::size_t max_epochs = 1000;
  std::size_t patience = 200;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  Reference reference = Reference::uniform01;
  ReferenceSampler custom_sampler;
  objective::LossMode loss_mode = objective::LossMode::automatic;
  EsMetric es_metric = EsMetric::distance_correlation;

  std::vector<std::size_t> r_hidden{32, 16, 8};
  std::vector<std::size_t> d_hidden{16, 8};
  std::vector<std::size_t> q_hidden{16, 8};
  nn::Activation activation = nn::Activation::leaky_relu;
  double negative_slope = 0.01;
  nn::OutputTransform r_output = nn::OutputTransform::identity;

  /// Worker threads for restarts; 0 uses the hardware concurrency.
  std::size_t threads = 1;
  /// Called after every epoch with the restart index; may run on worker threads.
  std::function<void(std::size_t restart, const EpochRecord&, const nn::MLP& R)> on_epoch;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  AdamConfig adam() const;
  nn::MLPSpec r_spec(std::size_t d_x) const;
  nn::MLPSpec d_spec(std::size_t d_y) const;
  nn::MLPSpec q_spec() const;
};

/// Simulation defaults for Models I-IV (widths (32,16,8) / (16,8), 1000
/// epochs, patience 200, wd 1e-4, 10 restarts).
MSRLConfig simulation_preset(data::Model model);
/// Intrinsic-dimension toy defaults (widths (128) / (64), 2000 epochs).
MSRLConfig dimension_preset();
/// Smaller run budget: 3 restarts, 500 epochs, patience capped at 100.
MSRLConfig reduced(MSRLConfig cfg);

// --- Data plumbing --------------------------------------------------------

Matrix sample_reference(std::size_t n, std::size_t d0, Rng& rng);
Matrix sample_reference(const MSRLConfig& cfg, std::size_t n, Rng& rng);

/// One epoch: a fresh shuffle split into consecutive batches; a trailing
/// batch with fewer than 2 rows is dropped.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size, Rng& rng);

// --- Training -------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double mi_term = 0.0;
  double push_term = 0.0;
  double total = 0.0;
  double val_metric = 0.0;
  std::size_t saturations = 0;
};

struct RestartSummary {
  std::size_t restart = 0;
  bool diverged = false;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
};

struct TrainedModel {
  nn::MLP R, D, Q;
  /// Per-epoch trace of the selected restart.
  std::vector<EpochRecord> history;
  /// 1-based epoch whose parameters were kept; 0 when no epoch ran.
  std::size_t best_epoch = 0;
  std::size_t restart_index = 0;
  double best_val_metric = 0.0;
  std::vector<RestartSummary> restarts;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validation criterion of a representation.
double validation_metric(EsMetric metric, const nn::MLP& R, const data::Dataset& val);

/// A single restart with its own seed stream. Throws TrainingError on divergence.
TrainedModel train_restart(const data::Dataset& train, const data::Dataset& val, const MSRLConfig& cfg,
                           std::size_t restart);

/// Alternating ascent of the critics and descent of the representer over
/// `cfg.restarts` restarts; the restart with the largest best validation
/// metric is returned (ties keep the lowest index). Throws TrainingError when
/// every restart diverges.
TrainedModel train_msrl(const data::Dataset& train, const data::Dataset& val, const MSRLConfig& cfg);

// --- Critic refit for a fixed representation ------------------------------

struct CriticConfig {
  std::vector<std::size_t> hidden{16, 8};
  nn::Activation activation = nn::Activation::leaky_relu;
  double negative_slope = 0.01;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  std::uint64_t seed = 0;
  objective::LossMode loss_mode = objective::LossMode::automatic;
  /// Validation rows used for the exact early-stopping estimate.
  std::size_t val_rows = 1000;
};

/// Ascends the mi term over D with the representation held fixed, keeping
/// the epoch with the best validation plug-in estimate. Pass `init` to warm
/// start from an existing critic.
nn::MLP train_critic(const Matrix& Y, const Matrix& representation, const Matrix& Y_val,
                     const Matrix& representation_val, const CriticConfig& cfg, const nn::MLP* init = nullptr);

// --- Persistence ----------------------------------------------------------

/// Text log: one comment header, then "epoch,mi_term,push_term,total,val_metric".
void write_history(std::ostream& os, const TrainedModel& model);
/// R, D and Q in the network text format, preceded by a versioned header.
void save_model(std::ostream& os, const TrainedModel& model);
TrainedModel load_model(std::istream& is);

}  // namespace msrl::train
