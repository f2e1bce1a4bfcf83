#pragma once

// Empirical losses of the adversarial representation objective.
//
// With representation r_i = R(X_i), critic D on (y, r) and critic Q on r:
//
//   mi   = (1/m) sum_i D(Y_i, r_i) - 1/(m(m-1)) sum_{i != j} exp D(Y_i, r_j)
//   push = (1/m) sum_i Q(r_i)      - (1/m) sum_i exp Q(U_i)
//   total = lambda * push - mi
//
// D and Q ascend their own terms, R descends total.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "msrl/autodiff.hpp"
#include "msrl/data.hpp"
#include "msrl/nn.hpp"
#include "msrl/rng.hpp"

namespace msrl::objective {

struct Batch {
  ad::Tensor X;             // [m x d_X]
  ad::Tensor Y;             // [m x d_Y]; undefined in categorical mode
  std::vector<int> labels;  // categorical mode
  ad::Tensor U;             // [m x d0] reference draws; may be undefined

  std::size_t rows() const { return X.rows(); }
};

/// Batch from matrices; pass an empty U to omit the reference draws.
Batch make_batch(const Matrix& X, const Matrix& Y, const Matrix& U = Matrix());

struct LossReport {
  double mi_term = 0.0;
  double push_term = 0.0;
  double total = 0.0;
  std::size_t saturation_count = 0;
};

enum class LossMode { exact, permuted, automatic };
/// Exact U-statistic up to this batch size under LossMode::automatic.
inline constexpr std::size_t kExactPairLimit = 128;

LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode m);
bool use_exact(LossMode mode, std::size_t m);

/// Whether a critic's parameters receive gradients.
enum class Critic { trainable, frozen };

struct Term {
  ad::Tensor value;
  std::size_t saturated = 0;
};

/// Any differentiable map from [rows x (d_Y + d0)] inputs to [rows x 1] scores.
using CriticFn = std::function<ad::Tensor(const ad::Tensor& input)>;

// Building blocks over a precomputed representation tensor r [m x d0].
Term mi_term(const CriticFn& D, const ad::Tensor& Y, const ad::Tensor& r);
Term mi_term_permuted(const CriticFn& D, const ad::Tensor& Y, const ad::Tensor& r, std::span<const std::size_t> sigma);
Term mi_term(const nn::MLP& D, const ad::Tensor& Y, const ad::Tensor& r, Critic critic = Critic::trainable);
Term mi_term_permuted(const nn::MLP& D, const ad::Tensor& Y, const ad::Tensor& r,
                      std::span<const std::size_t> sigma, Critic critic = Critic::trainable);
Term push_term(const nn::MLP& Q, const ad::Tensor& r, const ad::Tensor& U, Critic critic = Critic::trainable);

/// Uniform permutation without fixed points: rejection with at most 20
/// retries, then the cycle shift j -> j + 1 mod m.
std::vector<std::size_t> sample_derangement(std::size_t m, Rng& rng);

/// Exact order-two U-statistic form. Throws std::invalid_argument if m < 2.
ad::Tensor mi_loss(const nn::MLP& D, const nn::MLP& R, const Batch& batch);
/// Cross term replaced by (1/m) sum_j exp D(Y_j, r_sigma(j)) for a fresh derangement.
ad::Tensor mi_loss_permuted(const nn::MLP& D, const nn::MLP& R, const Batch& batch, Rng& rng);
ad::Tensor mi_loss_permuted(const nn::MLP& D, const nn::MLP& R, const Batch& batch,
                            std::span<const std::size_t> sigma);
/// Throws std::invalid_argument if the batch carries no reference draws.
ad::Tensor push_loss(const nn::MLP& Q, const nn::MLP& R, const Batch& batch);

struct ObjectiveGraph {
  ad::Tensor mi;
  ad::Tensor push;
  ad::Tensor total;
  LossReport report;
};

/// total = lambda * push - mi with the critics as given. Throws for lambda < 0.
ObjectiveGraph msrl_objective_graph(const nn::MLP& R, const nn::MLP& D, const nn::MLP& Q, double lambda,
                                    const Batch& batch, LossMode mode, Rng& rng);
LossReport msrl_objective(const nn::MLP& R, const nn::MLP& D, const nn::MLP& Q, double lambda, const Batch& batch,
                          LossMode mode, Rng& rng);

/// Class frequencies n_k / n over labels 0..K-1.
std::vector<double> class_frequencies(std::span<const int> labels, std::size_t num_classes);

/// sum_k p_k { mean_{i: y_i = k} D_k(r_i) - mean_i exp D_k(r_i) }. Classes
/// absent from the batch keep only their exp term; their count is written to
/// `skipped` when non-null.
Term categorical_mi_term(std::span<const nn::MLP> D, const ad::Tensor& r, std::span<const int> labels,
                         std::span<const double> p_hat, Critic critic = Critic::trainable,
                         std::size_t* skipped = nullptr);
ad::Tensor categorical_mi_loss(std::span<const nn::MLP> D, const nn::MLP& R, const Batch& batch,
                               std::span<const double> p_hat, std::size_t* skipped = nullptr);
/// Single K-output form: (1/n) sum_i D(r_i)' onehot_i - (1/n) sum_i p' exp D(r_i).
ad::Tensor categorical_mi_loss_onehot(std::span<const nn::MLP> D, const nn::MLP& R, const Batch& batch,
                                      std::span<const double> p_hat);

/// Plug-in KL mutual information: exact mi term + 1, evaluated graph-free.
/// Throws std::invalid_argument if fewer than two rows.
double mi_estimate(const nn::MLP& D, const Matrix& Y, const Matrix& representation);
double mi_estimate(const nn::MLP& D, const nn::MLP& R, const data::Dataset& data);

}  // namespace msrl::objective
