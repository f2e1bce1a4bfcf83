#include "msrl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msrl::objective {

namespace {

ad::Tensor apply(const nn::MLP& net, const ad::Tensor& in, Critic critic) {
  return critic == Critic::frozen ? net.forward_frozen(in) : net.forward(in);
}

void require_rows(std::size_t m, std::size_t min, const char* what) {
  if (m < min)
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min) + " rows, got " +
                                std::to_string(m));
}

}  // namespace

Batch make_batch(const Matrix& X, const Matrix& Y, const Matrix& U) {
  Batch b;
  b.X = to_tensor(X);
  if (Y.size() > 0) b.Y = to_tensor(Y);
  if (U.size() > 0) b.U = to_tensor(U);
  return b;
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "exact") return LossMode::exact;
  if (s == "permuted") return LossMode::permuted;
  if (s == "auto" || s == "automatic") return LossMode::automatic;
  throw std::invalid_argument("unknown loss mode '" + s + "'");
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::exact: return "exact";
    case LossMode::permuted: return "permuted";
    default: return "auto";
  }
}

bool use_exact(LossMode mode, std::size_t m) {
  return mode == LossMode::exact || (mode == LossMode::automatic && m <= kExactPairLimit);
}

Term mi_term(const CriticFn& D, const ad::Tensor& Y, const ad::Tensor& r) {
  const std::size_t m = r.rows();
  require_rows(m, 2, "mi_term");
  if (Y.rows() != m) throw ad::DimensionError("mi_term: Y and representation row counts differ");
  const ad::Tensor joint = D(ad::concat_cols(Y, r));

  std::vector<std::size_t> yi, rj;
  yi.reserve(m * (m - 1));
  rj.reserve(m * (m - 1));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) {
        yi.push_back(i);
        rj.push_back(j);
      }
  const ad::Tensor cross = ad::exp(D(ad::concat_cols(ad::gather_rows(Y, yi), ad::gather_rows(r, rj))));
  return {ad::mean(joint) - ad::mean(cross), cross.saturation_count()};
}

Term mi_term_permuted(const CriticFn& D, const ad::Tensor& Y, const ad::Tensor& r,
                      std::span<const std::size_t> sigma) {
  const std::size_t m = r.rows();
  require_rows(m, 2, "mi_term_permuted");
  if (sigma.size() != m) throw ad::DimensionError("mi_term_permuted: permutation length differs from batch");
  if (Y.rows() != m) throw ad::DimensionError("mi_term_permuted: Y and representation row counts differ");
  const ad::Tensor joint = D(ad::concat_cols(Y, r));
  const ad::Tensor cross = ad::exp(D(ad::concat_cols(Y, ad::gather_rows(r, sigma))));
  return {ad::mean(joint) - ad::mean(cross), cross.saturation_count()};
}

Term mi_term(const nn::MLP& D, const ad::Tensor& Y, const ad::Tensor& r, Critic critic) {
  return mi_term([&](const ad::Tensor& in) { return apply(D, in, critic); }, Y, r);
}

Term mi_term_permuted(const nn::MLP& D, const ad::Tensor& Y, const ad::Tensor& r,
                      std::span<const std::size_t> sigma, Critic critic) {
  return mi_term_permuted([&](const ad::Tensor& in) { return apply(D, in, critic); }, Y, r, sigma);
}

Term push_term(const nn::MLP& Q, const ad::Tensor& r, const ad::Tensor& U, Critic critic) {
  if (!U.defined()) throw std::invalid_argument("push_term: batch has no reference draws");
  require_rows(r.rows(), 1, "push_term");
  const ad::Tensor on_r = apply(Q, r, critic);
  const ad::Tensor on_u = ad::exp(apply(Q, U, critic));
  return {ad::mean(on_r) - ad::mean(on_u), on_u.saturation_count()};
}

std::vector<std::size_t> sample_derangement(std::size_t m, Rng& rng) {
  std::vector<std::size_t> sigma;
  for (int attempt = 0; attempt <= 20; ++attempt) {
    sigma = rng.permutation(m);
    bool fixed = false;
    for (std::size_t j = 0; j < m && !fixed; ++j) fixed = sigma[j] == j;
    if (!fixed) return sigma;
  }
  for (std::size_t j = 0; j < m; ++j) sigma[j] = (j + 1) % m;
  return sigma;
}

ad::Tensor mi_loss(const nn::MLP& D, const nn::MLP& R, const Batch& batch) {
  require_rows(batch.rows(), 2, "mi_loss");
  return mi_term(D, batch.Y, R.forward(batch.X)).value;
}

ad::Tensor mi_loss_permuted(const nn::MLP& D, const nn::MLP& R, const Batch& batch, Rng& rng) {
  require_rows(batch.rows(), 2, "mi_loss_permuted");
  const auto sigma = sample_derangement(batch.rows(), rng);
  return mi_loss_permuted(D, R, batch, sigma);
}

ad::Tensor mi_loss_permuted(const nn::MLP& D, const nn::MLP& R, const Batch& batch,
                            std::span<const std::size_t> sigma) {
  return mi_term_permuted(D, batch.Y, R.forward(batch.X), sigma).value;
}

ad::Tensor push_loss(const nn::MLP& Q, const nn::MLP& R, const Batch& batch) {
  if (!batch.U.defined()) throw std::invalid_argument("push_loss: batch has no reference draws");
  return push_term(Q, R.forward(batch.X), batch.U).value;
}

ObjectiveGraph msrl_objective_graph(const nn::MLP& R, const nn::MLP& D, const nn::MLP& Q, double lambda,
                                    const Batch& batch, LossMode mode, Rng& rng) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("msrl_objective: lambda must be >= 0");
  const ad::Tensor r = R.forward(batch.X);
  Term mi;
  if (use_exact(mode, batch.rows())) {
    mi = mi_term(D, batch.Y, r);
  } else {
    const auto sigma = sample_derangement(batch.rows(), rng);
    mi = mi_term_permuted(D, batch.Y, r, sigma);
  }
  Term push = push_term(Q, r, batch.U);
  ObjectiveGraph g;
  g.mi = mi.value;
  g.push = push.value;
  g.total = ad::scale(push.value, lambda) - mi.value;
  g.report.mi_term = g.mi.item();
  g.report.push_term = g.push.item();
  g.report.total = g.total.item();
  g.report.saturation_count = mi.saturated + push.saturated;
  return g;
}

LossReport msrl_objective(const nn::MLP& R, const nn::MLP& D, const nn::MLP& Q, double lambda, const Batch& batch,
                          LossMode mode, Rng& rng) {
  return msrl_objective_graph(R, D, Q, lambda, batch, mode, rng).report;
}

// --- Categorical response -------------------------------------------------

std::vector<double> class_frequencies(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> p(num_classes, 0.0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw std::invalid_argument("label out of range");
    p[static_cast<std::size_t>(l)] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(labels.size());
  return p;
}

Term categorical_mi_term(std::span<const nn::MLP> D, const ad::Tensor& r, std::span<const int> labels,
                         std::span<const double> p_hat, Critic critic, std::size_t* skipped) {
  const std::size_t K = D.size();
  if (p_hat.size() != K) throw std::invalid_argument("categorical_mi_term: p_hat length differs from K");
  if (labels.size() != r.rows()) throw ad::DimensionError("categorical_mi_term: label count differs from rows");
  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= K) throw std::invalid_argument("categorical_mi_term: bad label");
    members[static_cast<std::size_t>(l)].push_back(i);
  }
  std::size_t n_skipped = 0, saturated = 0;
  ad::Tensor total;
  for (std::size_t k = 0; k < K; ++k) {
    const ad::Tensor out = apply(D[k], r, critic);
    const ad::Tensor e = ad::exp(out);
    saturated += e.saturation_count();
    ad::Tensor term = -ad::mean(e);
    if (members[k].empty()) {
      ++n_skipped;
    } else {
      term = ad::mean(ad::gather_rows(out, members[k])) + term;
    }
    term = ad::scale(term, p_hat[k]);
    total = total.defined() ? total + term : term;
  }
  if (skipped) *skipped = n_skipped;
  return {total, saturated};
}

ad::Tensor categorical_mi_loss(std::span<const nn::MLP> D, const nn::MLP& R, const Batch& batch,
                               std::span<const double> p_hat, std::size_t* skipped) {
  require_rows(batch.rows(), 1, "categorical_mi_loss");
  return categorical_mi_term(D, R.forward(batch.X), batch.labels, p_hat, Critic::trainable, skipped).value;
}

ad::Tensor categorical_mi_loss_onehot(std::span<const nn::MLP> D, const nn::MLP& R, const Batch& batch,
                                      std::span<const double> p_hat) {
  const std::size_t K = D.size(), n = batch.rows();
  const ad::Tensor r = R.forward(batch.X);
  // Stack the K independent outputs into one [n x K] block.
  ad::Tensor outs;
  for (std::size_t k = 0; k < K; ++k) outs = outs.defined() ? ad::concat_cols(outs, D[k].forward(r)) : D[k].forward(r);
  std::vector<double> onehot(n * K, 0.0);
  for (std::size_t i = 0; i < n; ++i) onehot[i * K + static_cast<std::size_t>(batch.labels[i])] = 1.0;
  const ad::Tensor Yt = ad::Tensor::constant({n, K}, std::move(onehot));
  const ad::Tensor p = ad::Tensor::constant({1, K}, std::vector<double>(p_hat.begin(), p_hat.end()));
  const double inv_n = 1.0 / static_cast<double>(n);
  return ad::scale(ad::sum(outs * Yt), inv_n) - ad::scale(ad::sum(ad::exp(outs) * p), inv_n);
}

// --- Plug-in estimate -----------------------------------------------------

double mi_estimate(const nn::MLP& D, const Matrix& Y, const Matrix& representation) {
  const auto m = representation.rows();
  require_rows(static_cast<std::size_t>(m), 2, "mi_estimate");
  if (Y.rows() != m) throw ad::DimensionError("mi_estimate: Y and representation row counts differ");
  const auto dy = Y.cols(), dr = representation.cols();

  Matrix joint(m, dy + dr);
  joint << Y, representation;
  const double positive = D.predict(joint).mean();

  // Cross term in blocks of anchor rows i, each paired with every j.
  const Eigen::Index block = std::max<Eigen::Index>(1, 65536 / m);
  double cross = 0.0;
  Matrix pairs;
  for (Eigen::Index i0 = 0; i0 < m; i0 += block) {
    const Eigen::Index i1 = std::min(m, i0 + block);
    pairs.resize((i1 - i0) * m, dy + dr);
    for (Eigen::Index i = i0; i < i1; ++i) {
      auto rows = pairs.middleRows((i - i0) * m, m);
      rows.leftCols(dy).rowwise() = Y.row(i);
      rows.rightCols(dr) = representation;
    }
    const Matrix out = D.predict(pairs);
    for (Eigen::Index i = i0; i < i1; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j) cross += std::exp(std::min(out((i - i0) * m + j, 0), ad::kExpClamp));
  }
  cross /= static_cast<double>(m) * static_cast<double>(m - 1);
  return positive - cross + 1.0;
}

double mi_estimate(const nn::MLP& D, const nn::MLP& R, const data::Dataset& data) {
  return mi_estimate(D, data.Y, R.predict(data.X));
}

}  // namespace msrl::objective
