#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "msrl/matrix.hpp"
#include "msrl/rng.hpp"

namespace msrl::data {

struct DatasetMeta {
  std::string model;
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  /// Index directions used by a generator (e.g. the two sphere draws of the toy model).
  std::vector<Vector> directions;
};

/// Paired predictors and responses. Categorical responses live in `labels`
/// (values 0..K-1) and leave Y with zero columns.
struct Dataset {
  Matrix X;
  Matrix Y;
  std::vector<int> labels;
  DatasetMeta meta;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dx() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t dy() const { return static_cast<std::size_t>(Y.cols()); }
  bool categorical() const { return !labels.empty(); }
  std::size_t num_classes() const;

  Dataset subset(std::span<const std::size_t> rows) const;
  /// Throws std::invalid_argument on empty data, row mismatch or NaN.
  void validate() const;
};

enum class Model { I, II, III, IV };
enum class Scenario { i, ii, iii, iv };

Model parse_model(const std::string& s);
Scenario parse_scenario(const std::string& s);
std::string to_string(Model m);
std::string to_string(Scenario s);

struct GenOptions {
  bool noise = true;
  /// Standard deviation of the additive Gaussian noise.
  double noise_sd = 0.25;
};

/// Predictor draws for scenarios (i)-(iv).
Matrix gen_predictors(Scenario scenario, std::size_t n, std::size_t p, Rng& rng);
/// Noise-free regression function of Models I-IV (uses the first two coordinates).
double model_mean(Model model, std::span<const double> x);
Dataset gen_model(Model model, Scenario scenario, std::size_t n, std::size_t p, std::uint64_t seed,
                  const GenOptions& opts = {});

/// Y = sign(2 sin(b1'X) + e1) * log|sin(b2'X) + c + e2|, X ~ N(0, I_p).
Dataset gen_toy(std::size_t n, std::size_t p, double c, std::uint64_t seed, const GenOptions& opts = {});

/// Y = Phi(X1) + Phi(X2) * e with e ~ N(0, 1), X ~ N(0, I_10).
Dataset gen_dim_toy(std::size_t n, std::uint64_t seed, bool noise = true);

/// Jointly Gaussian (Y, R) with unit variances and correlation rho; X holds R.
Dataset gen_gaussian_pair(std::size_t n, double rho, std::uint64_t seed);

double normal_cdf(double x);

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Dataset read_csv(std::istream& is, const std::vector<std::string>& response_cols, bool drop_constant);
Dataset load_csv(const std::string& path, const std::vector<std::string>& response_cols, bool drop_constant);
/// Header row then one row per sample, X columns first, %.17g formatting.
void write_csv(std::ostream& os, const Dataset& d);
void save_csv(const std::string& path, const Dataset& d);

/// Z-score each predictor column with statistics from `reference`.
void standardize(Dataset& d, const Dataset& reference);

struct SplitSpec {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;

  /// Counts from fractions summing to 1; rounding slack goes to train.
  static SplitSpec from_fractions(std::size_t n, double train, double val, double test, std::uint64_t seed);
};

struct Split {
  Dataset train, val, test;
};

/// Seeded permutation, then contiguous train/val/test blocks. Counts summing
/// below n leave the remaining rows in train; counts above n throw.
Split split(const Dataset& d, const SplitSpec& spec);

/// Disjoint, exhaustive folds of a seeded permutation; sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Indices of every row not in `fold`.
std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> fold);

}  // namespace msrl::data
