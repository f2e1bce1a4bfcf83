#include "msrl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace msrl::data {

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.X = select_rows(X, rows);
  out.Y = select_rows(Y, rows);
  if (!labels.empty()) {
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(labels[r]);
  }
  out.meta = meta;
  return out;
}

void Dataset::validate() const {
  if (X.rows() == 0) throw std::invalid_argument("dataset is empty");
  if (Y.rows() != X.rows() && !(categorical() && Y.cols() == 0))
    throw std::invalid_argument("dataset: X and Y row counts differ");
  if (categorical() && labels.size() != n()) throw std::invalid_argument("dataset: label count differs from rows");
  if (!X.allFinite() || !Y.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
  for (int l : labels)
    if (l < 0) throw std::invalid_argument("dataset: negative class label");
}

Model parse_model(const std::string& s) {
  if (s == "I" || s == "1") return Model::I;
  if (s == "II" || s == "2") return Model::II;
  if (s == "III" || s == "3") return Model::III;
  if (s == "IV" || s == "4") return Model::IV;
  throw std::invalid_argument("unknown model '" + s + "' (expected I, II, III or IV)");
}

Scenario parse_scenario(const std::string& s) {
  if (s == "i" || s == "1") return Scenario::i;
  if (s == "ii" || s == "2") return Scenario::ii;
  if (s == "iii" || s == "3") return Scenario::iii;
  if (s == "iv" || s == "4") return Scenario::iv;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected i, ii, iii or iv)");
}

std::string to_string(Model m) {
  constexpr const char* names[] = {"I", "II", "III", "IV"};
  return names[static_cast<int>(m)];
}

std::string to_string(Scenario s) {
  constexpr const char* names[] = {"i", "ii", "iii", "iv"};
  return names[static_cast<int>(s)];
}

namespace {

std::vector<std::string> numbered(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back(prefix + std::to_string(j + 1));
  return out;
}

}  // namespace

Matrix gen_predictors(Scenario scenario, std::size_t n, std::size_t p, Rng& rng) {
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    switch (scenario) {
      case Scenario::i:
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.uniform(-2.0, 2.0);
        break;
      case Scenario::ii:
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
        break;
      case Scenario::iii: {
        const double u = rng.uniform();
        if (u < 0.25) {
          for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal(-2.0, 1.0);
        } else if (u < 0.75) {
          for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.uniform(-2.0, 2.0);
        } else {
          for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal(2.0, 1.0);
        }
        break;
      }
      case Scenario::iv: {
        // 0.5 * 11' + 0.5 * I via a shared factor.
        const double shared = rng.normal();
        for (Eigen::Index j = 0; j < X.cols(); ++j)
          X(i, j) = std::sqrt(0.5) * shared + std::sqrt(0.5) * rng.normal();
        break;
      }
    }
  }
  return X;
}

double model_mean(Model model, std::span<const double> x) {
  const double x1 = x[0], x2 = x[1];
  switch (model) {
    case Model::I: return 0.5 * x1 + x2;
    case Model::II: {
      const double r = std::sqrt(x1 * x1 + x2 * x2);
      return r > 0.0 ? r * std::log(r) : 0.0;
    }
    case Model::III: return (x1 + x2) * (x1 + x2) / (1.0 + std::exp(x1));
    case Model::IV: return std::sin(std::numbers::pi * (x1 + x2) / 10.0) + x1 * x1;
  }
  return 0.0;
}

Dataset gen_model(Model model, Scenario scenario, std::size_t n, std::size_t p, std::uint64_t seed,
                  const GenOptions& opts) {
  if (p < 2) throw std::invalid_argument("gen_model: p must be >= 2");
  Rng x_rng(seed, 1), e_rng(seed, 2);
  Dataset d;
  d.X = gen_predictors(scenario, n, p, x_rng);
  d.Y.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double eps = opts.noise ? e_rng.normal(0.0, opts.noise_sd) : 0.0;
    d.Y(i, 0) = model_mean(model, std::span<const double>(d.X.row(i).data(), p)) + eps;
  }
  d.meta.model = to_string(model);
  d.meta.scenario = to_string(scenario);
  d.meta.seed = seed;
  d.meta.x_names = numbered("x", p);
  d.meta.y_names = {"y"};
  return d;
}

Dataset gen_toy(std::size_t n, std::size_t p, double c, std::uint64_t seed, const GenOptions& opts) {
  Rng beta_rng(seed, 10), x_rng(seed, 11), e_rng(seed, 12);
  auto sphere = [&] {
    Vector b(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = beta_rng.normal();
    return Vector(b / b.norm());
  };
  const Vector b1 = sphere();
  const Vector b2 = sphere();
  Dataset d;
  d.X = gen_predictors(Scenario::ii, n, p, x_rng);
  d.Y.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double e1 = opts.noise ? e_rng.normal(0.0, opts.noise_sd) : 0.0;
    const double e2 = opts.noise ? e_rng.normal(0.0, opts.noise_sd) : 0.0;
    const double s1 = d.X.row(i).dot(b1.transpose());
    const double s2 = d.X.row(i).dot(b2.transpose());
    const double sign = 2.0 * std::sin(s1) + e1 >= 0.0 ? 1.0 : -1.0;
    d.Y(i, 0) = sign * std::log(std::abs(std::sin(s2) + c + e2));
  }
  d.meta.model = "toy";
  d.meta.seed = seed;
  d.meta.x_names = numbered("x", p);
  d.meta.y_names = {"y"};
  d.meta.directions = {b1, b2};
  return d;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Dataset gen_dim_toy(std::size_t n, std::uint64_t seed, bool noise) {
  constexpr std::size_t p = 10;
  Rng x_rng(seed, 20), e_rng(seed, 21);
  Dataset d;
  d.X = gen_predictors(Scenario::ii, n, p, x_rng);
  d.Y.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double eps = noise ? e_rng.normal() : 0.0;
    d.Y(i, 0) = normal_cdf(d.X(i, 0)) + normal_cdf(d.X(i, 1)) * eps;
  }
  d.meta.model = "dim_toy";
  d.meta.seed = seed;
  d.meta.x_names = numbered("x", p);
  d.meta.y_names = {"y"};
  return d;
}

Dataset gen_gaussian_pair(std::size_t n, double rho, std::uint64_t seed) {
  Rng rng(seed, 30);
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(n), 1);
  d.Y.resize(static_cast<Eigen::Index>(n), 1);
  const double s = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double r = rng.normal();
    d.X(i, 0) = r;
    d.Y(i, 0) = rho * r + s * rng.normal();
  }
  d.meta.model = "gaussian_pair";
  d.meta.seed = seed;
  d.meta.x_names = {"r"};
  d.meta.y_names = {"y"};
  return d;
}

// --- CSV ------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  const auto last = s.find_last_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  return s.substr(first, last - first + 1);
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset read_csv(std::istream& is, const std::vector<std::string>& response_cols, bool drop_constant) {
  std::string line;
  std::size_t line_no = 0;
  // leading '#' lines are comments (e.g. a generation timestamp)
  do {
    if (!std::getline(is, line)) throw CsvError("csv: empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (header.empty() || (header.size() == 1 && header[0].empty())) throw CsvError("csv: empty header");

  std::vector<std::size_t> y_idx;
  for (const auto& name : response_cols) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError("csv: response column '" + name + "' not found in header");
    y_idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw CsvError("csv: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                     " cells, expected " + std::to_string(header.size()));
    std::vector<double> vals(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string cell = trim(cells[j]);
      char* end = nullptr;
      vals[j] = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0' || !std::isfinite(vals[j]))
        throw CsvError("csv: non-numeric cell '" + cell + "' at row " + std::to_string(line_no) + ", column " +
                       std::to_string(j + 1) + " (" + header[j] + ")");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw CsvError("csv: no data rows");

  std::vector<std::size_t> x_idx;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (std::find(y_idx.begin(), y_idx.end(), j) != y_idx.end()) continue;
    if (drop_constant) {
      const double first = rows[0][j];
      const bool constant = std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return r[j] == first; });
      if (constant) continue;
    }
    x_idx.push_back(j);
  }
  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.X.resize(n, static_cast<Eigen::Index>(x_idx.size()));
  d.Y.resize(n, static_cast<Eigen::Index>(y_idx.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < x_idx.size(); ++j) d.X(i, static_cast<Eigen::Index>(j)) = r[x_idx[j]];
    for (std::size_t j = 0; j < y_idx.size(); ++j) d.Y(i, static_cast<Eigen::Index>(j)) = r[y_idx[j]];
  }
  for (auto j : x_idx) d.meta.x_names.push_back(header[j]);
  for (auto j : y_idx) d.meta.y_names.push_back(header[j]);
  d.meta.model = "csv";
  return d;
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& response_cols, bool drop_constant) {
  std::ifstream in(path);
  if (!in) throw CsvError("csv: cannot open '" + path + "'");
  return read_csv(in, response_cols, drop_constant);
}

void write_csv(std::ostream& os, const Dataset& d) {
  auto name = [](const std::vector<std::string>& names, std::size_t j, const char* prefix) {
    return j < names.size() ? names[j] : prefix + std::to_string(j + 1);
  };
  bool first = true;
  for (std::size_t j = 0; j < d.dx(); ++j, first = false) os << (first ? "" : ",") << name(d.meta.x_names, j, "x");
  for (std::size_t j = 0; j < d.dy(); ++j, first = false) os << (first ? "" : ",") << name(d.meta.y_names, j, "y");
  os << '\n';
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    first = true;
    for (Eigen::Index j = 0; j < d.X.cols(); ++j, first = false) os << (first ? "" : ",") << fmt17(d.X(i, j));
    for (Eigen::Index j = 0; j < d.Y.cols(); ++j, first = false) os << (first ? "" : ",") << fmt17(d.Y(i, j));
    os << '\n';
  }
}

void save_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw CsvError("csv: cannot write '" + path + "'");
  write_csv(out, d);
}

void standardize(Dataset& d, const Dataset& reference) {
  const Eigen::RowVectorXd mu = reference.X.colwise().mean();
  Eigen::RowVectorXd sd = ((reference.X.rowwise() - mu).array().square().colwise().sum() /
                           std::max<double>(1.0, static_cast<double>(reference.n()) - 1.0))
                              .sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  d.X = ((d.X.rowwise() - mu).array().rowwise() / sd.array()).matrix();
}

// --- Splits ---------------------------------------------------------------

SplitSpec SplitSpec::from_fractions(std::size_t n, double train, double val, double test, std::uint64_t seed) {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  SplitSpec s;
  s.val = static_cast<std::size_t>(std::floor(val * static_cast<double>(n)));
  s.test = static_cast<std::size_t>(std::floor(test * static_cast<double>(n)));
  s.train = n - s.val - s.test;
  s.seed = seed;
  return s;
}

Split split(const Dataset& d, const SplitSpec& spec) {
  const std::size_t n = d.n();
  if (spec.train + spec.val + spec.test > n)
    throw std::invalid_argument("split: requested " + std::to_string(spec.train + spec.val + spec.test) +
                                " rows from a dataset of " + std::to_string(n));
  Rng rng(spec.seed, 40);
  const auto perm = rng.permutation(n);
  const std::size_t train = n - spec.val - spec.test;
  std::span<const std::size_t> all(perm);
  Split s;
  s.train = d.subset(all.subspan(0, train));
  s.val = d.subset(all.subspan(train, spec.val));
  s.test = d.subset(all.subspan(train + spec.val, spec.test));
  return s;
}

std::vector<std::vector<std::size_t>> kfold(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 1 || folds > n) throw std::invalid_argument("kfold: need 1 <= folds <= n");
  Rng rng(seed, 41);
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t t = 0; t < folds; ++t) {
    const std::size_t size = n / folds + (t < n % folds ? 1 : 0);
    out[t].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> fold) {
  std::vector<char> in(n, 0);
  for (auto i : fold) in.at(i) = 1;
  std::vector<std::size_t> out;
  out.reserve(n - fold.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

}  // namespace msrl::data
