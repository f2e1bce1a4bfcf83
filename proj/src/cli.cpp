#include "msrl/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "msrl/baselines.hpp"
#include "msrl/data.hpp"
#include "msrl/dimsel.hpp"
#include "msrl/metrics.hpp"
#include "msrl/objective.hpp"
#include "msrl/svg.hpp"
#include "msrl/train.hpp"

namespace fs = std::filesystem;

namespace msrl::cli {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    std::size_t pos = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
    }
    if (v < 0 || pos != item.size()) throw UsageError("expected a comma-separated list of integers, got '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') throw UsageError("expected a comma-separated list of numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

// --- Shared options -------------------------------------------------------

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  bool no_timestamp = false;
  std::string config;
};

struct DataOpts {
  std::string csv;
  std::string response = "y";
  bool drop_constant = false;
  bool standardize = false;
  bool no_standardize = false;
  std::string generator;
  std::string model = "I";
  std::string scenario = "i";
  std::optional<std::size_t> n;
  std::size_t p = 10;
  bool no_noise = false;
  double rho = 0.5;
  double c = 5.0;
  std::string split;
};

struct TrainOpts {
  std::string preset = "desk";
  std::optional<double> lambda, lr, weight_decay, negative_slope;
  std::optional<std::size_t> d0, batch_size, max_epochs, patience, restarts, threads;
  std::optional<std::string> loss_mode, es_metric, decay_mode, reference, r_hidden, d_hidden, q_hidden, activation,
      r_output;
};

struct DimOpts {
  double eta = 0.2;
  std::optional<std::size_t> folds;
  std::size_t d_upper = 0;
  bool no_refit = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Splices "key=value" lines of the --config file into the argument list as
// "--key value", skipping keys already given on the command line. Boolean
// values turn into bare flags ("false" drops the key).
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> out = args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    if (key.empty() || key == "config") throw UsageError(path + ":" + std::to_string(lineno) + ": bad key");
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value == "true") {
      out.push_back(flag);
    } else if (value != "false") {
      out.push_back(flag);
      out.push_back(value);
    }
  }
  return out;
}

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--config", c.config, "Flat key=value file; command-line flags take precedence");
  auto* o = app->add_option("--out", c.out, "Output directory (file for simulate)");
  if (out_required) o->required();
  app->add_option("--seed", c.seed, "Master seed");
  app->add_flag("--no-timestamp", c.no_timestamp, "Omit the timestamp header line from text outputs");
}

void add_data(CLI::App* app, DataOpts& d) {
  app->add_option("--data", d.csv, "CSV file with a header row (overrides --generator)");
  app->add_option("--response", d.response, "Comma-separated response column names of the CSV");
  app->add_flag("--drop-constant", d.drop_constant, "Drop constant predictor columns of the CSV");
  app->add_flag("--standardize", d.standardize, "Z-score predictors with training statistics");
  app->add_flag("--no-standardize", d.no_standardize, "Keep raw predictor scales");
  app->add_option("--generator", d.generator, "Synthetic source: model, toy, dim-toy, gaussian")
      ->check(CLI::IsMember({"model", "toy", "dim-toy", "gaussian"}));
  app->add_option("--model", d.model, "Simulation model: I, II, III, IV");
  app->add_option("--scenario", d.scenario, "Predictor law: i, ii, iii, iv");
  app->add_option("--n", d.n, "Sample size");
  app->add_option("--p", d.p, "Predictor dimension");
  app->add_flag("--no-noise", d.no_noise, "Generate responses without additive noise");
  app->add_option("--rho", d.rho, "Correlation of the Gaussian pair generator");
  app->add_option("--toy-c", d.c, "Offset c of the toy model");
  app->add_option("--split", d.split, "train,val,test as counts or fractions");
}

void add_train(CLI::App* app, TrainOpts& t) {
  app->add_option("--preset", t.preset, "desk (3 restarts) or paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--d0", t.d0, "Representation dimension");
  app->add_option("--lambda", t.lambda, "Weight of the push-forward term");
  app->add_option("--lr", t.lr, "Adam learning rate");
  app->add_option("--weight-decay", t.weight_decay, "Weight decay");
  app->add_option("--decay-mode", t.decay_mode, "decoupled or coupled");
  app->add_option("--batch-size", t.batch_size, "Minibatch size");
  app->add_option("--max-epochs", t.max_epochs, "Epoch budget per restart");
  app->add_option("--patience", t.patience, "Early-stopping patience in epochs");
  app->add_option("--restarts", t.restarts, "Independent restarts");
  app->add_option("--threads", t.threads, "Worker threads for restarts (0 = all cores)");
  app->add_option("--loss-mode", t.loss_mode, "exact, permuted or automatic");
  app->add_option("--es-metric", t.es_metric, "distance_correlation, distance_covariance or none");
  app->add_option("--reference", t.reference, "uniform01 or sine_normal");
  app->add_option("--r-hidden", t.r_hidden, "Representer hidden widths, e.g. 32,16,8");
  app->add_option("--d-hidden", t.d_hidden, "MI critic hidden widths");
  app->add_option("--q-hidden", t.q_hidden, "Push-forward critic hidden widths");
  app->add_option("--activation", t.activation, "leaky_relu or relu");
  app->add_option("--negative-slope", t.negative_slope, "LeakyReLU slope");
  app->add_option("--r-output", t.r_output, "identity, truncate01 or sigmoid");
}

void add_dim(CLI::App* app, DimOpts& d) {
  app->add_option("--eta", d.eta, "Relative tolerance of the bisection");
  app->add_option("--folds", d.folds, "Cross-validation folds (desk 2, paper 5)");
  app->add_option("--d-upper", d.d_upper, "Largest dimension considered (default d_X)");
  app->add_flag("--no-refit-critic", d.no_refit, "Estimate with the jointly trained critic");
}

// --- Data -----------------------------------------------------------------

bool generated(const DataOpts& d) { return d.csv.empty(); }

data::Dataset load_data(const DataOpts& d, std::uint64_t seed) {
  if (!generated(d)) {
    if (!fs::exists(d.csv)) throw UsageError("data file '" + d.csv + "' does not exist");
    return data::load_csv(d.csv, split_list(d.response), d.drop_constant);
  }
  const data::GenOptions gen{!d.no_noise};
  if (d.generator == "model")
    return data::gen_model(data::parse_model(d.model), data::parse_scenario(d.scenario), d.n.value_or(6000), d.p, seed,
                           gen);
  if (d.generator == "toy") return data::gen_toy(d.n.value_or(6000), d.p, d.c, seed, gen);
  if (d.generator == "dim-toy") return data::gen_dim_toy(d.n.value_or(8000), seed, !d.no_noise);
  return data::gen_gaussian_pair(d.n.value_or(5000), d.rho, seed);
}

data::Split split_data(const data::Dataset& ds, const DataOpts& d, std::uint64_t seed) {
  std::string spec = d.split;
  if (spec.empty()) spec = generated(d) && d.generator == "dim-toy" ? "0.5,0.25,0.25" : "0.6666666666666667,0.16666666666666667,0.16666666666666667";
  const auto v = double_list(spec);
  if (v.size() != 3) throw UsageError("--split needs three values");
  data::SplitSpec s;
  const bool fractions = v[0] + v[1] + v[2] <= 1.0 + 1e-9;
  if (fractions) {
    s = data::SplitSpec::from_fractions(ds.n(), v[0], v[1], v[2], seed);
  } else {
    s = {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]), static_cast<std::size_t>(v[2]), seed};
  }
  data::Split out = data::split(ds, s);
  const bool z = d.no_standardize ? false : (d.standardize || !generated(d));
  if (z) {
    const data::Dataset ref = out.train;
    data::standardize(out.train, ref);
    if (out.val.n() > 0) data::standardize(out.val, ref);
    if (out.test.n() > 0) data::standardize(out.test, ref);
  }
  return out;
}

// --- Training configuration -----------------------------------------------

std::vector<std::size_t> widths(const std::string& s) {
  auto w = size_list(s);
  if (w.empty()) throw UsageError("hidden widths must be a non-empty list");
  return w;
}

train::MSRLConfig make_config(const TrainOpts& t, const DataOpts& d, std::uint64_t seed) {
  train::MSRLConfig cfg;
  if (generated(d) && d.generator == "model") {
    cfg = train::simulation_preset(data::parse_model(d.model));
  } else if (generated(d) && d.generator == "dim-toy") {
    cfg = train::dimension_preset();
  } else {
    cfg = train::simulation_preset(data::Model::I);
  }
  if (t.preset == "desk") cfg.restarts = 3;
  cfg.seed = seed;
  if (t.d0) cfg.d0 = *t.d0;
  if (t.lambda) cfg.lambda = *t.lambda;
  if (t.lr) cfg.lr = *t.lr;
  if (t.weight_decay) cfg.weight_decay = *t.weight_decay;
  if (t.decay_mode) cfg.decay_mode = train::parse_decay_mode(*t.decay_mode);
  if (t.batch_size) cfg.batch_size = *t.batch_size;
  if (t.max_epochs) cfg.max_epochs = *t.max_epochs;
  if (t.patience) cfg.patience = *t.patience;
  if (t.max_epochs && !t.patience) cfg.patience = std::min(cfg.patience, cfg.max_epochs);
  if (t.restarts) cfg.restarts = *t.restarts;
  if (t.threads) cfg.threads = *t.threads;
  if (t.loss_mode) cfg.loss_mode = objective::parse_loss_mode(*t.loss_mode);
  if (t.es_metric) cfg.es_metric = train::parse_es_metric(*t.es_metric);
  if (t.reference) cfg.reference = train::parse_reference(*t.reference);
  if (t.r_hidden) cfg.r_hidden = widths(*t.r_hidden);
  if (t.d_hidden) cfg.d_hidden = widths(*t.d_hidden);
  if (t.q_hidden) cfg.q_hidden = widths(*t.q_hidden);
  if (t.activation) cfg.activation = nn::parse_activation(*t.activation);
  if (t.negative_slope) cfg.negative_slope = *t.negative_slope;
  if (t.r_output) cfg.r_output = nn::parse_output_transform(*t.r_output);
  cfg.validate();
  return cfg;
}

dimsel::DimSelectConfig make_dim_config(const DimOpts& o, const TrainOpts& t, const train::MSRLConfig& base,
                                        std::uint64_t seed) {
  dimsel::DimSelectConfig c;
  c.eta = o.eta;
  c.d_upper = o.d_upper;
  c.n_folds = o.folds.value_or(t.preset == "paper" ? 5 : 2);
  c.train_cfg = t.preset == "paper" ? base : train::reduced(base);
  // Explicit budget flags win over the reduced preset.
  if (t.restarts) c.train_cfg.restarts = *t.restarts;
  if (t.max_epochs) c.train_cfg.max_epochs = *t.max_epochs;
  if (t.patience) c.train_cfg.patience = *t.patience;
  c.train_cfg.patience = std::min(c.train_cfg.patience, c.train_cfg.max_epochs);
  c.refit_critic = !o.no_refit;
  c.critic_cfg.hidden = base.d_hidden;
  c.seed = seed;
  if (!(c.eta > 0.0 && c.eta < 1.0)) throw UsageError("--eta must lie in (0, 1)");
  if (c.n_folds < 2) throw UsageError("--folds must be at least 2");
  return c;
}

// --- Output helpers -------------------------------------------------------

void stamp(std::ostream& os, const Common& c) {
  if (c.no_timestamp) return;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  os << "# generated " << buf << '\n';
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + p.string() + "'");
  return f;
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

void write_plots(const fs::path& dir, const Matrix& R, const Matrix& Y) {
  const auto n = R.rows();
  if (R.cols() >= 2) {
    svg::Series neg{"Y < 0", {}, {}, "#d62728"}, pos{"Y >= 0", {}, {}, "#1f77b4"};
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& s = Y(i, 0) < 0 ? neg : pos;
      s.x.push_back(R(i, 0));
      s.y.push_back(R(i, 1));
    }
    auto f = open_out(dir / "scatter.svg");
    svg::scatter(f, {"Learned representation", "R1", "R2"}, {neg, pos});
  } else {
    svg::Series s{"", {}, {}, "#1f77b4"};
    for (Eigen::Index i = 0; i < n; ++i) {
      s.x.push_back(R(i, 0));
      s.y.push_back(Y(i, 0));
    }
    auto f = open_out(dir / "scatter.svg");
    svg::scatter(f, {"Response against representation", "R1", "Y"}, {s});
  }
  for (Eigen::Index j = 0; j < R.cols(); ++j) {
    std::vector<double> v(R.col(j).begin(), R.col(j).end());
    const double lo = std::min(0.0, *std::min_element(v.begin(), v.end())) - 0.25;
    const double hi = std::max(1.0, *std::max_element(v.begin(), v.end())) + 0.25;
    std::vector<double> grid(200), ref(200);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      grid[k] = lo + (hi - lo) * static_cast<double>(k) / 199.0;
      ref[k] = grid[k] >= 0.0 && grid[k] <= 1.0 ? 1.0 : 0.0;
    }
    const auto dens = metrics::kde_1d(v, metrics::silverman_bandwidth(v), grid);
    auto f = open_out(dir / ("kde_r" + std::to_string(j + 1) + ".svg"));
    svg::lines(f, {"Density of R" + std::to_string(j + 1), "value", "density"},
               {{"estimate", grid, dens, "#1f77b4"}, {"reference", grid, ref, "#ff7f0e"}});
  }
}

metrics::MetricReport report_for(const nn::MLP& R, const data::Dataset& fit, const data::Dataset& eval) {
  return metrics::evaluate_representation(R.predict(fit.X), fit.Y, R.predict(eval.X), eval.Y);
}

void write_report(const fs::path& p, const Common& c, const metrics::MetricReport& r, std::size_t d0) {
  auto f = open_out(p);
  stamp(f, c);
  f << metrics::csv_header(d0) << '\n' << metrics::csv_row(r) << '\n';
}

// --- Commands -------------------------------------------------------------

int cmd_simulate(const Common& c, const DataOpts& d, std::ostream& out, std::ostream& err) {
  if (!generated(d)) throw UsageError("simulate needs a --generator, not --data");
  const data::Dataset ds = load_data(d, c.seed);
  if (c.out.empty() || c.out == "-") {
    stamp(out, c);
    data::write_csv(out, ds);
  } else {
    if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f = open_out(c.out);
    stamp(f, c);
    data::write_csv(f, ds);
    err << "simulate: wrote " << ds.n() << " rows to " << c.out << '\n';
  }
  return kOk;
}

int cmd_train(const Common& c, const DataOpts& d, const TrainOpts& t, const DimOpts& dim, bool dim_select,
              std::ostream& out, std::ostream& err) {
  if (!t.d0 && !dim_select) throw UsageError("train needs --d0 or --dim-select");
  const fs::path dir = out_dir(c);
  const data::Dataset ds = load_data(d, c.seed);
  const data::Split sp = split_data(ds, d, c.seed);
  if (ds.categorical()) throw UsageError("train supports continuous responses only");
  train::MSRLConfig cfg = make_config(t, d, c.seed);

  if (dim_select) {
    data::Dataset pool = sp.train;
    pool.X.conservativeResize(sp.train.X.rows() + sp.val.X.rows(), Eigen::NoChange);
    pool.X.bottomRows(sp.val.X.rows()) = sp.val.X;
    pool.Y.conservativeResize(sp.train.Y.rows() + sp.val.Y.rows(), Eigen::NoChange);
    pool.Y.bottomRows(sp.val.Y.rows()) = sp.val.Y;
    const auto dc = make_dim_config(dim, t, cfg, c.seed);
    const auto trace = dimsel::select_dimension(pool, dc);
    auto f = open_out(dir / "dim_trace.txt");
    stamp(f, c);
    dimsel::write_trace(f, trace);
    cfg.d0 = trace.selected;
    err << "train: selected d0=" << cfg.d0 << '\n';
  }

  err << "train: n_train=" << sp.train.n() << " n_val=" << sp.val.n() << " n_test=" << sp.test.n() << " d0=" << cfg.d0
      << " restarts=" << cfg.restarts << '\n';
  const train::TrainedModel m = train::train_msrl(sp.train, sp.val, cfg);
  for (const auto& s : m.restarts)
    err << "train: restart " << s.restart << (s.diverged ? " diverged" : "") << " epochs=" << s.epochs_run
        << " best_epoch=" << s.best_epoch << " val=" << g6(s.best_val_metric) << '\n';
  {
    auto f = open_out(dir / "model.txt");
    train::save_model(f, m);
  }
  {
    auto f = open_out(dir / "train_log.csv");
    stamp(f, c);
    train::write_history(f, m);
  }
  const data::Dataset& eval = sp.test.n() >= 2 ? sp.test : sp.val;
  const auto rep = report_for(m.R, sp.train, eval);
  write_report(dir / "report.csv", c, rep, cfg.d0);
  out << metrics::csv_header(cfg.d0) << '\n' << metrics::csv_row(rep) << '\n';
  return kOk;
}

int cmd_eval(const Common& c, const DataOpts& d, const std::string& model_file, std::ostream& out) {
  const fs::path dir = out_dir(c);
  std::ifstream in(model_file);
  if (!in) throw UsageError("cannot read model file '" + model_file + "'");
  const train::TrainedModel m = train::load_model(in);
  const data::Dataset ds = load_data(d, c.seed);
  const data::Split sp = split_data(ds, d, c.seed);
  if (sp.train.dx() != m.R.spec().input_dim) throw UsageError("model input dimension does not match the data");
  const data::Dataset& eval = sp.test.n() >= 2 ? sp.test : sp.val;
  const auto rep = report_for(m.R, sp.train, eval);
  write_report(dir / "eval_report.csv", c, rep, m.R.spec().output_dim);
  write_plots(dir, m.R.predict(eval.X), eval.Y);
  out << metrics::csv_header(m.R.spec().output_dim) << '\n' << metrics::csv_row(rep) << '\n';
  return kOk;
}

std::vector<std::uint64_t> seed_list(const std::string& s, std::uint64_t fallback) {
  if (s.empty()) return {fallback};
  std::vector<std::uint64_t> out;
  for (auto v : size_list(s)) out.push_back(v);
  return out;
}

struct DimRun {
  std::uint64_t seed;
  std::map<double, dimsel::DimSelectTrace> by_eta;
};

// One bisection per eta over a shared cache of fold-averaged estimates.
DimRun run_dim_seed(const DataOpts& d, const TrainOpts& t, const DimOpts& o, std::uint64_t seed,
                    const std::vector<double>& etas, std::ostream& err) {
  const data::Dataset ds = [&] {
    data::Dataset x = load_data(d, seed);
    if (!generated(d) && !d.no_standardize) data::standardize(x, data::Dataset(x));
    return x;
  }();
  const train::MSRLConfig base = make_config(t, d, seed);
  DimRun run{seed, {}};
  std::map<std::size_t, dimsel::Probe> cache;
  for (double eta : etas) {
    DimOpts oe = o;
    oe.eta = eta;
    const auto dc = make_dim_config(oe, t, base, seed);
    dc.validate(ds.dx());
    const std::size_t du = dc.d_upper == 0 ? ds.dx() : dc.d_upper;
    auto trace = dimsel::select_dimension(du, eta, [&](std::size_t k) {
      if (auto it = cache.find(k); it != cache.end()) return it->second;
      const auto probe = dimsel::cv_mi_estimate(ds, k, dc);
      err << "dim-select: seed=" << seed << " k=" << k << " mean=" << g6(probe.mean) << '\n';
      return cache[k] = probe;
    });
    run.by_eta[eta] = std::move(trace);
  }
  return run;
}

void write_proportions(std::ostream& os, const std::vector<DimRun>& runs, const std::vector<double>& etas,
                       std::size_t d_max) {
  os << "eta,d,count,proportion\n";
  for (double eta : etas) {
    std::vector<std::size_t> counts(d_max + 1, 0);
    for (const auto& r : runs) ++counts.at(r.by_eta.at(eta).selected);
    for (std::size_t k = 1; k <= d_max; ++k)
      os << g6(eta) << ',' << k << ',' << counts[k] << ',' << g6(static_cast<double>(counts[k]) / runs.size()) << '\n';
  }
}

int cmd_dim_select(const Common& c, const DataOpts& d, const TrainOpts& t, const DimOpts& o,
                   const std::string& seeds, std::ostream& out, std::ostream& err) {
  if (!(o.eta > 0.0 && o.eta < 1.0)) throw UsageError("--eta must lie in (0, 1)");
  const auto list = seed_list(seeds, c.seed);
  std::vector<DimRun> runs;
  bool unreliable = false;
  std::size_t d_max = 1;
  std::optional<fs::path> dir;
  if (!c.out.empty()) dir = out_dir(c);
  for (auto s : list) {
    runs.push_back(run_dim_seed(d, t, o, s, {o.eta}, err));
    const auto& tr = runs.back().by_eta.at(o.eta);
    unreliable = unreliable || tr.unreliable;
    d_max = std::max(d_max, tr.probes.front().k);
    out << "seed=" << s << " selected=" << tr.selected << (tr.unreliable ? " unreliable" : "") << '\n';
    dimsel::write_trace(out, tr);
    if (dir) {
      auto f = open_out(*dir / ("trace_seed" + std::to_string(s) + ".txt"));
      stamp(f, c);
      dimsel::write_trace(f, tr);
    }
  }
  if (dir && list.size() > 1) {
    auto f = open_out(*dir / "dim_proportions.csv");
    stamp(f, c);
    write_proportions(f, runs, {o.eta}, d_max);
  }
  if (unreliable) {
    err << "dim-select: selection unreliable (non-positive estimate at the upper dimension)\n";
    return kUnreliable;
  }
  return kOk;
}

int cmd_table3(const Common& c, const DataOpts& d, const TrainOpts& t, const DimOpts& o, const std::string& seeds,
               const std::string& etas_s, std::ostream& out, std::ostream& err) {
  const fs::path dir = out_dir(c);
  const auto etas = double_list(etas_s);
  for (double e : etas)
    if (!(e > 0.0 && e < 1.0)) throw UsageError("--etas values must lie in (0, 1)");
  std::vector<DimRun> runs;
  std::size_t d_max = 1;
  for (auto s : seed_list(seeds, c.seed)) {
    runs.push_back(run_dim_seed(d, t, o, s, etas, err));
    for (const auto& [eta, tr] : runs.back().by_eta) {
      d_max = std::max(d_max, tr.probes.front().k);
      auto f = open_out(dir / ("trace_seed" + std::to_string(s) + "_eta" + g6(eta) + ".txt"));
      stamp(f, c);
      dimsel::write_trace(f, tr);
    }
  }
  std::ostringstream table;
  write_proportions(table, runs, etas, d_max);
  auto f = open_out(dir / "table3.csv");
  stamp(f, c);
  f << table.str();
  out << table.str();
  return kOk;
}

struct CellResult {
  std::string model, scenario, method;
  std::vector<double> dc, ape;
};

std::pair<double, double> mean_se(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

int cmd_table1(const Common& c, DataOpts d, const TrainOpts& t, const std::string& cells_s,
               std::optional<std::size_t> folds_opt, std::size_t partitions, const std::string& methods_s,
               std::ostream& out, std::ostream& err) {
  const fs::path dir = out_dir(c);
  const std::size_t folds = folds_opt.value_or(t.preset == "paper" ? partitions : 2);
  if (folds < 1 || folds > partitions) throw UsageError("--folds must lie in [1, --partitions]");
  std::vector<std::pair<std::string, std::string>> cells;
  if (cells_s == "all") {
    for (auto m : {"I", "II", "III", "IV"})
      for (auto s : {"i", "ii", "iii", "iv"}) cells.emplace_back(m, s);
  } else {
    for (const auto& cell : split_list(cells_s)) {
      const auto colon = cell.find(':');
      if (colon == std::string::npos) throw UsageError("cells look like I:i,IV:ii");
      cells.emplace_back(cell.substr(0, colon), cell.substr(colon + 1));
    }
  }
  const auto methods = split_list(methods_s);
  for (const auto& m : methods)
    if (m != "msrl" && m != "sir" && m != "save") throw UsageError("unknown method '" + m + "'");
  const std::vector<std::size_t> slice_candidates{5, 10, 15, 20, 25, 30};

  std::vector<CellResult> results;
  for (const auto& [model_s, scen_s] : cells) {
    d.generator = "model";
    d.csv.clear();
    d.model = model_s;
    d.scenario = scen_s;
    const auto model = data::parse_model(model_s);
    const auto scen = data::parse_scenario(scen_s);
    const data::Dataset ds = data::gen_model(model, scen, d.n.value_or(6000), d.p, c.seed, {!d.no_noise});
    const train::MSRLConfig base = make_config(t, d, c.seed);
    const auto parts = data::kfold(ds.n(), partitions, c.seed);
    std::map<std::string, CellResult> per;
    for (const auto& m : methods) per[m] = {model_s, scen_s, m, {}, {}};

    for (std::size_t f = 0; f < folds; ++f) {
      auto rest = data::complement(ds.n(), parts[f]);
      Rng rng(c.seed, 2000 + f);
      rng.shuffle(std::span<std::size_t>(rest));
      // Validation gets one part's worth of rows, the rest trains.
      const std::size_t n_val = parts[f].size();
      if (rest.size() <= n_val + 2) throw UsageError("too few rows for the fold layout");
      const std::span<const std::size_t> all(rest);
      const data::Dataset tr = ds.subset(all.subspan(n_val)), va = ds.subset(all.first(n_val)),
                          te = ds.subset(parts[f]);
      err << "table1: " << model_s << ':' << scen_s << " fold " << f + 1 << '/' << folds << '\n';
      for (const auto& m : methods) {
        metrics::MetricReport rep;
        if (m == "msrl") {
          train::MSRLConfig cfg = base;
          cfg.seed = c.seed * 1000 + f;
          const auto tm = train::train_msrl(tr, va, cfg);
          rep = report_for(tm.R, tr, te);
        } else {
          const auto method = m == "sir" ? baselines::Method::sir : baselines::Method::save;
          const Vector y = tr.Y.col(0);
          const auto h = baselines::select_slices(method, tr.X, y, base.d0, slice_candidates, va.X, va.Y);
          const auto fit = baselines::fit(method, tr.X, y, base.d0, h);
          rep = metrics::evaluate_representation(fit.project(tr.X), tr.Y, fit.project(te.X), te.Y);
        }
        per[m].dc.push_back(rep.dc);
        per[m].ape.push_back(rep.ape);
        err << "table1:   " << m << " dc=" << g6(rep.dc) << " ape=" << g6(rep.ape) << '\n';
      }
    }
    std::vector<svg::Series> dc_bars;
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
    for (std::size_t k = 0; k < methods.size(); ++k) {
      results.push_back(per[methods[k]]);
      dc_bars.push_back({methods[k], {}, {mean_se(per[methods[k]].dc).first, mean_se(per[methods[k]].ape).first},
                         colors[k % 3]});
    }
    auto f = open_out(dir / ("table1_" + model_s + "_" + scen_s + ".svg"));
    svg::bars(f, {"Model " + model_s + ", scenario (" + scen_s + ")", "", "value"}, {"DC", "APE"}, dc_bars);
  }

  std::ostringstream table;
  table << "model,scenario,method,dc_mean,dc_se,ape_mean,ape_se\n";
  for (const auto& r : results) {
    const auto [dm, ds_] = mean_se(r.dc);
    const auto [am, as] = mean_se(r.ape);
    table << r.model << ',' << r.scenario << ',' << r.method << ',' << g17(dm) << ',' << g17(ds_) << ',' << g17(am)
          << ',' << g17(as) << '\n';
  }
  auto f = open_out(dir / "table1.csv");
  stamp(f, c);
  f << table.str();
  out << table.str();
  return kOk;
}

int cmd_mi_estimate(const Common& c, DataOpts d, const std::string& rep_cols, std::size_t epochs,
                    std::size_t patience, double lr, std::ostream& out) {
  data::Dataset ds;
  if (generated(d)) {
    if (d.generator != "gaussian") throw UsageError("mi-estimate generates only the gaussian pair");
    ds = load_data(d, c.seed);
  } else {
    // Y from --response, representation from --representation (default: all other columns).
    ds = load_data(d, c.seed);
    if (!rep_cols.empty()) {
      const auto want = split_list(rep_cols);
      std::vector<Eigen::Index> idx;
      for (const auto& w : want) {
        const auto it = std::find(ds.meta.x_names.begin(), ds.meta.x_names.end(), w);
        if (it == ds.meta.x_names.end()) throw UsageError("representation column '" + w + "' not found");
        idx.push_back(it - ds.meta.x_names.begin());
      }
      Matrix X(ds.X.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = ds.X.col(idx[j]);
      ds.X = X;
    }
  }
  if (d.split.empty()) d.split = "0.8,0.2,0";
  d.no_standardize = true;
  const data::Split sp = split_data(ds, d, c.seed);
  train::CriticConfig cc;
  cc.max_epochs = epochs;
  cc.patience = patience;
  cc.lr = lr;
  cc.seed = c.seed;
  const nn::MLP D = train::train_critic(sp.train.Y, sp.train.X, sp.val.Y, sp.val.X, cc);
  const double est = objective::mi_estimate(D, sp.val.Y, sp.val.X);
  out << "mi_estimate=" << g17(est) << '\n';
  if (generated(d)) out << "analytic=" << g17(-0.5 * std::log(1.0 - d.rho * d.rho)) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mutual-information sufficient representation learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "msrl 1.0");

  Common common;
  DataOpts data_opts;
  TrainOpts train_opts;
  DimOpts dim_opts;
  bool dim_select = false;
  std::string model_file, seeds, cells = "all", methods = "msrl,sir,save", etas = "0.2,0.1", rep_cols;
  std::optional<std::size_t> folds;
  std::size_t partitions = 6, critic_epochs = 300, critic_patience = 30;
  double critic_lr = 1e-3;

  std::map<const CLI::App*, std::string> default_generator;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset as CSV");
  add_common(sim, common, false);
  add_data(sim, data_opts);
  default_generator[sim] = "model";

  auto* tr = app.add_subcommand("train", "Train a representation and report test metrics");
  add_common(tr, common, true);
  add_data(tr, data_opts);
  default_generator[tr] = "model";
  add_train(tr, train_opts);
  add_dim(tr, dim_opts);
  tr->add_flag("--dim-select", dim_select, "Choose d0 by cross-validation before training");

  auto* ev = app.add_subcommand("eval", "Evaluate a saved model; writes report and SVG plots");
  add_common(ev, common, true);
  add_data(ev, data_opts);
  default_generator[ev] = "model";
  ev->add_option("--model-file", model_file, "Model written by train")->required();

  auto* ds = app.add_subcommand("dim-select", "Cross-validated bisection for the representation dimension");
  add_common(ds, common, false);
  add_data(ds, data_opts);
  default_generator[ds] = "dim-toy";
  add_train(ds, train_opts);
  add_dim(ds, dim_opts);
  ds->add_option("--seeds", seeds, "Comma-separated seeds for batch mode");

  auto* t1 = app.add_subcommand("reproduce-table1", "MSRL, SIR and SAVE over simulation cells");
  add_common(t1, common, true);
  add_data(t1, data_opts);
  default_generator[t1] = "model";
  add_train(t1, train_opts);
  t1->add_option("--cells", cells, "all or a list like I:i,IV:ii");
  t1->add_option("--folds", folds, "Evaluated folds (desk 2, paper 6)");
  t1->add_option("--partitions", partitions, "Folds of the partition; each test fold is one part");
  t1->add_option("--methods", methods, "Subset of msrl,sir,save");

  auto* t3 = app.add_subcommand("reproduce-table3", "Proportions of selected dimensions over seeds");
  add_common(t3, common, true);
  add_data(t3, data_opts);
  default_generator[t3] = "dim-toy";
  add_train(t3, train_opts);
  add_dim(t3, dim_opts);
  t3->add_option("--seeds", seeds, "Comma-separated seeds (default 1..10)");
  t3->add_option("--etas", etas, "Comma-separated tolerances");

  auto* mi = app.add_subcommand("mi-estimate", "Train a critic and report the plug-in MI estimate");
  add_common(mi, common, false);
  add_data(mi, data_opts);
  default_generator[mi] = "gaussian";
  mi->add_option("--representation", rep_cols, "CSV columns holding the representation");
  mi->add_option("--critic-epochs", critic_epochs, "Critic epoch budget");
  mi->add_option("--critic-patience", critic_patience, "Critic early-stopping patience");
  mi->add_option("--critic-lr", critic_lr, "Critic learning rate");

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  std::vector<std::string> rev(expanded.rbegin(), expanded.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (data_opts.generator.empty())
    for (const auto& [sub, gen] : default_generator)
      if (sub->parsed()) data_opts.generator = gen;

  try {
    if (sim->parsed()) return cmd_simulate(common, data_opts, out, err);
    if (tr->parsed()) return cmd_train(common, data_opts, train_opts, dim_opts, dim_select, out, err);
    if (ev->parsed()) return cmd_eval(common, data_opts, model_file, out);
    if (ds->parsed()) return cmd_dim_select(common, data_opts, train_opts, dim_opts, seeds, out, err);
    if (t1->parsed()) return cmd_table1(common, data_opts, train_opts, cells, folds, partitions, methods, out, err);
    if (t3->parsed()) {
      if (seeds.empty()) seeds = "1,2,3,4,5,6,7,8,9,10";
      return cmd_table3(common, data_opts, train_opts, dim_opts, seeds, etas, out, err);
    }
    if (mi->parsed()) return cmd_mi_estimate(common, data_opts, rep_cols, critic_epochs, critic_patience, critic_lr, out);
  } catch (const train::TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const data::CsvError& e) {
    err << "data error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace msrl::cli
