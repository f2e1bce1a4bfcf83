#include "msrl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "msrl/rng.hpp"

namespace msrl::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "leaky_relu"; }

std::string to_string(OutputTransform t) {
  switch (t) {
    case OutputTransform::truncate01: return "truncate01";
    case OutputTransform::sigmoid: return "sigmoid";
    default: return "identity";
  }
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

OutputTransform parse_output_transform(const std::string& s) {
  if (s == "identity") return OutputTransform::identity;
  if (s == "truncate01") return OutputTransform::truncate01;
  if (s == "sigmoid") return OutputTransform::sigmoid;
  throw std::invalid_argument("unknown output transform '" + s + "'");
}

void MLPSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MLPSpec: input and output dims must be >= 1");
  for (auto w : hidden_widths)
    if (w == 0) throw std::invalid_argument("MLPSpec: hidden widths must be >= 1");
}

std::size_t MLPSpec::max_width() const {
  std::size_t w = std::max(input_dim, output_dim);
  for (auto h : hidden_widths) w = std::max(w, h);
  return w;
}

std::size_t MLPSpec::param_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (auto h : hidden_widths) {
    total += h * (in + 1);
    in = h;
  }
  return total + output_dim * (in + 1);
}

namespace {

ad::Tensor copy_leaf(const ad::Tensor& t) {
  return ad::Tensor::variable(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
}

}  // namespace

MLP::MLP(MLPSpec spec, std::vector<Layer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.depth()) throw std::invalid_argument("MLP: layer count does not match spec");
  std::size_t in = spec_.input_dim;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::size_t out = i + 1 < layers_.size() ? spec_.hidden_widths[i] : spec_.output_dim;
    const auto& l = layers_[i];
    if (l.weight.shape() != ad::Shape{out, in} || l.bias.size() != out)
      throw ad::DimensionError("MLP: layer " + std::to_string(i) + " shapes do not chain");
    in = out;
  }
}

MLP::MLP(const MLP& other) : spec_(other.spec_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back({copy_leaf(l.weight), copy_leaf(l.bias)});
}

MLP& MLP::operator=(const MLP& other) {
  if (this != &other) {
    MLP tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

MLP MLP::init(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, 0x6d6c70);
  std::vector<Layer> layers;
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.depth(); ++i) {
    const std::size_t out = i < spec.hidden_widths.size() ? spec.hidden_widths[i] : spec.output_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(out * in);
    for (double& v : w) v = rng.uniform(-bound, bound);
    layers.push_back({ad::Tensor::variable({out, in}, std::move(w)), ad::Tensor::zeros({out}, true)});
    in = out;
  }
  return MLP(spec, std::move(layers));
}

std::vector<ad::Tensor> MLP::parameters() const {
  std::vector<ad::Tensor> out;
  out.reserve(2 * layers_.size());
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

ad::Tensor truncate01(const ad::Tensor& t) { return ad::relu(t) - ad::relu(ad::add_scalar(ad::relu(t), -1.0)); }

ad::Tensor MLP::forward_impl(const ad::Tensor& batch, bool frozen) const {
  if (batch.ndim() != 2 || batch.cols() != spec_.input_dim)
    throw ad::DimensionError("MLP::forward: batch width " + std::to_string(batch.cols()) + " != input_dim " +
                             std::to_string(spec_.input_dim));
  ad::Tensor h = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    h = frozen ? ad::linear(h, ad::detach(l.weight), ad::detach(l.bias)) : ad::linear(h, l.weight, l.bias);
    if (i + 1 < layers_.size()) {
      h = spec_.activation == Activation::relu ? ad::relu(h) : ad::leaky_relu(h, spec_.negative_slope);
    }
  }
  switch (spec_.output_transform) {
    case OutputTransform::truncate01: return truncate01(h);
    case OutputTransform::sigmoid: return ad::sigmoid(h);
    default: return h;
  }
}

ad::Tensor MLP::forward(const ad::Tensor& batch) const { return forward_impl(batch, false); }
ad::Tensor MLP::forward_frozen(const ad::Tensor& batch) const { return forward_impl(batch, true); }

Matrix MLP::predict(const Matrix& batch) const {
  if (static_cast<std::size_t>(batch.cols()) != spec_.input_dim)
    throw ad::DimensionError("MLP::predict: batch width " + std::to_string(batch.cols()) + " != input_dim " +
                             std::to_string(spec_.input_dim));
  Matrix h = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const auto out = static_cast<Eigen::Index>(l.weight.shape()[0]);
    const auto in = static_cast<Eigen::Index>(l.weight.shape()[1]);
    Eigen::Map<const Matrix> w(l.weight.values().data(), out, in);
    Eigen::Map<const Eigen::RowVectorXd> b(l.bias.values().data(), out);
    Matrix next = h * w.transpose();
    next.rowwise() += b;
    if (i + 1 < layers_.size()) {
      if (spec_.activation == Activation::relu) {
        next = next.cwiseMax(0.0);
      } else {
        const double a = spec_.negative_slope;
        next = next.unaryExpr([a](double x) { return x > 0.0 ? x : a * x; });
      }
    }
    h = std::move(next);
  }
  switch (spec_.output_transform) {
    case OutputTransform::truncate01: return h.cwiseMax(0.0).cwiseMin(1.0);
    case OutputTransform::sigmoid:
      return h.unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
    default: return h;
  }
}

void MLP::assign_parameters(const MLP& other) {
  if (!(spec_ == other.spec_)) throw std::invalid_argument("assign_parameters: spec mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto w = layers_[i].weight.mutable_values();
    auto b = layers_[i].bias.mutable_values();
    std::copy(other.layers_[i].weight.values().begin(), other.layers_[i].weight.values().end(), w.begin());
    std::copy(other.layers_[i].bias.values().begin(), other.layers_[i].bias.values().end(), b.begin());
  }
}

bool MLP::all_finite() const {
  for (const auto& p : parameters())
    for (double v : p.values())
      if (!std::isfinite(v)) return false;
  return true;
}

// --- Serialization --------------------------------------------------------

namespace {

constexpr const char* kMagic = "msrl-mlp";
constexpr int kVersion = 1;

void write_values(std::ostream& os, std::span<const double> vals) {
  char buf[32];
  for (std::size_t i = 0; i < vals.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", vals[i]);
    os << (i ? " " : "") << buf;
  }
  os << '\n';
}

std::vector<double> read_values(std::istream& is, std::size_t n) {
  std::vector<double> out(n);
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(is >> tok)) throw std::runtime_error("mlp file: truncated parameter block");
    char* end = nullptr;
    out[i] = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw std::runtime_error("mlp file: bad number '" + tok + "'");
  }
  return out;
}

void expect(std::istream& is, const std::string& key) {
  std::string tok;
  if (!(is >> tok) || tok != key) throw std::runtime_error("mlp file: expected '" + key + "', got '" + tok + "'");
}

}  // namespace

void save(std::ostream& os, const MLP& net) {
  const auto& s = net.spec();
  char slope[32];
  std::snprintf(slope, sizeof slope, "%.17g", s.negative_slope);
  os << kMagic << ' ' << kVersion << '\n';
  os << "input_dim " << s.input_dim << '\n';
  os << "hidden " << s.hidden_widths.size();
  for (auto w : s.hidden_widths) os << ' ' << w;
  os << '\n';
  os << "output_dim " << s.output_dim << '\n';
  os << "activation " << to_string(s.activation) << ' ' << slope << '\n';
  os << "output_transform " << to_string(s.output_transform) << '\n';
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    os << "layer " << i << ' ' << l.weight.shape()[0] << ' ' << l.weight.shape()[1] << '\n';
    write_values(os, l.weight.values());
    write_values(os, l.bias.values());
  }
  os << "end\n";
}

MLP load(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw std::runtime_error("mlp file: bad header");
  if (version != kVersion) throw std::runtime_error("mlp file: unsupported version " + std::to_string(version));
  MLPSpec s;
  std::size_t n_hidden = 0;
  std::string act, transform, slope;
  expect(is, "input_dim");
  is >> s.input_dim;
  expect(is, "hidden");
  is >> n_hidden;
  s.hidden_widths.resize(n_hidden);
  for (auto& w : s.hidden_widths) is >> w;
  expect(is, "output_dim");
  is >> s.output_dim;
  expect(is, "activation");
  is >> act >> slope;
  s.activation = parse_activation(act);
  s.negative_slope = std::strtod(slope.c_str(), nullptr);
  expect(is, "output_transform");
  is >> transform;
  s.output_transform = parse_output_transform(transform);
  if (!is) throw std::runtime_error("mlp file: malformed spec block");
  s.validate();
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < s.depth(); ++i) {
    std::size_t idx = 0, out = 0, in = 0;
    expect(is, "layer");
    if (!(is >> idx >> out >> in) || idx != i) throw std::runtime_error("mlp file: bad layer header");
    auto w = read_values(is, out * in);
    auto b = read_values(is, out);
    layers.push_back({ad::Tensor::variable({out, in}, std::move(w)), ad::Tensor::variable({out}, std::move(b))});
  }
  expect(is, "end");
  return MLP(std::move(s), std::move(layers));
}

}  // namespace msrl::nn
