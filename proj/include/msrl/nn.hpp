#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "msrl/autodiff.hpp"
#include "msrl/matrix.hpp"

namespace msrl::nn {

enum class Activation { leaky_relu, relu };
enum class OutputTransform { identity, truncate01, sigmoid };

std::string to_string(Activation a);
std::string to_string(OutputTransform t);
Activation parse_activation(const std::string& s);
OutputTransform parse_output_transform(const std::string& s);

struct MLPSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  Activation activation = Activation::leaky_relu;
  double negative_slope = 0.01;
  OutputTransform output_transform = OutputTransform::identity;
  // Sup-norm cap of the theory's network class; carried as metadata, never enforced.
  double bound = 0.0;

  /// Throws std::invalid_argument when any dimension is zero.
  void validate() const;
  /// Number of affine layers.
  std::size_t depth() const { return hidden_widths.size() + 1; }
  std::size_t max_width() const;
  /// Sum over layers of k_out * (k_in + 1).
  std::size_t param_count() const;

  bool operator==(const MLPSpec&) const = default;
};

struct Layer {
  ad::Tensor weight;  // [out x in]
  ad::Tensor bias;    // [out]
};

/// Feedforward network: affine layers with an activation between them and an
/// output transform after the last affine map.
///
/// Copying an MLP copies its parameters; two MLP objects never alias storage.
class MLP {
 public:
  MLP() = default;
  MLP(MLPSpec spec, std::vector<Layer> layers);
  MLP(const MLP& other);
  MLP& operator=(const MLP& other);
  MLP(MLP&&) noexcept = default;
  MLP& operator=(MLP&&) noexcept = default;

  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static MLP init(const MLPSpec& spec, std::uint64_t seed);

  const MLPSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t param_count() const { return spec_.param_count(); }

  /// Parameter leaves in layer order (weight, bias, weight, bias, ...).
  std::vector<ad::Tensor> parameters() const;

  /// Differentiable forward pass; gradients flow into the parameters.
  ad::Tensor forward(const ad::Tensor& batch) const;
  /// Forward pass with parameters treated as constants (gradients still flow
  /// into `batch`).
  ad::Tensor forward_frozen(const ad::Tensor& batch) const;
  /// Graph-free evaluation.
  Matrix predict(const Matrix& batch) const;

  /// Overwrites parameter values with those of a network of identical spec.
  void assign_parameters(const MLP& other);
  bool all_finite() const;

 private:
  ad::Tensor forward_impl(const ad::Tensor& batch, bool frozen) const;

  MLPSpec spec_;
  std::vector<Layer> layers_;
};

/// min(max(t, 0), 1) written as relu(t) - relu(relu(t) - 1).
ad::Tensor truncate01(const ad::Tensor& t);

/// Text format, versioned header, %.17g values (bit-exact round trip).
void save(std::ostream& os, const MLP& net);
MLP load(std::istream& is);

}  // namespace msrl::nn
