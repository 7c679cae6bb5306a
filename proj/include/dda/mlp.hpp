// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dda/tensor.hpp"

namespace dda {

enum class Activation { Identity, ReLU, LeakyReLU };

/// Negative-side slope of LeakyReLU.
inline constexpr float kLeakySlope = 0.2f;

float apply_activation(Activation act, float x);
std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Tensor weights;  // [out x in]
  Tensor bias;     // [out]
  Activation activation = Activation::Identity;

  std::size_t in() const { return weights.cols(); }
  std::size_t out() const { return weights.rows(); }
};

enum class Role { FeatureExtractor, Classifier, Discriminator };
std::string to_string(Role role);
Role role_from_string(const std::string& name);

/// A stack of dense layers. The role is fixed at construction; it only
/// labels what the network is used for.
class Mlp {
 public:
  Mlp(Role role, std::vector<DenseLayer> layers);

  /// Builds a network with `widths` = {in, h1, ..., out}. Hidden layers use
  /// `hidden`, the last layer uses `output`. Weights are Glorot-uniform from
  /// a generator seeded with `seed`; biases start at zero.
  static Mlp create(Role role, std::span<const std::size_t> widths,
                    Activation hidden, Activation output, std::uint64_t seed);

  /// Single Identity layer with W = I, b = 0.
  static Mlp identity(Role role, std::size_t dim);

  Role role() const { return role_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t input_dim() const { return layers_.front().in(); }
  std::size_t output_dim() const { return layers_.back().out(); }
  std::size_t parameter_count() const;

  /// Parameters in canonical order: per layer, weights row-major then bias.
  std::vector<float> flatten() const;
  void load_flat(std::span<const float> params);

 private:
  Role role_;
  std::vector<DenseLayer> layers_;
};

bool bitwise_equal(const Mlp& a, const Mlp& b);

/// Shape summary: layer count, input width, then (output width, activation
/// code) per layer. Small integers, so exact as floats.
std::vector<float> describe_architecture(const Mlp& net);
/// Zero-initialised network with the described shape.
Mlp architecture_shell(Role role, std::span<const float> description);

/// Everything a backward pass needs: the input and each layer's
/// post-activation output (last entry is the network output).
struct ForwardPass {
  Tensor input;
  std::vector<Tensor> outputs;

  const Tensor& output() const { return outputs.back(); }
};

ForwardPass mlp_forward(const Mlp& net, const Tensor& batch);

/// Convenience: only the network output.
Tensor mlp_predict(const Mlp& net, const Tensor& batch);

struct LayerGradient {
  Tensor weights;
  Tensor bias;
};

/// Per-parameter gradients in the owning network's canonical layer order.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(std::vector<LayerGradient> entries);

  static GradientSet zeros_like(const Mlp& net);

  const std::vector<LayerGradient>& entries() const { return entries_; }
  std::vector<LayerGradient>& entries() { return entries_; }
  std::size_t parameter_count() const;

  std::vector<float> flatten() const;
  /// Shapes taken from `net`.
  static GradientSet from_flat(const Mlp& net, std::span<const float> values);

  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator-=(const GradientSet& other);
  GradientSet& operator*=(float factor);

  void set_zero();
  bool is_zero() const;
  bool all_finite() const;
  bool matches(const Mlp& net) const;

 private:
  std::vector<LayerGradient> entries_;
};

bool bitwise_equal(const GradientSet& a, const GradientSet& b);

struct BackwardResult {
  GradientSet params;
  Tensor input_grad;
};

/// Reverse pass for `output_grad` = dLoss/dOutput. Gradients are sums over
/// the batch rows; any 1/batch factor belongs in `output_grad`.
BackwardResult mlp_backward(const Mlp& net, const ForwardPass& pass,
                            const Tensor& output_grad);

}  // namespace dda
