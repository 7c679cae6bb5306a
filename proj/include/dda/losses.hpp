// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dda/mlp.hpp"
#include "dda/tensor.hpp"

namespace dda {

/// Adversarial objective family.
///  - ADDA: BCE discriminator, inverted-label mapping loss.
///  - GRL:  BCE discriminator, mapping loss = -discriminator loss.
///  - WDA:  Wasserstein critic, optionally with a gradient penalty.
enum class LossKind { ADDA, GRL, WDA };

struct LossVariant {
  LossKind kind = LossKind::ADDA;
  /// Gradient-penalty weight (WDA only). Off by default; a spectral cap on
  /// the critic is the usual way to keep it Lipschitz here.
  double gp_weight = 0.0;

  static LossVariant adda() { return {LossKind::ADDA, 0.0}; }
  static LossVariant grl() { return {LossKind::GRL, 0.0}; }
  static LossVariant wda(double gp_weight = 0.0) { return {LossKind::WDA, gp_weight}; }
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Loss over a single input tensor and its gradient.
struct LossOutput {
  double loss = 0.0;
  Tensor grad;
};

/// Loss over a (source, target) pair of discriminator outputs.
struct PairLossOutput {
  double loss = 0.0;
  Tensor grad_src;
  Tensor grad_tgt;
};

/// Mean softmax cross-entropy; grad = (softmax - onehot) / batch.
LossOutput classification_loss(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax of a [batch x classes] tensor.
Tensor softmax(const Tensor& logits);

/// Which side of the domain split a batch of discriminator outputs comes from.
enum class DomainSide { Source, Target };

/// The part of the discriminator loss one node can compute from its own
/// outputs. BCE variants: mean BCE against the domain label (source 1,
/// target 0). WDA: -mean(d) on the source side, +mean(d) on the target side.
LossOutput side_discriminator_loss(const LossVariant& variant, const Tensor& d,
                                   DomainSide side);

/// BCE variants: average of the two side losses. WDA: their sum, i.e.
/// -(mean(d_src) - mean(d_tgt)).
PairLossOutput discriminator_loss(const LossVariant& variant, const Tensor& d_src,
                                  const Tensor& d_tgt);

/// Mapping loss for the target extractor. GRL needs `d_src` and is the exact
/// negation of discriminator_loss; ADDA and WDA ignore it (grad_src is zero).
PairLossOutput mapping_loss(const LossVariant& variant, const Tensor& d_tgt,
                            const Tensor* d_src = nullptr);

/// The d_tgt-dependent part of mapping_loss, computable on the target node
/// alone. Its gradient equals mapping_loss(...).grad_tgt bit for bit.
LossOutput target_mapping_loss(const LossVariant& variant, const Tensor& d_tgt);

struct PenaltyOutput {
  double loss = 0.0;
  GradientSet grads;                 // d(penalty)/d(critic parameters)
  std::vector<double> input_grad_norms;
  /// Critic outputs on the batch and the sum over rows of their parameter
  /// gradients (by-products of the penalty computation).
  Tensor outputs;
  GradientSet output_grad_sum;
};

/// Step used for the finite-difference penalty gradient.
inline constexpr float kPenaltyStep = 1e-3f;

/// gamma * mean((||grad_x critic(x)||_2 - 1)^2) over the rows of `batch`.
/// The parameter gradient differentiates each sample's input-gradient norm
/// by a symmetric difference of critic gradients at x +/- h*u, with u the
/// unit input-gradient direction.
PenaltyOutput gradient_penalty(const Mlp& critic, const Tensor& batch, double gamma);

/// Uniform random convex combinations of paired rows of `a` and `b`.
Tensor interpolate_rows(const Tensor& a, const Tensor& b, std::uint64_t seed);

/// Mean over rows of || probs_row - onehot_row ||_1.
double l1_error(const Tensor& probs, const Tensor& onehot);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace dda
