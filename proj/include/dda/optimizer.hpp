// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "dda/mlp.hpp"

namespace dda {

enum class OptimizerKind { SGD, Adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Descent-direction optimizer: parameters move against the gradient.
/// Moment buffers are sized on the first step and must keep matching.
class OptimizerState {
 public:
  static OptimizerState sgd(double learning_rate);
  static OptimizerState adam(double learning_rate, AdamParams params = {});

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return learning_rate_; }
  std::uint64_t steps_taken() const { return steps_; }

  void step(Mlp& net, const GradientSet& grads);

 private:
  OptimizerState(OptimizerKind kind, double learning_rate, AdamParams params);

  OptimizerKind kind_;
  double learning_rate_;
  AdamParams adam_;
  std::uint64_t steps_ = 0;
  std::optional<GradientSet> first_moment_;
  std::optional<GradientSet> second_moment_;
};

/// Functional form: returns the updated network.
Mlp optimizer_step(Mlp net, const GradientSet& grads, OptimizerState& opt);

}  // namespace dda
