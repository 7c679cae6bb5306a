// SPDX-License-Identifier: Apache-2.0
#include "dda/optimizer.hpp"

#include <cmath>

#include "dda/errors.hpp"

namespace dda {

OptimizerState::OptimizerState(OptimizerKind kind, double learning_rate, AdamParams params)
    : kind_(kind), learning_rate_(learning_rate), adam_(params) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning rate must be positive and finite");
  }
}

OptimizerState OptimizerState::sgd(double learning_rate) {
  return OptimizerState(OptimizerKind::SGD, learning_rate, {});
}

OptimizerState OptimizerState::adam(double learning_rate, AdamParams params) {
  return OptimizerState(OptimizerKind::Adam, learning_rate, params);
}

void OptimizerState::step(Mlp& net, const GradientSet& grads) {
  if (!grads.matches(net)) throw ShapeError("gradient set does not match network");
  ++steps_;
  auto& layers = net.layers();

  if (kind_ == OptimizerKind::SGD) {
    const float lr = static_cast<float>(learning_rate_);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = layers[l].weights.data();
      auto gw = grads.entries()[l].weights.data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
      auto b = layers[l].bias.data();
      auto gb = grads.entries()[l].bias.data();
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    }
  } else {
    if (!first_moment_) {
      first_moment_ = GradientSet::zeros_like(net);
      second_moment_ = GradientSet::zeros_like(net);
    } else if (!first_moment_->matches(net)) {
      throw ShapeError("Adam moment buffers do not match network");
    }
    const double b1 = adam_.beta1;
    const double b2 = adam_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    auto update = [&](std::span<float> p, std::span<const float> g, std::span<float> m,
                      std::span<float> v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double step = learning_rate_ * (mi / c1) / (std::sqrt(vi / c2) + adam_.epsilon);
        p[i] = static_cast<float>(p[i] - step);
      }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& m = first_moment_->entries()[l];
      auto& v = second_moment_->entries()[l];
      update(layers[l].weights.data(), grads.entries()[l].weights.data(), m.weights.data(),
             v.weights.data());
      update(layers[l].bias.data(), grads.entries()[l].bias.data(), m.bias.data(),
             v.bias.data());
    }
  }

  for (const auto& layer : layers) {
    if (!layer.weights.all_finite() || !layer.bias.all_finite()) {
      throw NumericError("optimizer step produced non-finite parameters");
    }
  }
}

Mlp optimizer_step(Mlp net, const GradientSet& grads, OptimizerState& opt) {
  opt.step(net, grads);
  return net;
}

}  // namespace dda
