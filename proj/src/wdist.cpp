// SPDX-License-Identifier: Apache-2.0
#include "dda/wdist.hpp"

#include <cmath>
#include <optional>

#include "dda/errors.hpp"
#include "dda/losses.hpp"
#include "dda/optimizer.hpp"
#include "dda/rng.hpp"
#include "dda/spectral.hpp"
#include "run_pair.hpp"

namespace dda {

void W1Config::validate() const {
  if (steps < 1) throw InputError("W1 estimation needs at least one step");
  if (p < 1 || p > steps) throw InputError("sync-up step must be in [1, steps]");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (gp_weight < 0.0) throw InputError("gradient-penalty weight must be >= 0");
  if (batch_size < 1) throw InputError("batch size must be positive");
  if (critic_clip < 0.0) throw InputError("critic_clip must be >= 0");
}

namespace {

double penalty_weight(const W1Config& config, std::size_t step) {
  if (step >= config.gp_warmup_steps) return config.gp_weight;
  return config.gp_weight * static_cast<double>(step) / static_cast<double>(config.gp_warmup_steps);
}

double mean_output(const Mlp& critic, const Tensor& features) {
  if (features.rows() == 0) throw InputError("W1 loss over an empty dataset");
  const Tensor d = mlp_predict(critic, features);
  double sum = 0.0;
  for (float v : d.data()) sum += v;
  return sum / static_cast<double>(d.rows());
}

}  // namespace

double wdist_local_losses(const Mlp& critic, const Mlp& encoder, const Tensor& data) {
  if (data.rows() == 0) throw InputError("W1 loss over an empty dataset");
  return mean_output(critic, mlp_predict(encoder, data));
}

GradientSet wdist_aggregate(const GradientSet& grad_c, const GradientSet& grad_t) {
  if (grad_c.entries().size() != grad_t.entries().size()) {
    throw ShapeError("critic gradients differ in layer count");
  }
  for (std::size_t l = 0; l < grad_c.entries().size(); ++l) {
    if (grad_c.entries()[l].weights.shape() != grad_t.entries()[l].weights.shape() ||
        grad_c.entries()[l].bias.shape() != grad_t.entries()[l].bias.shape()) {
      throw ShapeError("critic gradients differ in shape at layer " + std::to_string(l));
    }
  }
  GradientSet out = grad_c;
  out -= grad_t;
  return out;
}

Mlp make_critic(std::size_t feature_dim, const W1Config& config) {
  std::vector<std::size_t> widths{feature_dim};
  widths.insert(widths.end(), config.critic_hidden.begin(), config.critic_hidden.end());
  widths.push_back(1);
  return Mlp::create(Role::Discriminator, widths, Activation::LeakyReLU, Activation::Identity,
                     derive_seed(config.seed, "critic"));
}

namespace {

enum class Side { Candidate, Target };

W1NodeResult run_w1_loop(Endpoint& endpoint, Side side, const Mlp& encoder, const Tensor& data,
                         const W1Config& config, std::uint16_t domain_id) {
  if (data.rows() == 0) throw InputError("W1 estimation on an empty dataset");
  const Tensor features = mlp_predict(encoder, data);
  Mlp critic = make_critic(features.cols(), config);
  OptimizerState opt = OptimizerState::adam(config.learning_rate, {0.5, 0.9, 1e-8});
  GradientSet buffer = GradientSet::zeros_like(critic);
  GradientSet g_sync = GradientSet::zeros_like(critic);
  BatchSampler sampler(features.rows(), std::min(config.batch_size, features.rows()),
                       derive_seed(config.seed, "w1-batches", domain_id));
  const bool candidate = side == Side::Candidate;
  std::optional<SpectralClipper> clipper;
  if (config.critic_clip > 0.0) clipper.emplace(config.critic_clip);
  W1Estimate estimate;
  double window_sum = 0.0;
  std::size_t window_count = 0;

  auto fail = [&](const std::string& what) {
    throw EstimationError("W1 critic diverged: " + what, estimate.trace);
  };
  auto exchange_mean = [&](double local, std::uint32_t step) {
    const float mine = static_cast<float>(local);
    const auto theirs = endpoint.exchange(SyncFrame::with_reals(MsgType::W1Stats, domain_id, step,
                                                                std::span<const float>(&mine, 1)))
                            .reals();
    if (theirs.size() != 1) throw ProtocolError("W1Stats frame must carry one value");
    const float c = candidate ? mine : theirs[0];
    const float t = candidate ? theirs[0] : mine;
    if (!std::isfinite(c) || !std::isfinite(t)) fail("non-finite critic mean");
    return std::pair<double, double>(c, t);
  };

  for (std::uint32_t n = 1; n <= config.steps; ++n) {
    const Tensor batch = sampler.batch(features, n - 1);
    // The penalty pass also yields the critic outputs and their gradient sum.
    PenaltyOutput pen = gradient_penalty(critic, batch, penalty_weight(config, n));
    GradientSet g = std::move(pen.output_grad_sum);
    const auto inv_rows = static_cast<float>(1.0 / static_cast<double>(batch.rows()));
    for (auto& e : g.entries()) {
      for (float& v : e.weights.data()) v *= inv_rows;
      for (float& v : e.bias.data()) v *= inv_rows;
    }
    if (candidate) {
      g -= pen.grads;
    } else {
      g += pen.grads;
    }
    if (!g.all_finite()) fail("non-finite gradient at step " + std::to_string(n));
    buffer += g;
    for (float v : pen.outputs.data()) window_sum += v;
    window_count += batch.rows();

    if (n % config.p == 0) {
      const auto [c, t] = exchange_mean(window_sum / static_cast<double>(window_count), n);
      estimate.trace.push_back(c - t);
      window_sum = 0.0;
      window_count = 0;
      const SyncFrame peer = endpoint.exchange(
          SyncFrame::with_reals(MsgType::DiscGradBuffer, domain_id, n, buffer.flatten()));
      const auto values = peer.reals();
      if (values.size() != critic.parameter_count()) {
        throw ProtocolError("peer critic buffer has the wrong size");
      }
      const GradientSet other = GradientSet::from_flat(critic, values);
      // Ascent direction, turned into a descent step for the optimizer.
      g_sync = candidate ? wdist_aggregate(buffer, other) : wdist_aggregate(other, buffer);
      const float denom = -static_cast<float>(config.p);
      for (auto& e : g_sync.entries()) {
        for (float& v : e.weights.data()) v = v / denom;
        for (float& v : e.bias.data()) v = v / denom;
      }
      buffer.set_zero();
    }
    opt.step(critic, g_sync);
    if (clipper) clipper->apply(critic);
  }

  const auto [c, t] = exchange_mean(mean_output(critic, features),
                                    static_cast<std::uint32_t>(config.steps + 1));
  estimate.loss_candidate = c;
  estimate.loss_target = t;
  estimate.value = c - t;
  endpoint.exchange(SyncFrame{MsgType::Bye, domain_id,
                              static_cast<std::uint32_t>(config.steps + 1), {}});
  return {std::move(estimate), std::move(critic), endpoint.counters(), endpoint.log()};
}

}  // namespace

W1NodeResult run_w1_candidate_node(Endpoint& endpoint, const Mlp& encoder, const Tensor& data,
                                   const W1Config& config, std::uint16_t domain_id) {
  config.validate();
  endpoint.send(SyncFrame::with_reals(MsgType::Hello, domain_id, 0, describe_architecture(encoder)));
  const SyncFrame hello = endpoint.receive();
  if (hello.type != MsgType::Hello) throw ProtocolError("expected Hello from the target");
  endpoint.send(SyncFrame::with_reals(MsgType::ModelInit, domain_id, 0, encoder.flatten()));
  W1NodeResult out = run_w1_loop(endpoint, Side::Candidate, encoder, data, config, domain_id);
  out.log.collaborator_domain = domain_id;
  out.log.target_domain = hello.domain_id;
  out.log.extractor_params = encoder.parameter_count();
  return out;
}

W1NodeResult run_w1_target_node(Endpoint& endpoint, const Tensor& data, const W1Config& config,
                                std::uint16_t domain_id) {
  config.validate();
  const SyncFrame hello = endpoint.receive();
  if (hello.type != MsgType::Hello) throw ProtocolError("expected Hello from the candidate");
  Mlp encoder = architecture_shell(Role::FeatureExtractor, hello.reals());
  endpoint.send(SyncFrame{MsgType::Hello, domain_id, 0, {}});
  const SyncFrame init = endpoint.receive();
  if (init.type != MsgType::ModelInit) throw ProtocolError("expected ModelInit");
  const auto params = init.reals();
  if (params.size() != encoder.parameter_count()) throw ProtocolError("ModelInit size mismatch");
  encoder.load_flat(params);
  if (encoder.input_dim() != data.cols()) throw ShapeError("target data width mismatch");
  W1NodeResult out = run_w1_loop(endpoint, Side::Target, encoder, data, config, domain_id);
  out.log.collaborator_domain = hello.domain_id;
  out.log.target_domain = domain_id;
  out.log.extractor_params = encoder.parameter_count();
  return out;
}

W1Run estimate_w1(const Mlp& candidate_encoder, const DomainDataset& candidate,
                  const DomainDataset& target, const W1Config& config, TransportMode mode) {
  auto [c, t] = detail::run_pair(
      make_endpoint_pair(mode),
      [&](Endpoint& ep) {
        ep.record_frames(true);
        return run_w1_candidate_node(ep, candidate_encoder, candidate.features, config,
                                     candidate.domain_id);
      },
      [&](Endpoint& ep) {
        ep.record_frames(true);
        return run_w1_target_node(ep, target.features, config, target.domain_id);
      });
  W1Estimate est = c.estimate;
  return {std::move(est), std::move(c), std::move(t)};
}

}  // namespace dda
