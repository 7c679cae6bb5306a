// SPDX-License-Identifier: Apache-2.0
#include "dda/dils.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "dda/errors.hpp"
#include "dda/rng.hpp"
#include "dda/spectral.hpp"
#include "run_pair.hpp"

namespace dda {

void DilsConfig::validate() const {
  if (steps < 1) throw InputError("DILS needs at least one step");
  if (p < 1 || p > steps) throw InputError("sync-up step p must be in [1, steps]");
  if (!(lr_extractor > 0.0) || !(lr_discriminator > 0.0)) {
    throw InputError("learning rates must be positive");
  }
  if (batch_size < 1) throw InputError("batch size must be positive");
  if (extractor_clip < 0.0 || discriminator_clip < 0.0) {
    throw InputError("spectral clips must be >= 0");
  }
  if (loss.gp_weight < 0.0) throw InputError("gradient-penalty weight must be >= 0");
}

DilsConfig DilsConfig::for_loss(const LossVariant& variant) {
  DilsConfig c;
  c.loss = variant;
  if (variant.kind == LossKind::WDA) {
    c.lr_discriminator = kWassersteinDiscriminatorLr;
    c.discriminator_clip = kWassersteinDiscriminatorClip;
  }
  return c;
}

std::string to_string(NodeRole role) {
  return role == NodeRole::Collaborator ? "collaborator" : "target";
}

void GradBuffer::add(const GradientSet& grads) {
  if (count == 0 && sum.entries().empty()) {
    sum = grads;
  } else {
    sum += grads;
  }
  ++count;
}

void GradBuffer::clear() {
  sum.set_zero();
  count = 0;
}

Mlp make_discriminator(std::size_t feature_dim, const DilsConfig& config) {
  std::vector<std::size_t> widths{feature_dim};
  widths.insert(widths.end(), config.discriminator_hidden.begin(),
                config.discriminator_hidden.end());
  widths.push_back(1);
  return Mlp::create(Role::Discriminator, widths, Activation::LeakyReLU, Activation::Identity,
                     derive_seed(config.seed, "discriminator"));
}

namespace {

NodeState make_state(NodeRole role, Mlp extractor, const DilsConfig& config,
                     std::uint16_t domain_id, std::uint16_t peer_id) {
  Mlp disc = make_discriminator(extractor.output_dim(), config);
  GradientSet zero = GradientSet::zeros_like(disc);
  NodeState state{role,
                  domain_id,
                  peer_id,
                  std::move(extractor),
                  std::move(disc),
                  GradBuffer{zero, 0},
                  zero,
                  0,
                  OptimizerState::adam(config.lr_extractor),
                  OptimizerState::sgd(config.lr_discriminator),
                  std::nullopt,
                  std::nullopt};
  return state;
}

}  // namespace

NodeState dils_init_collaborator(Endpoint& endpoint, const Mlp& extractor,
                                 const DilsConfig& config, std::uint16_t domain_id) {
  config.validate();
  endpoint.send(SyncFrame::with_reals(MsgType::Hello, domain_id, 0, describe_architecture(extractor)));
  const SyncFrame hello = endpoint.receive();
  if (hello.type != MsgType::Hello) throw ProtocolError("expected Hello from the target");
  endpoint.send(SyncFrame::with_reals(MsgType::ModelInit, domain_id, 0, extractor.flatten()));
  return make_state(NodeRole::Collaborator, extractor, config, domain_id, hello.domain_id);
}

NodeState dils_init_target(Endpoint& endpoint, const DilsConfig& config,
                           std::uint16_t domain_id) {
  config.validate();
  const SyncFrame hello = endpoint.receive();
  if (hello.type != MsgType::Hello) throw ProtocolError("expected Hello from the collaborator");
  Mlp extractor = architecture_shell(Role::FeatureExtractor, hello.reals());
  endpoint.send(SyncFrame{MsgType::Hello, domain_id, 0, {}});
  const SyncFrame init = endpoint.receive();
  if (init.type != MsgType::ModelInit) throw ProtocolError("expected ModelInit");
  const auto params = init.reals();
  if (params.size() != extractor.parameter_count()) {
    throw ProtocolError("ModelInit carries " + std::to_string(params.size()) +
                        " values, expected " + std::to_string(extractor.parameter_count()));
  }
  extractor.load_flat(params);
  return make_state(NodeRole::Target, std::move(extractor), config, domain_id, hello.domain_id);
}

std::pair<NodeState, NodeState> dils_init(const Mlp& collaborator_extractor,
                                          const DilsConfig& config,
                                          std::pair<Endpoint, Endpoint>& endpoints,
                                          std::uint16_t collaborator_id,
                                          std::uint16_t target_id) {
  std::optional<NodeState> target;
  std::exception_ptr target_error;
  std::thread t([&] {
    try {
      target = dils_init_target(endpoints.second, config, target_id);
    } catch (...) {
      target_error = std::current_exception();
    }
  });
  std::optional<NodeState> collaborator;
  std::exception_ptr collaborator_error;
  try {
    collaborator = dils_init_collaborator(endpoints.first, collaborator_extractor, config,
                                          collaborator_id);
  } catch (...) {
    collaborator_error = std::current_exception();
  }
  t.join();
  if (collaborator_error) std::rethrow_exception(collaborator_error);
  if (target_error) std::rethrow_exception(target_error);
  return {std::move(*collaborator), std::move(*target)};
}

void dils_accumulate(NodeState& state, const Tensor& batch, const DilsConfig& config) {
  const bool is_target = state.role == NodeRole::Target;
  const ForwardPass features = mlp_forward(state.extractor, batch);
  const ForwardPass d = mlp_forward(state.discriminator, features.output());
  const LossOutput side = side_discriminator_loss(
      config.loss, d.output(), is_target ? DomainSide::Target : DomainSide::Source);
  GradientSet grads = mlp_backward(state.discriminator, d, side.grad).params;
  if (config.loss.kind == LossKind::WDA && config.loss.gp_weight > 0.0) {
    grads += gradient_penalty(state.discriminator, features.output(), config.loss.gp_weight).grads;
  }
  if (!grads.all_finite()) throw NumericError("non-finite discriminator gradient");
  ++state.step;
  state.buffer.add(grads);

  if (is_target) {
    const LossOutput mapping = target_mapping_loss(config.loss, d.output());
    const Tensor to_features = mlp_backward(state.discriminator, d, mapping.grad).input_grad;
    const GradientSet extractor_grads =
        mlp_backward(state.extractor, features, to_features).params;
    if (!extractor_grads.all_finite()) throw NumericError("non-finite extractor gradient");
    state.extractor_opt.step(state.extractor, extractor_grads);
    if (config.extractor_clip > 0.0) {
      if (!state.extractor_clipper) state.extractor_clipper.emplace(config.extractor_clip);
      state.extractor_clipper->apply(state.extractor);
    }
  }
}

void dils_apply_sync(NodeState& state, const DilsConfig& config) {
  state.discriminator_opt.step(state.discriminator, state.g_sync);
  if (config.discriminator_clip > 0.0) {
    if (!state.discriminator_clipper) state.discriminator_clipper.emplace(config.discriminator_clip);
    state.discriminator_clipper->apply(state.discriminator);
  }
}

GradientSet combine_buffers(const GradientSet& collaborator, const GradientSet& target,
                            std::size_t p) {
  if (collaborator.parameter_count() != target.parameter_count() ||
      collaborator.entries().size() != target.entries().size()) {
    throw ShapeError("gradient buffers differ in shape");
  }
  const float denom = static_cast<float>(2 * p);
  GradientSet out = collaborator;
  for (std::size_t l = 0; l < out.entries().size(); ++l) {
    auto combine = [&](Tensor& dst, const Tensor& rhs) {
      if (dst.shape() != rhs.shape()) throw ShapeError("gradient buffers differ in shape");
      auto a = dst.data();
      auto b = rhs.data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] + b[i]) / denom;
    };
    combine(out.entries()[l].weights, target.entries()[l].weights);
    combine(out.entries()[l].bias, target.entries()[l].bias);
  }
  return out;
}

SyncFrame buffer_frame(const NodeState& state) {
  return SyncFrame::with_reals(MsgType::DiscGradBuffer, state.domain_id,
                               static_cast<std::uint32_t>(state.step),
                               state.buffer.sum.flatten());
}

const GradientSet& dils_sync(NodeState& state, const SyncFrame& peer_buffer_frame,
                             std::size_t p) {
  if (peer_buffer_frame.type != MsgType::DiscGradBuffer) {
    throw ProtocolError("expected a DiscGradBuffer frame");
  }
  if (peer_buffer_frame.step != static_cast<std::uint32_t>(state.step)) {
    throw ProtocolError("buffer frame for step " + std::to_string(peer_buffer_frame.step) +
                        " at local step " + std::to_string(state.step));
  }
  const auto values = peer_buffer_frame.reals();
  if (values.size() != state.discriminator.parameter_count()) {
    throw ProtocolError("peer buffer has the wrong size");
  }
  const GradientSet peer = GradientSet::from_flat(state.discriminator, values);
  state.g_sync = state.role == NodeRole::Collaborator
                     ? combine_buffers(state.buffer.sum, peer, p)
                     : combine_buffers(peer, state.buffer.sum, p);
  state.buffer.clear();
  return state.g_sync;
}

void dils_step(NodeState& state, Endpoint& endpoint, const Tensor& batch,
               const DilsConfig& config) {
  dils_accumulate(state, batch, config);
  if (state.step % config.p == 0) {
    const SyncFrame peer = endpoint.exchange(buffer_frame(state));
    dils_sync(state, peer, config.p);
  }
  dils_apply_sync(state, config);
}

namespace {

NodeReport run_loop(NodeState& state, Endpoint& endpoint, const Tensor& features,
                    const DilsConfig& config) {
  NodeReport report;
  BatchSampler sampler(features.rows(), std::min(config.batch_size, features.rows()),
                       derive_seed(config.seed, "batches", state.domain_id));
  for (std::size_t n = 0; n < config.steps; ++n) {
    const Tensor batch = sampler.batch(features, n);
    const std::uint64_t sent_before = endpoint.counters().bytes_sent;
    dils_accumulate(state, batch, config);
    if (state.step % config.p == 0) {
      const SyncFrame out = buffer_frame(state);
      report.grad_payload_bytes += out.payload.size();
      const SyncFrame peer = endpoint.exchange(out);
      dils_sync(state, peer, config.p);
      report.sync_events.push_back({state.step, endpoint.counters().bytes_sent - sent_before});
      if (config.record_trajectory) report.buffer_zero_after_sync.push_back(state.buffer.sum.is_zero());
    }
    dils_apply_sync(state, config);
    if (config.record_trajectory) {
      report.discriminator_trajectory.push_back(state.discriminator.flatten());
      if (state.role == NodeRole::Target) {
        report.extractor_trajectory.push_back(state.extractor.flatten());
      }
    }
  }
  endpoint.exchange(SyncFrame{MsgType::Bye, state.domain_id,
                              static_cast<std::uint32_t>(state.step), {}});
  report.counters = endpoint.counters();
  report.log = endpoint.log();
  return report;
}

void label_log(FrameLog& log, const NodeState& state) {
  const bool collab = state.role == NodeRole::Collaborator;
  log.collaborator_domain = collab ? state.domain_id : state.peer_domain_id;
  log.target_domain = collab ? state.peer_domain_id : state.domain_id;
  log.extractor_params = state.extractor.parameter_count();
}

}  // namespace

NodeOutcome run_collaborator_node(Endpoint& endpoint, const Mlp& extractor,
                                  const Tensor& features, const DilsConfig& config,
                                  std::uint16_t domain_id) {
  NodeState state = dils_init_collaborator(endpoint, extractor, config, domain_id);
  NodeReport report = run_loop(state, endpoint, features, config);
  label_log(report.log, state);
  return {std::move(state), std::move(report)};
}

NodeOutcome run_target_node(Endpoint& endpoint, const Tensor& features,
                            const DilsConfig& config, std::uint16_t domain_id) {
  NodeState state = dils_init_target(endpoint, config, domain_id);
  if (state.extractor.input_dim() != features.cols()) {
    throw ShapeError("target data has " + std::to_string(features.cols()) +
                     " features, extractor expects " +
                     std::to_string(state.extractor.input_dim()));
  }
  NodeReport report = run_loop(state, endpoint, features, config);
  label_log(report.log, state);
  return {std::move(state), std::move(report)};
}

double evaluate(const Mlp& extractor, const Mlp& classifier, const DomainDataset& test_set) {
  if (test_set.size() == 0) throw InputError("cannot evaluate on an empty set");
  if (!test_set.labeled()) throw InputError("evaluation needs labels");
  const Tensor logits = mlp_predict(classifier, mlp_predict(extractor, test_set.features));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == (*test_set.labels)[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

DilsResult run_dils(const Mlp& collaborator_extractor, const Mlp& collaborator_classifier,
                    const DomainDataset& collaborator_train, const DomainDataset& target_train,
                    const DilsConfig& config, TransportMode mode,
                    const DomainDataset* target_test) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto [collab, target] = detail::run_pair(
      make_endpoint_pair(mode),
      [&](Endpoint& ep) {
        ep.record_frames(true);
        return run_collaborator_node(ep, collaborator_extractor, collaborator_train.features,
                                     config, collaborator_train.domain_id);
      },
      [&](Endpoint& ep) {
        ep.record_frames(true);
        return run_target_node(ep, target_train.features, config, target_train.domain_id);
      });

  DilsResult result{std::move(target.state.extractor), std::move(target.state.discriminator),
                    {}, std::move(collab.report), std::move(target.report)};
  auto& m = result.metrics;
  m.sync_events = result.target.sync_events.size();
  m.bytes_sent_collaborator = result.collaborator.counters.bytes_sent;
  m.bytes_sent_target = result.target.counters.bytes_sent;
  m.grad_payload_bytes = result.collaborator.grad_payload_bytes + result.target.grad_payload_bytes;
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (target_test != nullptr && target_test->labeled()) {
    m.accuracy = evaluate(result.target_extractor, collaborator_classifier, *target_test);
  }
  return result;
}

}  // namespace dda
