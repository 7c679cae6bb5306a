// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dda/domains.hpp"
#include "dda/losses.hpp"
#include "dda/mlp.hpp"
#include "dda/optimizer.hpp"
#include "dda/spectral.hpp"
#include "dda/transport.hpp"

namespace dda {

struct DilsConfig {
  /// Steps between buffer exchanges.
  std::size_t p = 4;
  std::size_t steps = 8000;
  double lr_extractor = 1e-3;
  double lr_discriminator = 0.05;
  std::size_t batch_size = 64;
  LossVariant loss = LossVariant::adda();
  std::uint64_t seed = 1;
  std::vector<std::size_t> discriminator_hidden = {32, 32};
  /// Per-layer spectral cap applied to the target extractor after each
  /// update; 0 disables it.
  double extractor_clip = 3.0;
  /// Same cap for the discriminator replicas, applied after every g_sync
  /// step on both nodes; 0 disables it.
  double discriminator_clip = 0.0;
  /// Keep per-step weight snapshots (memory heavy; meant for tests).
  bool record_trajectory = false;

  void validate() const;

  /// Defaults for `variant`. WDA's critic output is unbounded, so it gets a
  /// spectral cap and its own step size.
  static DilsConfig for_loss(const LossVariant& variant);
};

/// Discriminator settings used by for_loss for WDA.
inline constexpr double kWassersteinDiscriminatorLr = 0.1;
inline constexpr double kWassersteinDiscriminatorClip = 1.0;

enum class NodeRole { Collaborator, Target };
std::string to_string(NodeRole role);

struct GradBuffer {
  GradientSet sum;
  std::size_t count = 0;

  void add(const GradientSet& grads);
  void clear();
};

struct NodeState {
  NodeRole role = NodeRole::Collaborator;
  std::uint16_t domain_id = 0;
  std::uint16_t peer_domain_id = 0;
  /// Frozen on the collaborator, trained on the target.
  Mlp extractor;
  Mlp discriminator;
  GradBuffer buffer;
  GradientSet g_sync;
  std::uint64_t step = 0;
  OptimizerState extractor_opt;
  OptimizerState discriminator_opt;
  /// Created on first use when the matching clip is > 0.
  std::optional<SpectralClipper> extractor_clipper;
  std::optional<SpectralClipper> discriminator_clipper;
};

/// Discriminator for `feature_dim` features; both nodes call this with the
/// same seed to get identical replicas.
Mlp make_discriminator(std::size_t feature_dim, const DilsConfig& config);

/// Handshake on the collaborator side: Hello both ways, then the extractor
/// weights in a single ModelInit frame.
NodeState dils_init_collaborator(Endpoint& endpoint, const Mlp& extractor,
                                 const DilsConfig& config, std::uint16_t domain_id);
/// Target side of the handshake; E_T starts as a copy of the received weights.
NodeState dils_init_target(Endpoint& endpoint, const DilsConfig& config,
                           std::uint16_t domain_id);

/// Both handshakes over a connected pair (runs the two sides concurrently).
std::pair<NodeState, NodeState> dils_init(const Mlp& collaborator_extractor,
                                          const DilsConfig& config,
                                          std::pair<Endpoint, Endpoint>& endpoints,
                                          std::uint16_t collaborator_id,
                                          std::uint16_t target_id);

/// Local half of a step on `batch` from the node's own domain: accumulate
/// the discriminator gradient and, on the target, update E_T.
void dils_accumulate(NodeState& state, const Tensor& batch, const DilsConfig& config);
/// Applies the latest g_sync to the discriminator replica.
void dils_apply_sync(NodeState& state, const DilsConfig& config);

/// g_sync = (G_collaborator + G_target) / (2p) from the two buffers; clears
/// the local buffer.
const GradientSet& dils_sync(NodeState& state, const SyncFrame& peer_buffer_frame,
                             std::size_t p);
/// Pure form of the combination, collaborator operand on the left.
GradientSet combine_buffers(const GradientSet& collaborator, const GradientSet& target,
                            std::size_t p);

/// Frame carrying the local buffer for step `state.step`.
SyncFrame buffer_frame(const NodeState& state);

/// Full step: accumulate, exchange when step % p == 0, apply g_sync.
void dils_step(NodeState& state, Endpoint& endpoint, const Tensor& batch,
               const DilsConfig& config);

struct SyncEvent {
  std::uint64_t step = 0;
  std::uint64_t bytes_sent = 0;
};

struct NodeReport {
  TransportCounters counters;
  std::vector<SyncEvent> sync_events;
  /// DiscGradBuffer payload bytes sent.
  std::uint64_t grad_payload_bytes = 0;
  FrameLog log;
  /// Flattened weights after every step (record_trajectory only).
  std::vector<std::vector<float>> discriminator_trajectory;
  std::vector<std::vector<float>> extractor_trajectory;
  /// Whether the buffer was all-zero right after each sync.
  std::vector<bool> buffer_zero_after_sync;
};

struct NodeOutcome {
  NodeState state;
  NodeReport report;
};

/// Complete node loops (handshake, N steps, Bye). `features` is the node's
/// own training data; only the collaborator passes an extractor.
NodeOutcome run_collaborator_node(Endpoint& endpoint, const Mlp& extractor,
                                  const Tensor& features, const DilsConfig& config,
                                  std::uint16_t domain_id);
NodeOutcome run_target_node(Endpoint& endpoint, const Tensor& features,
                            const DilsConfig& config, std::uint16_t domain_id);

struct DilsMetrics {
  std::uint64_t sync_events = 0;
  std::uint64_t bytes_sent_collaborator = 0;
  std::uint64_t bytes_sent_target = 0;
  std::uint64_t grad_payload_bytes = 0;  // both directions
  double wall_seconds = 0.0;
  std::optional<double> accuracy;
};

struct DilsResult {
  Mlp target_extractor;
  Mlp discriminator;
  DilsMetrics metrics;
  NodeReport collaborator;
  NodeReport target;
};

/// Adapts a target extractor from the collaborator's (E, C). Runs both nodes
/// on two threads over a fresh endpoint pair. When `target_test` is labeled,
/// reports accuracy of C on E_T features.
DilsResult run_dils(const Mlp& collaborator_extractor, const Mlp& collaborator_classifier,
                    const DomainDataset& collaborator_train, const DomainDataset& target_train,
                    const DilsConfig& config, TransportMode mode = TransportMode::Loopback,
                    const DomainDataset* target_test = nullptr);

/// Fraction of rows where argmax C(E(x)) equals the label.
double evaluate(const Mlp& extractor, const Mlp& classifier, const DomainDataset& test_set);

}  // namespace dda
