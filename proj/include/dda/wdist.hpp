// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dda/domains.hpp"
#include "dda/mlp.hpp"
#include "dda/transport.hpp"

namespace dda {

struct W1Config {
  std::vector<std::size_t> critic_hidden = {64, 64};
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  /// Off by default: the spectral cap already bounds the critic globally,
  /// and a penalty pinning the input-gradient norm to 1 on top of it pushes
  /// the critic towards a linear map, which cannot separate domains that
  /// share a mean.
  double gp_weight = 0.0;
  /// The penalty weight ramps linearly from 0 to gp_weight over this many
  /// steps, so a critic that starts with the wrong slope sign can still flip.
  std::size_t gp_warmup_steps = 500;
  /// Steps between buffer exchanges.
  std::size_t p = 4;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  /// Per-layer spectral cap on the critic after every update; 0 disables it.
  double critic_clip = 1.0;

  void validate() const;
};

struct W1Estimate {
  /// L_C - L_T on the full datasets; may dip slightly below zero.
  double value = 0.0;
  double loss_candidate = 0.0;
  double loss_target = 0.0;
  /// Window estimate at every buffer exchange.
  std::vector<double> trace;

  double clamped() const { return value < 0.0 ? 0.0 : value; }
};

/// Critic training blew up; carries what was recorded so far.
class EstimationError : public std::runtime_error {
 public:
  EstimationError(const std::string& message, std::vector<double> trace)
      : std::runtime_error(message), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Mean critic output over E(x) for the rows of `data`.
double wdist_local_losses(const Mlp& critic, const Mlp& encoder, const Tensor& data);

/// grad_C - grad_T, elementwise.
GradientSet wdist_aggregate(const GradientSet& grad_c, const GradientSet& grad_t);

/// Critic replica shared by both nodes.
Mlp make_critic(std::size_t feature_dim, const W1Config& config);

struct W1NodeResult {
  W1Estimate estimate;
  Mlp critic;
  TransportCounters counters;
  FrameLog log;
};

/// Node loops. The candidate ships its encoder through ModelInit; the
/// target encodes its own data with that copy.
W1NodeResult run_w1_candidate_node(Endpoint& endpoint, const Mlp& encoder, const Tensor& data,
                                   const W1Config& config, std::uint16_t domain_id);
W1NodeResult run_w1_target_node(Endpoint& endpoint, const Tensor& data, const W1Config& config,
                                std::uint16_t domain_id);

struct W1Run {
  W1Estimate estimate;
  W1NodeResult candidate;
  W1NodeResult target;
};

/// Distributed estimate of W1 between E_C(candidate) and E_C(target).
W1Run estimate_w1(const Mlp& candidate_encoder, const DomainDataset& candidate,
                  const DomainDataset& target, const W1Config& config,
                  TransportMode mode = TransportMode::Loopback);

}  // namespace dda
