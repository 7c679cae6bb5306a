// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dda/mlp.hpp"
#include "dda/transport.hpp"

namespace dda {

/// What an observer knows about one network of the victim's input-to-output
/// chain.
struct ObservedSegment {
  std::string name;
  std::optional<Mlp> weights;
  std::optional<GradientSet> gradients;
};

struct AttackSetup {
  /// Input to output.
  std::vector<ObservedSegment> chain;
  std::size_t iterations = 5000;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  /// Private input, when known, for scoring the reconstruction.
  std::optional<std::vector<double>> truth;
};

enum class MissingKnowledge { Weights, ExtractorGradients };
std::string to_string(MissingKnowledge missing);

struct AttackResult {
  std::vector<double> reconstruction;
  /// Dummy label logits at the end of the run.
  std::vector<double> label_logits;
  /// Matching loss per iteration.
  std::vector<double> loss_trace;
  std::optional<double> mse;
};

using AttackOutcome = std::variant<AttackResult, MissingKnowledge>;

/// Reason the setup cannot produce dummy gradients, if any.
std::optional<MissingKnowledge> missing_knowledge(const AttackSetup& setup);

/// Minimises ||grad W(x', y') - grad W||^2 over a dummy input x' and dummy
/// label logits y' by gradient descent with a cosine-annealed step. The
/// matching loss is differentiated by central differences. Non-instantiable
/// setups return the missing piece instead of running.
AttackOutcome gradient_matching_attack(const AttackSetup& setup);

/// Cross-entropy parameter gradient of `net` for one sample with a hard
/// label, in double precision.
GradientSet sample_gradient(const Mlp& net, const std::vector<double>& x, int label);

/// Observer with the victim's weights and its full gradient for one sample.
AttackSetup full_knowledge_setup(const Mlp& net, const std::vector<double>& x, int label);

/// What a peer learns about the target node from a DILS log: the target's
/// extractor weights never leave it and only discriminator buffers do.
AttackSetup setup_from_target_trace(const FrameLog& log, const Mlp& discriminator);
/// What the target learns about the collaborator: extractor weights from
/// ModelInit, but gradients for the discriminator only.
AttackSetup setup_from_collaborator_trace(const FrameLog& log, const Mlp& extractor_shape,
                                          const Mlp& discriminator);

struct ExposureReport {
  std::size_t frames = 0;
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool clean() const { return violations.empty(); }
};

/// Structural checks on a recorded frame log: only known message types,
/// at most one ModelInit and only from the collaborator with exactly the
/// extractor's weights, and no other frame sized like the extractor's
/// gradient.
ExposureReport trace_exposure_check(const FrameLog& log);

}  // namespace dda
