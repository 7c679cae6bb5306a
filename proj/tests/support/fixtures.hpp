// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dda/ocs.hpp"
#include "dda/orchestrator.hpp"

namespace fixture {

/// A trained source model on moons 0 deg plus one rotated target domain.
struct MoonsPair {
  dda::ExperimentConfig config;
  dda::DomainData source;
  dda::DomainData target;
  dda::TrainedModel model;
  double pre_accuracy = 0.0;
};

MoonsPair moons_pair(double target_angle, std::uint64_t seed);

/// Source model trained on `source` with the default recipe.
dda::TrainedModel train_default(const dda::DomainData& source, std::uint64_t seed);

/// Adapts from every candidate and returns (domain id, target test accuracy)
/// for each, in candidate order.
std::vector<std::pair<std::uint16_t, double>> adapt_from_each(
    const dda::CandidateSet& candidates, const dda::DomainData& target,
    const dda::DilsConfig& config);

/// Random network with LeakyReLU hidden layers.
dda::Mlp random_mlp(std::vector<std::size_t> widths, std::uint64_t seed,
                    dda::Role role = dda::Role::Classifier);

/// Standard-normal [rows x cols] tensor.
dda::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace fixture
