// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dda {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream tag and an index so independent
/// consumers (batch order, weight init, noise) never share a generator.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index = 0);

}  // namespace dda
