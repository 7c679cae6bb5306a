// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dda/mlp.hpp"
#include "dda/tensor.hpp"

namespace dda {

struct PowerIterationOptions {
  int max_iters = 100;
  /// Stop once the eigen-residual of M^T M is below tol * (current estimate).
  double tol = 1e-6;
  std::uint64_t seed = 0x5eedULL;
};

/// Largest singular value of a rank-2 tensor via power iteration on M^T M.
/// A zero matrix yields 0.
double spectral_norm(const Tensor& matrix, PowerIterationOptions options = {});

/// Power iteration starting from `v` (resized and randomly filled when its
/// length does not match); on return `v` holds the top right singular vector.
double spectral_norm(const Tensor& matrix, std::vector<double>& v,
                     PowerIterationOptions options = {});

/// Scales `matrix` by 1 / max(1, sigma / c), so the result has spectral
/// norm at most c.
Tensor project_spectral(const Tensor& matrix, double c, PowerIterationOptions options = {});

/// Applies project_spectral to every weight matrix of `net` in place.
void project_spectral(Mlp& net, double c, PowerIterationOptions options = {});

/// Per-layer projection for a net that changes a little between calls:
/// keeps each layer's singular vector so power iteration restarts warm.
class SpectralClipper {
 public:
  explicit SpectralClipper(double c, PowerIterationOptions options = {});
  void apply(Mlp& net);

 private:
  double c_;
  PowerIterationOptions options_;
  std::vector<std::vector<double>> vectors_;
};

/// Upper bound on the L2 Lipschitz constant: product of per-layer spectral
/// norms (every supported activation is 1-Lipschitz).
double lipschitz_constant(const Mlp& net);

/// Same bound for the composition nets[last] o ... o nets[0].
double lipschitz_constant(std::span<const Mlp* const> chain);

}  // namespace dda
