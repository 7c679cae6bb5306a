// SPDX-License-Identifier: Apache-2.0
#include "dda/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {
namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// y = M x  (M is rows x cols)
void apply(const Tensor& m, const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* w = m.row(r).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
}

// y = M^T x
void apply_transposed(const Tensor& m, const std::vector<double>& x, std::vector<double>& y) {
  std::fill(y.begin(), y.end(), 0.0);
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const float* w = m.row(r).data();
    for (std::size_t c = 0; c < cols; ++c) y[c] += w[c] * x[r];
  }
}

}  // namespace

double spectral_norm(const Tensor& matrix, PowerIterationOptions options) {
  std::vector<double> v;
  return spectral_norm(matrix, v, options);
}

double spectral_norm(const Tensor& matrix, std::vector<double>& v, PowerIterationOptions options) {
  if (matrix.rank() != 2 || matrix.empty()) throw ShapeError("spectral_norm needs a non-empty matrix");
  if (options.max_iters < 1) throw InputError("max_iters must be at least 1");
  const std::size_t cols = matrix.cols();

  double n = v.size() == cols ? norm2(v) : 0.0;
  if (!(n > 0.0) || !std::isfinite(n)) {
    Rng rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    v.resize(cols);
    for (double& x : v) x = normal(rng);
    n = norm2(v);
  }
  for (double& x : v) x /= n;

  std::vector<double> mv(matrix.rows());
  std::vector<double> w(cols);
  double sigma = 0.0;
  for (int it = 0; it < options.max_iters; ++it) {
    apply(matrix, v, mv);
    apply_transposed(matrix, mv, w);
    // Rayleigh quotient of M^T M at unit v.
    double rho = 0.0;
    for (std::size_t c = 0; c < cols; ++c) rho += v[c] * w[c];
    const double wn = norm2(w);
    if (wn == 0.0) return sigma;  // start vector in the null space (or M = 0)
    double residual = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = w[c] - rho * v[c];
      residual += d * d;
    }
    residual = std::sqrt(residual);
    for (std::size_t c = 0; c < cols; ++c) v[c] = w[c] / wn;
    apply(matrix, v, mv);
    sigma = norm2(mv);
    if (residual <= options.tol * rho) break;
  }
  return sigma;
}

Tensor project_spectral(const Tensor& matrix, double c, PowerIterationOptions options) {
  if (!(c > 0.0)) throw InputError("spectral bound c must be positive");
  const double sigma = spectral_norm(matrix, options);
  const double scale = 1.0 / std::max(1.0, sigma / c);
  Tensor out = matrix;
  if (scale < 1.0) {
    for (float& x : out.data()) x = static_cast<float>(x * scale);
  }
  return out;
}

void project_spectral(Mlp& net, double c, PowerIterationOptions options) {
  for (auto& layer : net.layers()) layer.weights = project_spectral(layer.weights, c, options);
}

SpectralClipper::SpectralClipper(double c, PowerIterationOptions options)
    : c_(c), options_(options) {
  if (!(c > 0.0)) throw InputError("spectral bound c must be positive");
}

void SpectralClipper::apply(Mlp& net) {
  vectors_.resize(net.layers().size());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    Tensor& w = net.layers()[l].weights;
    const double sigma = spectral_norm(w, vectors_[l], options_);
    const double scale = 1.0 / std::max(1.0, sigma / c_);
    if (scale < 1.0) {
      for (float& x : w.data()) x = static_cast<float>(x * scale);
    }
  }
}

double lipschitz_constant(const Mlp& net) {
  double theta = 1.0;
  for (const auto& layer : net.layers()) theta *= spectral_norm(layer.weights);
  return theta;
}

double lipschitz_constant(std::span<const Mlp* const> chain) {
  double theta = 1.0;
  for (const Mlp* net : chain) theta *= lipschitz_constant(*net);
  return theta;
}

}  // namespace dda
