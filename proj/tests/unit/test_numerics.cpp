// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dda/errors.hpp"
#include "dda/mlp.hpp"
#include "dda/optimizer.hpp"
#include "dda/rng.hpp"
#include "dda/spectral.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dda;

namespace {

Mlp single(Tensor w, Tensor b, Activation act = Activation::Identity) {
  std::vector<DenseLayer> layers;
  layers.push_back({std::move(w), std::move(b), act});
  return Mlp(Role::Classifier, std::move(layers));
}

double relative_gap(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

}  // namespace

TEST_CASE("forward of an affine map") {
  const Mlp net = single(Tensor::matrix(1, 1, {2}), Tensor::vector({1}));
  CHECK(mlp_predict(net, Tensor::matrix(1, 1, {3}))[0] == 7.0f);
}

TEST_CASE("identity layer passes inputs through") {
  const Mlp net = Mlp::identity(Role::FeatureExtractor, 2);
  const Tensor x = Tensor::matrix(1, 2, {0.3f, -0.7f});
  CHECK(bitwise_equal(mlp_predict(net, x), x));
}

TEST_CASE("forward matches a naive per-element loop exactly") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::vector<std::size_t> widths = {2, 3, 2};
    const Mlp net = Mlp::create(Role::Classifier, widths, Activation::ReLU, Activation::Identity, seed);
    const Tensor batch = fixture::random_tensor(16, 2, seed + 100);
    CHECK(bitwise_equal(mlp_predict(net, batch), oracle::naive_forward(net, batch)));
  }
}

TEST_CASE("forward rejects a batch of the wrong width") {
  const Mlp net = fixture::random_mlp({3, 4, 2}, 1);
  CHECK_THROWS_AS(mlp_forward(net, Tensor({5, 2})), ShapeError);
}

TEST_CASE("backward of an affine map") {
  const Mlp net = single(Tensor::matrix(1, 1, {2}), Tensor::vector({0}));
  const ForwardPass pass = mlp_forward(net, Tensor::matrix(1, 1, {3}));
  const BackwardResult r = mlp_backward(net, pass, Tensor::matrix(1, 1, {1}));
  CHECK(r.params.entries()[0].weights[0] == 3.0f);
  CHECK(r.params.entries()[0].bias[0] == 1.0f);
  CHECK(r.input_grad[0] == 2.0f);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  const Mlp net = fixture::random_mlp({2, 5, 3}, 4);
  const ForwardPass pass = mlp_forward(net, fixture::random_tensor(7, 2, 5));
  CHECK(mlp_backward(net, pass, Tensor({7, 3})).params.is_zero());
}

TEST_CASE("backward rejects activations from another network") {
  const Mlp a = fixture::random_mlp({2, 5, 3}, 4);
  const Mlp b = fixture::random_mlp({2, 4, 3}, 4);
  const ForwardPass pass = mlp_forward(a, fixture::random_tensor(3, 2, 5));
  CHECK_THROWS_AS(mlp_backward(b, pass, Tensor({3, 3})), ShapeError);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(derive_seed(3, "unit-gradcheck"));
  std::uniform_int_distribution<int> width(1, 5), act(0, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<std::size_t> widths = {static_cast<std::size_t>(width(rng))};
    for (int l = 0; l < 2; ++l) widths.push_back(static_cast<std::size_t>(width(rng)));
    Mlp net = Mlp::create(Role::Classifier, widths, static_cast<Activation>(act(rng)),
                          static_cast<Activation>(act(rng)), rng());
    const Tensor batch = fixture::random_tensor(4, widths.front(), rng());
    const Tensor weights = fixture::random_tensor(4, widths.back(), rng());
    const auto analytic = mlp_backward(net, mlp_forward(net, batch), weights).params.flatten();
    const auto fd = oracle::finite_difference(
        net, batch,
        [&](const std::vector<std::vector<double>>& out) {
          double s = 0.0;
          for (std::size_t r = 0; r < out.size(); ++r)
            for (std::size_t c = 0; c < out[r].size(); ++c) s += weights(r, c) * out[r][c];
          return s;
        },
        1e-6);
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      if (!fd.crossed_kink[k]) worst = std::max(worst, relative_gap(analytic[k], fd.grad[k]));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("2-4-3-2 network gradients match central differences") {
  const Mlp net = fixture::random_mlp({2, 4, 3, 2}, 11);
  const Tensor batch = fixture::random_tensor(6, 2, 12);
  const Tensor ones({6, 2}, 1.0f);
  const auto analytic = mlp_backward(net, mlp_forward(net, batch), ones).params.flatten();
  const auto fd = oracle::finite_difference(
      net, batch,
      [](const std::vector<std::vector<double>>& out) {
        double s = 0.0;
        for (const auto& row : out)
          for (double v : row) s += v;
        return s;
      },
      1e-6);
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    if (!fd.crossed_kink[k]) CHECK(relative_gap(analytic[k], fd.grad[k]) < 1e-4);
  }
}

TEST_CASE("forward and backward are bitwise reproducible") {
  const Mlp net = fixture::random_mlp({2, 16, 16, 3}, 21);
  const Tensor batch = fixture::random_tensor(32, 2, 22);
  const Tensor g = fixture::random_tensor(32, 3, 23);
  const ForwardPass a = mlp_forward(net, batch);
  const ForwardPass b = mlp_forward(net, batch);
  CHECK(bitwise_equal(a.output(), b.output()));
  const BackwardResult ga = mlp_backward(net, a, g);
  const BackwardResult gb = mlp_backward(net, b, g);
  CHECK(bitwise_equal(ga.params, gb.params));
  CHECK(bitwise_equal(ga.input_grad, gb.input_grad));
}

TEST_CASE("flatten and load_flat round trip") {
  Mlp net = fixture::random_mlp({3, 4, 2}, 5);
  const auto flat = net.flatten();
  CHECK(flat.size() == net.parameter_count());
  Mlp other = fixture::random_mlp({3, 4, 2}, 6);
  other.load_flat(flat);
  CHECK(bitwise_equal(net, other));
  CHECK_THROWS_AS(other.load_flat(std::vector<float>(3)), ShapeError);
}

TEST_CASE("architecture description rebuilds the shape") {
  const Mlp net = fixture::random_mlp({2, 7, 3}, 9);
  const Mlp shell = architecture_shell(Role::Classifier, describe_architecture(net));
  CHECK(shell.parameter_count() == net.parameter_count());
  CHECK(shell.layers()[0].activation == net.layers()[0].activation);
}

TEST_CASE("SGD step") {
  OptimizerState sgd = OptimizerState::sgd(0.1);
  Mlp net = single(Tensor::matrix(1, 1, {1}), Tensor::vector({0}));
  const GradientSet g({{Tensor::matrix(1, 1, {2}), Tensor::vector({0})}});
  net = optimizer_step(net, g, sgd);
  CHECK(net.layers()[0].weights[0] == doctest::Approx(0.8));
}

TEST_CASE("zero gradient leaves weights unchanged") {
  const Mlp net = fixture::random_mlp({2, 3, 2}, 3);
  for (OptimizerState opt : {OptimizerState::sgd(0.1), OptimizerState::adam(0.1)}) {
    const Mlp after = optimizer_step(net, GradientSet::zeros_like(net), opt);
    CHECK(bitwise_equal(after, net));
  }
}

TEST_CASE("first Adam step moves each weight by the learning rate") {
  OptimizerState adam = OptimizerState::adam(0.01);
  const Mlp net = single(Tensor::matrix(1, 2, {1, 1}), Tensor::vector({0}));
  const GradientSet g({{Tensor::matrix(1, 2, {5, -0.5}), Tensor::vector({0})}});
  const Mlp after = optimizer_step(net, g, adam);
  CHECK(after.layers()[0].weights[0] == doctest::Approx(0.99).epsilon(1e-5));
  CHECK(after.layers()[0].weights[1] == doctest::Approx(1.01).epsilon(1e-5));
}

TEST_CASE("optimizer rejects mismatched gradients") {
  OptimizerState sgd = OptimizerState::sgd(0.1);
  Mlp net = fixture::random_mlp({2, 3, 2}, 3);
  const Mlp other = fixture::random_mlp({2, 4, 2}, 3);
  CHECK_THROWS_AS(sgd.step(net, GradientSet::zeros_like(other)), ShapeError);
  CHECK_THROWS_AS(OptimizerState::sgd(0.0), InputError);
}

TEST_CASE("spectral norm of small matrices") {
  CHECK(spectral_norm(Tensor::matrix(2, 2, {3, 0, 0, 1})) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(spectral_norm(Tensor::matrix(2, 2, {0, 2, 0, 0})) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(spectral_norm(Tensor({3, 3})) == 0.0);
}

TEST_CASE("spectral norm agrees with an SVD") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor m = fixture::random_tensor(5, 4, seed);
    CHECK(std::abs(spectral_norm(m) - oracle::singular_values(m).front()) <= 1e-6);
  }
}

TEST_CASE("warm-started power iteration converges to the same value") {
  const Tensor m = fixture::random_tensor(6, 3, 77);
  std::vector<double> v;
  const double cold = spectral_norm(m, v);
  const double warm = spectral_norm(m, v);
  CHECK(warm == doctest::Approx(cold).epsilon(1e-9));
  CHECK(v.size() == 3);
}

TEST_CASE("spectral projection") {
  const Tensor big = Tensor::matrix(2, 2, {3, 0, 0, 1});
  const Tensor scaled = project_spectral(big, 1.0);
  CHECK(scaled[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(scaled[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  const Tensor small = Tensor::matrix(2, 2, {0.5f, 0, 0, 0.25f});
  CHECK(bitwise_equal(project_spectral(small, 1.0), small));

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor m = fixture::random_tensor(4, 6, seed);
    const Tensor once = project_spectral(m, 0.9);
    CHECK(oracle::singular_values(once).front() <= 0.9 + 1e-6);
    const Tensor twice = project_spectral(once, 0.9);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(twice[i] - once[i]) <= 1e-7);
  }
}

TEST_CASE("clipper caps every layer") {
  Mlp net = fixture::random_mlp({4, 16, 16, 2}, 8);
  for (auto& layer : net.layers())
    for (float& w : layer.weights.data()) w *= 5.0f;
  SpectralClipper clip(1.5);
  clip.apply(net);
  clip.apply(net);
  for (const auto& layer : net.layers())
    CHECK(oracle::singular_values(layer.weights).front() <= 1.5 + 1e-5);
}

TEST_CASE("Lipschitz constant of a product of layers") {
  std::vector<DenseLayer> layers;
  layers.push_back({Tensor::matrix(2, 2, {2, 0, 0, 1}), Tensor({2}), Activation::ReLU});
  layers.push_back({Tensor::matrix(1, 2, {3, 0}), Tensor({1}), Activation::Identity});
  const Mlp net(Role::Classifier, std::move(layers));
  CHECK(lipschitz_constant(net) == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(lipschitz_constant(Mlp::identity(Role::Classifier, 3)) == doctest::Approx(1.0));
}

TEST_CASE("Lipschitz constant bounds sampled difference quotients") {
  const Mlp net = fixture::random_mlp({2, 8, 8, 3}, 31);
  const double theta = lipschitz_constant(net);
  const Tensor x = fixture::random_tensor(10000, 2, 32);
  const Tensor y = fixture::random_tensor(10000, 2, 33);
  const Tensor fx = mlp_predict(net, x);
  const Tensor fy = mlp_predict(net, y);
  double worst = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < fx.cols(); ++c) num += std::pow(double(fx(r, c)) - fy(r, c), 2);
    for (std::size_t c = 0; c < x.cols(); ++c) den += std::pow(double(x(r, c)) - y(r, c), 2);
    if (den > 0) worst = std::max(worst, std::sqrt(num / den));
  }
  CHECK(worst <= theta * (1.0 + 1e-6));
}
