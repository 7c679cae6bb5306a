// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dda/domains.hpp"
#include "dda/errors.hpp"
#include "dda/frame.hpp"
#include "dda/rng.hpp"
#include "dda/wdist.hpp"
#include "oracles.hpp"

using namespace dda;

namespace {

DomainDataset gaussian_1d(double mu, std::size_t n, std::uint64_t seed, std::uint16_t id) {
  Rng rng(seed);
  std::normal_distribution<double> normal(mu, 0.1);
  DomainDataset d;
  d.features = Tensor({n, 1});
  for (float& v : d.features.data()) v = static_cast<float>(normal(rng));
  d.domain_id = id;
  return d;
}

std::vector<double> column(const DomainDataset& d) {
  return {d.features.data().begin(), d.features.data().end()};
}

Mlp constant_critic(std::size_t dim, float c) {
  std::vector<DenseLayer> layers;
  layers.push_back({Tensor({1, dim}), Tensor::vector({c}), Activation::Identity});
  return Mlp(Role::Discriminator, std::move(layers));
}

}  // namespace

TEST_CASE("constant critic has that constant as its mean output") {
  const Mlp enc = Mlp::identity(Role::FeatureExtractor, 2);
  const DomainDataset d = make_rotated_moons(0.0, 50, 0.1, 1);
  CHECK(wdist_local_losses(constant_critic(2, 0.75f), enc, d.features) == doctest::Approx(0.75));
}

TEST_CASE("shared critic gives equal losses on identical data") {
  const Mlp enc = Mlp::identity(Role::FeatureExtractor, 2);
  const Mlp critic = make_critic(2, W1Config{});
  const DomainDataset d = make_rotated_moons(0.0, 50, 0.1, 1);
  CHECK(wdist_local_losses(critic, enc, d.features) == wdist_local_losses(critic, enc, d.features));
}

TEST_CASE("aggregation subtracts the target gradient") {
  const GradientSet c({{Tensor::matrix(1, 1, {1.0f}), Tensor::vector({0.5f})}});
  const GradientSet t({{Tensor::matrix(1, 1, {0.25f}), Tensor::vector({0.5f})}});
  const GradientSet g = wdist_aggregate(c, t);
  CHECK(g.entries()[0].weights[0] == 0.75f);
  CHECK(g.entries()[0].bias[0] == 0.0f);
  CHECK(wdist_aggregate(c, c).is_zero());
}

TEST_CASE("config validation") {
  W1Config c;
  CHECK_NOTHROW(c.validate());
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = W1Config{};
  c.gp_weight = -1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("identical datasets estimate to about zero") {
  const DomainDataset a = gaussian_1d(0.0, 300, 1, 0);
  DomainDataset b = a;
  b.domain_id = 1;
  const W1Run run = estimate_w1(Mlp::identity(Role::FeatureExtractor, 1), a, b, W1Config{});
  CHECK(run.estimate.value <= 0.05);
  CHECK(run.estimate.value >= -0.05);
}

TEST_CASE("one-dimensional shift matches the exact distance") {
  const DomainDataset a = gaussian_1d(0.0, 500, 11, 0);
  const DomainDataset b = gaussian_1d(2.0, 500, 12, 1);
  const double exact = oracle::w1_sorted(column(a), column(b));
  const Mlp enc = Mlp::identity(Role::FeatureExtractor, 1);
  const W1Run forward = estimate_w1(enc, a, b, W1Config{});
  CHECK(std::abs(forward.estimate.value - exact) <= 0.1 * exact);

  const W1Run backward = estimate_w1(enc, b, a, W1Config{});
  CHECK(std::abs(forward.estimate.value - backward.estimate.value) <=
        0.15 * std::max(forward.estimate.value, backward.estimate.value));
  CHECK(backward.estimate.value >= -0.05);
}

TEST_CASE("replicas agree and the log carries only scalar stats and buffers") {
  const DomainDataset a = gaussian_1d(0.0, 200, 3, 0);
  const DomainDataset b = gaussian_1d(1.0, 200, 4, 1);
  W1Config config;
  config.steps = 200;
  const W1Run run = estimate_w1(Mlp::identity(Role::FeatureExtractor, 1), a, b, config);
  CHECK(bitwise_equal(run.candidate.critic, run.target.critic));
  CHECK(run.candidate.estimate.value == run.target.estimate.value);
  CHECK(run.estimate.trace.size() == config.steps / config.p);
  CHECK(run.estimate.value == run.estimate.loss_candidate - run.estimate.loss_target);

  std::size_t stats = 0, buffers = 0;
  const std::size_t critic_params = run.candidate.critic.parameter_count();
  for (const auto& r : run.candidate.log.records) {
    const SyncFrame f = decode_frame(r.bytes);
    if (f.type == MsgType::W1Stats) {
      ++stats;
      CHECK(f.reals().size() == 1);
    } else if (f.type == MsgType::DiscGradBuffer) {
      ++buffers;
      CHECK(f.reals().size() == critic_params);
    }
  }
  // Sent and received: one per window plus the final full-data means.
  CHECK(stats == 2 * (config.steps / config.p + 1));
  CHECK(buffers == 2 * (config.steps / config.p));
}

TEST_CASE("rotation ordering agrees with the assignment oracle") {
  const Mlp enc = Mlp::identity(Role::FeatureExtractor, 2);
  const DomainDataset base = make_rotated_moons(0.0, 200, 0.1, 21, 0);
  const DomainDataset near = make_rotated_moons(30.0, 200, 0.1, 22, 1);
  const DomainDataset far = make_rotated_moons(90.0, 200, 0.1, 23, 2);
  const double exact_near = oracle::w1_assignment(base.features, near.features);
  const double exact_far = oracle::w1_assignment(base.features, far.features);
  REQUIRE(exact_near < exact_far);
  const double est_near = estimate_w1(enc, base, near, W1Config{}).estimate.value;
  const double est_far = estimate_w1(enc, base, far, W1Config{}).estimate.value;
  CHECK(est_near < est_far);
  CHECK(est_near >= -0.05);
}

TEST_CASE("tcp and loopback estimates are identical") {
  const DomainDataset a = gaussian_1d(0.0, 100, 5, 0);
  const DomainDataset b = gaussian_1d(0.5, 100, 6, 1);
  W1Config config;
  config.steps = 100;
  const Mlp enc = Mlp::identity(Role::FeatureExtractor, 1);
  const W1Run loop = estimate_w1(enc, a, b, config);
  const W1Run tcp = estimate_w1(enc, a, b, config, TransportMode::Tcp);
  CHECK(loop.estimate.value == tcp.estimate.value);
  CHECK(loop.candidate.counters == tcp.candidate.counters);
}
