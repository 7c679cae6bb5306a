// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <thread>

#include "dda/dils.hpp"
#include "dda/errors.hpp"
#include "dda/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dda;

namespace {

struct Setup {
  Mlp extractor;
  DomainDataset source;
  DomainDataset target;
};

Setup small_setup() {
  const std::vector<std::size_t> widths = {2, 8};
  return {Mlp::create(Role::FeatureExtractor, widths, Activation::LeakyReLU, Activation::Identity, 3),
          make_rotated_moons(0.0, 200, 0.1, 1, 0).unlabeled(),
          make_rotated_moons(60.0, 200, 0.1, 2, 1).unlabeled()};
}

DilsConfig short_config(std::size_t p, std::size_t steps) {
  DilsConfig c;
  c.p = p;
  c.steps = steps;
  c.batch_size = 32;
  return c;
}

GradientSet single_value(float v) {
  return GradientSet({{Tensor::matrix(1, 1, {v}), Tensor({1})}});
}

}  // namespace

TEST_CASE("handshake copies the extractor and seeds identical discriminators") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(4, 8);
  auto endpoints = make_loopback_pair();
  endpoints.first.record_frames(true);
  auto [collab, target] = dils_init(s.extractor, config, endpoints, 0, 1);

  CHECK(bitwise_equal(target.extractor, s.extractor));
  CHECK(bitwise_equal(collab.discriminator, target.discriminator));
  CHECK(collab.g_sync.is_zero());
  CHECK(target.peer_domain_id == 0);

  std::size_t model_inits = 0;
  for (const auto& r : endpoints.first.log().records) {
    const SyncFrame f = decode_frame(r.bytes);
    if (f.type != MsgType::ModelInit) continue;
    ++model_inits;
    CHECK(f.payload.size() == 4 * s.extractor.parameter_count());
  }
  CHECK(model_inits == 1);
}

TEST_CASE("local steps before the first exchange") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(5, 20);
  auto endpoints = make_loopback_pair();
  auto [collab, target] = dils_init(s.extractor, config, endpoints, 0, 1);
  const Mlp discriminator = collab.discriminator;
  const Mlp extractor_before = target.extractor;

  for (std::size_t k = 1; k < config.p; ++k) {
    const Tensor src = batch_iter(s.source, 32, 1, k);
    const Tensor tgt = batch_iter(s.target, 32, 2, k);
    dils_accumulate(collab, src, config);
    dils_apply_sync(collab, config);
    dils_accumulate(target, tgt, config);
    dils_apply_sync(target, config);
    CHECK(collab.buffer.count == k);
    CHECK(target.buffer.count == k);
    CHECK(bitwise_equal(collab.discriminator, discriminator));
    CHECK(bitwise_equal(target.discriminator, discriminator));
  }
  CHECK(bitwise_equal(collab.extractor, s.extractor));
  CHECK_FALSE(bitwise_equal(target.extractor, extractor_before));
}

TEST_CASE("buffer combination examples") {
  CHECK(combine_buffers(single_value(2), single_value(4), 1).entries()[0].weights[0] == 3.0f);
  CHECK(combine_buffers(single_value(4), single_value(4), 2).entries()[0].weights[0] == 2.0f);
}

TEST_CASE("both nodes compute the same synced gradient") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(2, 8);
  auto endpoints = make_loopback_pair();
  auto [collab, target] = dils_init(s.extractor, config, endpoints, 0, 1);
  Rng rng(5);
  for (NodeState* st : {&collab, &target}) {
    for (int k = 0; k < 2; ++k) {
      auto flat = fixture::random_tensor(1, st->discriminator.parameter_count(), rng()).data();
      st->buffer.add(GradientSet::from_flat(st->discriminator, flat));
    }
    st->step = 2;
  }
  const SyncFrame from_collab = buffer_frame(collab);
  const SyncFrame from_target = buffer_frame(target);
  dils_sync(collab, from_target, 2);
  dils_sync(target, from_collab, 2);
  CHECK(bitwise_equal(collab.g_sync, target.g_sync));
  CHECK(collab.buffer.sum.is_zero());
  CHECK(target.buffer.count == 0);
}

TEST_CASE("buffer frame from another step is rejected") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(2, 8);
  auto endpoints = make_loopback_pair();
  auto [collab, target] = dils_init(s.extractor, config, endpoints, 0, 1);
  collab.step = 2;
  target.step = 4;
  CHECK_THROWS_AS(dils_sync(collab, buffer_frame(target), 2), ProtocolError);
  CHECK_THROWS_AS(dils_sync(collab, SyncFrame{MsgType::Hello, 1, 2, {}}, 2), ProtocolError);
}

TEST_CASE("config validation") {
  DilsConfig c = short_config(4, 10);
  CHECK_NOTHROW(c.validate());
  c.p = 11;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = short_config(0, 10);
  CHECK_THROWS_AS(c.validate(), InputError);
  c = short_config(1, 10);
  c.lr_discriminator = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  const DilsConfig w = DilsConfig::for_loss(LossVariant::wda());
  CHECK(w.discriminator_clip == kWassersteinDiscriminatorClip);
  CHECK(w.lr_discriminator == kWassersteinDiscriminatorLr);
  CHECK(DilsConfig::for_loss(LossVariant::adda()).discriminator_clip == 0.0);
}

TEST_CASE("run counts exchanges and keeps replicas identical") {
  const Setup s = small_setup();
  for (std::size_t p : {1, 3, 7}) {
    DilsConfig config = short_config(p, 50);
    config.record_trajectory = true;
    const DilsResult r = run_dils(s.extractor, s.extractor, s.source, s.target, config);
    CHECK(r.metrics.sync_events == 50 / p);
    CHECK(r.collaborator.sync_events.size() == 50 / p);
    REQUIRE(r.collaborator.discriminator_trajectory.size() == 50);
    for (std::size_t n = 0; n < 50; ++n)
      CHECK(bitwise_equal(r.collaborator.discriminator_trajectory[n],
                          r.target.discriminator_trajectory[n]));
    for (bool zero : r.target.buffer_zero_after_sync) CHECK(zero);
    CHECK_FALSE(r.metrics.accuracy.has_value());
  }
}

TEST_CASE("payload bytes scale exactly with the exchange interval") {
  const Setup s = small_setup();
  const DilsResult one = run_dils(s.extractor, s.extractor, s.source, s.target, short_config(1, 40));
  const DilsResult four = run_dils(s.extractor, s.extractor, s.source, s.target, short_config(4, 40));
  CHECK(one.metrics.grad_payload_bytes == 4 * four.metrics.grad_payload_bytes);
  const std::uint64_t params =
      make_discriminator(s.extractor.output_dim(), short_config(1, 40)).parameter_count();
  CHECK(four.collaborator.grad_payload_bytes == 10 * 4 * params);
  for (const auto& e : four.collaborator.sync_events) CHECK(e.bytes_sent == 20 + 4 * params);
}

TEST_CASE("lockstep run matches the single-process reference") {
  const Setup s = small_setup();
  for (const LossVariant loss : {LossVariant::adda(), LossVariant::grl(), LossVariant::wda(1.0)}) {
    for (std::size_t p : {1, 3}) {
      DilsConfig config = DilsConfig::for_loss(loss);
      config.p = p;
      config.steps = 60;
      config.batch_size = 32;
      config.record_trajectory = true;
      const DilsResult r = run_dils(s.extractor, s.extractor, s.source, s.target, config);
      const auto ref = oracle::reference_dils(s.extractor, s.source, s.target, config);
      REQUIRE(ref.discriminator.size() == 60);
      for (std::size_t n = 0; n < 60; ++n) {
        CHECK(bitwise_equal(ref.discriminator[n], r.target.discriminator_trajectory[n]));
        CHECK(bitwise_equal(ref.extractor[n], r.target.extractor_trajectory[n]));
      }
    }
  }
}

TEST_CASE("run is reproducible and frozen on the collaborator") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(4, 40);
  auto endpoints = make_loopback_pair();
  std::optional<NodeOutcome> target;
  std::thread t([&] { target = run_target_node(endpoints.second, s.target.features, config, 1); });
  const NodeOutcome collab =
      run_collaborator_node(endpoints.first, s.extractor, s.source.features, config, 0);
  t.join();
  CHECK(bitwise_equal(collab.state.extractor, s.extractor));
  CHECK(bitwise_equal(collab.state.discriminator, target->state.discriminator));

  const DilsResult again = run_dils(s.extractor, s.extractor, s.source, s.target, config);
  CHECK(bitwise_equal(again.target_extractor, target->state.extractor));
}

TEST_CASE("tcp and loopback runs agree") {
  const Setup s = small_setup();
  const DilsConfig config = short_config(4, 40);
  const DilsResult a = run_dils(s.extractor, s.extractor, s.source, s.target, config);
  const DilsResult b =
      run_dils(s.extractor, s.extractor, s.source, s.target, config, TransportMode::Tcp);
  CHECK(bitwise_equal(a.target_extractor, b.target_extractor));
  CHECK(a.target.counters == b.target.counters);
  CHECK(a.collaborator.counters == b.collaborator.counters);
}

TEST_CASE("evaluate examples") {
  DomainDataset d;
  d.features = Tensor::matrix(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  d.labels = std::vector<int>{0, 1, 0, 1};
  const Mlp identity = Mlp::identity(Role::FeatureExtractor, 2);
  CHECK(evaluate(identity, Mlp::identity(Role::Classifier, 2), d) == 1.0);
  std::vector<DenseLayer> constant;
  constant.push_back({Tensor({2, 2}), Tensor::vector({1, 0}), Activation::Identity});
  CHECK(evaluate(identity, Mlp(Role::Classifier, std::move(constant)), d) == 0.5);
}
