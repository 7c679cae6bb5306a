// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>

#include "dda/serialize.hpp"
#include "fixtures.hpp"

using namespace dda;

TEST_CASE("network JSON round trip is exact") {
  const Mlp net = fixture::random_mlp({2, 5, 3}, 8);
  const Mlp back = mlp_from_json(Json::parse(to_json(net).dump()));
  CHECK(bitwise_equal(back, net));
  CHECK(back.role() == net.role());
}

TEST_CASE("model file round trip") {
  ModelFile m{4, 90.0, fixture::random_mlp({2, 8}, 1, Role::FeatureExtractor),
              fixture::random_mlp({8, 2}, 2)};
  const auto path = std::filesystem::temp_directory_path() / "dda_model_test.json";
  write_json(path, to_json(m));
  const ModelFile back = model_file_from_json(read_json(path));
  std::filesystem::remove(path);
  CHECK(back.domain_id == 4);
  CHECK(back.angle_deg == 90.0);
  CHECK(bitwise_equal(back.extractor, m.extractor));
  CHECK(bitwise_equal(back.classifier, m.classifier));
}

TEST_CASE("experiment config round trip") {
  ExperimentConfig c;
  c.angles = {0, 45, 90};
  c.policy = {PolicyKind::Random, 9};
  c.dils.p = 10;
  c.dils.loss = LossVariant::grl();
  c.w1.gp_weight = 2.5;
  c.arch.classifier_hidden = {16};
  c.transport = TransportMode::Tcp;
  c.theta_ce = ThetaCeMode::Empirical;
  const ExperimentConfig back = experiment_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.dils.p == 10);
  CHECK(back.policy.kind == PolicyKind::Random);
}

TEST_CASE("partial config keeps defaults") {
  const ExperimentConfig c = experiment_config_from_json(Json::parse(R"({"seed": 7})"));
  CHECK(c.seed == 7);
  CHECK(c.angles == ExperimentConfig{}.angles);
}

TEST_CASE("Wasserstein loss picks its discriminator defaults") {
  const DilsConfig d = dils_config_from_json(Json::parse(R"({"loss": {"kind": "wda"}})"));
  CHECK(d.loss.kind == LossKind::WDA);
  CHECK(d.discriminator_clip == kWassersteinDiscriminatorClip);
  const DilsConfig explicit_lr =
      dils_config_from_json(Json::parse(R"({"loss": {"kind": "wda"}, "lr_discriminator": 0.02})"));
  CHECK(explicit_lr.lr_discriminator == 0.02);
}

TEST_CASE("unknown or mistyped keys are rejected") {
  CHECK_THROWS_AS(experiment_config_from_json(Json::parse(R"({"sed": 7})")), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(Json::parse(R"({"seed": "seven"})")), ConfigError);
  CHECK_THROWS_AS(dils_config_from_json(Json::parse(R"({"dils": {}})")), ConfigError);
}

TEST_CASE("bound report round trip") {
  BoundReport r;
  r.target_id = 3;
  r.entries.push_back({0, 0.1, 2.0, 1.4142135623730951, 0.05, 0.3, true, ""});
  r.entries.push_back({1, 0.2, 1.0, 1.4142135623730951, -0.01, 0.2, false, "diverged"});
  r.chosen = 0;
  r.tie_break = "";
  const BoundReport back = bound_report_from_json(Json::parse(to_json(r).dump()));
  CHECK(back.target_id == 3);
  CHECK(back.chosen == 0);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].bound == r.entries[0].bound);
  CHECK(back.entries[1].w1 == r.entries[1].w1);
  CHECK_FALSE(back.entries[1].feasible);
  CHECK(back.entries[1].error == "diverged");
}
