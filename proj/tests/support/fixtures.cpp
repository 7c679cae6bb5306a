// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include "dda/rng.hpp"

namespace fixture {

MoonsPair moons_pair(double target_angle, std::uint64_t seed) {
  dda::ExperimentConfig config;
  config.seed = seed;
  dda::DomainData source = dda::make_domain(config, 0, 0.0);
  dda::DomainData target = dda::make_domain(config, 1, target_angle);
  dda::TrainedModel model = train_default(source, seed);
  const double pre = dda::evaluate(model.extractor, model.classifier, target.test);
  return {std::move(config), std::move(source), std::move(target), std::move(model), pre};
}

dda::TrainedModel train_default(const dda::DomainData& source, std::uint64_t seed) {
  const dda::ExperimentConfig defaults;
  return dda::train_source(source.train, source.test, defaults.arch, defaults.source,
                           dda::derive_seed(seed, "source"));
}

std::vector<std::pair<std::uint16_t, double>> adapt_from_each(
    const dda::CandidateSet& candidates, const dda::DomainData& target,
    const dda::DilsConfig& config) {
  std::vector<std::pair<std::uint16_t, double>> out;
  for (const auto& c : candidates.items()) {
    const auto run = dda::run_dils(c.extractor, c.classifier, c.unlabeled, target.train.unlabeled(),
                                   config, dda::TransportMode::Loopback, &target.test);
    out.emplace_back(c.domain_id, *run.metrics.accuracy);
  }
  return out;
}

dda::Mlp random_mlp(std::vector<std::size_t> widths, std::uint64_t seed, dda::Role role) {
  return dda::Mlp::create(role, widths, dda::Activation::LeakyReLU, dda::Activation::Identity,
                          seed);
}

dda::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  dda::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  dda::Tensor t({rows, cols});
  for (float& v : t.data()) v = static_cast<float>(normal(rng));
  return t;
}

}  // namespace fixture
