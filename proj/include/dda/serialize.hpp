// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include <json.hpp>

#include "dda/dils.hpp"
#include "dda/mlp.hpp"
#include "dda/ocs.hpp"
#include "dda/orchestrator.hpp"
#include "dda/wdist.hpp"

namespace dda {

using Json = nlohmann::json;

/// Thrown for malformed or unknown configuration keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json to_json(const Mlp& net);
Mlp mlp_from_json(const Json& j);

/// A trained (E, C) pair tagged with its domain.
struct ModelFile {
  std::uint16_t domain_id = 0;
  double angle_deg = 0.0;
  Mlp extractor;
  Mlp classifier;
};
Json to_json(const ModelFile& model);
ModelFile model_file_from_json(const Json& j);

Json to_json(const LossVariant& variant);
Json to_json(const DilsConfig& config);
Json to_json(const W1Config& config);
Json to_json(const ExperimentConfig& config);
Json to_json(const BoundReport& report);
Json to_json(const W1Estimate& estimate);

/// Parsers start from `base` and overwrite the keys present in `j`.
LossVariant loss_variant_from_json(const Json& j, LossVariant base = {});
DilsConfig dils_config_from_json(const Json& j, DilsConfig base = {});
W1Config w1_config_from_json(const Json& j, W1Config base = {});
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base = {});
BoundReport bound_report_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace dda
