// SPDX-License-Identifier: Apache-2.0
#include "dda/serialize.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace dda {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

Tensor tensor_from_json(const Json& j, std::vector<std::size_t> shape) {
  auto values = j.get<std::vector<float>>();
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  if (values.size() != n) throw ConfigError("tensor has the wrong number of values");
  return Tensor(std::move(shape), std::move(values));
}

std::vector<float> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

Json to_json(const Mlp& net) {
  Json layers = Json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"in", layer.in()},
                      {"out", layer.out()},
                      {"activation", to_string(layer.activation)},
                      {"weights", to_vector(layer.weights)},
                      {"bias", to_vector(layer.bias)}});
  }
  return {{"role", to_string(net.role())}, {"layers", layers}};
}

Mlp mlp_from_json(const Json& j) {
  try {
    check_keys(j, {"role", "layers"}, "network");
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      check_keys(l, {"in", "out", "activation", "weights", "bias"}, "layer");
      const auto in = l.at("in").get<std::size_t>();
      const auto out = l.at("out").get<std::size_t>();
      layers.push_back({tensor_from_json(l.at("weights"), {out, in}),
                        tensor_from_json(l.at("bias"), {out}),
                        activation_from_string(l.at("activation").get<std::string>())});
    }
    return Mlp(role_from_string(j.at("role").get<std::string>()), std::move(layers));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad network JSON: ") + e.what());
  }
}

Json to_json(const ModelFile& model) {
  return {{"domain_id", model.domain_id},
          {"angle_deg", model.angle_deg},
          {"extractor", to_json(model.extractor)},
          {"classifier", to_json(model.classifier)}};
}

ModelFile model_file_from_json(const Json& j) {
  check_keys(j, {"domain_id", "angle_deg", "extractor", "classifier"}, "model file");
  if (!j.contains("extractor") || !j.contains("classifier")) {
    throw ConfigError("model file needs 'extractor' and 'classifier'");
  }
  ModelFile out{0, 0.0, mlp_from_json(j.at("extractor")), mlp_from_json(j.at("classifier"))};
  read(j, "domain_id", out.domain_id);
  read(j, "angle_deg", out.angle_deg);
  return out;
}

Json to_json(const LossVariant& variant) {
  return {{"kind", to_string(variant.kind)}, {"gp_weight", variant.gp_weight}};
}

LossVariant loss_variant_from_json(const Json& j, LossVariant base) {
  if (j.is_string()) {
    const auto kind = loss_kind_from_string(j.get<std::string>());
    return LossVariant{kind, 0.0};
  }
  check_keys(j, {"kind", "gp_weight"}, "loss");
  if (j.contains("kind")) {
    base.kind = loss_kind_from_string(j.at("kind").get<std::string>());
    base.gp_weight = 0.0;
  }
  read(j, "gp_weight", base.gp_weight);
  return base;
}

Json to_json(const DilsConfig& c) {
  return {{"p", c.p},
          {"steps", c.steps},
          {"lr_extractor", c.lr_extractor},
          {"lr_discriminator", c.lr_discriminator},
          {"batch_size", c.batch_size},
          {"loss", to_json(c.loss)},
          {"seed", c.seed},
          {"discriminator_hidden", c.discriminator_hidden},
          {"extractor_clip", c.extractor_clip},
          {"discriminator_clip", c.discriminator_clip}};
}

DilsConfig dils_config_from_json(const Json& j, DilsConfig c) {
  check_keys(j,
             {"p", "steps", "lr_extractor", "lr_discriminator", "batch_size", "loss", "seed",
              "discriminator_hidden", "extractor_clip", "discriminator_clip"},
             "dils");
  if (j.contains("loss")) {
    c.loss = loss_variant_from_json(j.at("loss"), c.loss);
    // WDA settings not given explicitly take the WDA defaults.
    if (c.loss.kind == LossKind::WDA) {
      const DilsConfig wda = DilsConfig::for_loss(c.loss);
      if (!j.contains("lr_discriminator")) c.lr_discriminator = wda.lr_discriminator;
      if (!j.contains("discriminator_clip")) c.discriminator_clip = wda.discriminator_clip;
    }
  }
  read(j, "p", c.p);
  read(j, "steps", c.steps);
  read(j, "lr_extractor", c.lr_extractor);
  read(j, "lr_discriminator", c.lr_discriminator);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "discriminator_hidden", c.discriminator_hidden);
  read(j, "extractor_clip", c.extractor_clip);
  read(j, "discriminator_clip", c.discriminator_clip);
  c.validate();
  return c;
}

Json to_json(const W1Config& c) {
  return {{"critic_hidden", c.critic_hidden},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"gp_weight", c.gp_weight},
          {"gp_warmup_steps", c.gp_warmup_steps},
          {"p", c.p},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"critic_clip", c.critic_clip}};
}

W1Config w1_config_from_json(const Json& j, W1Config c) {
  check_keys(j,
             {"critic_hidden", "steps", "learning_rate", "gp_weight", "gp_warmup_steps", "p",
              "batch_size", "seed", "critic_clip"},
             "w1");
  read(j, "critic_hidden", c.critic_hidden);
  read(j, "steps", c.steps);
  read(j, "learning_rate", c.learning_rate);
  read(j, "gp_weight", c.gp_weight);
  read(j, "gp_warmup_steps", c.gp_warmup_steps);
  read(j, "p", c.p);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "critic_clip", c.critic_clip);
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json policy = {{"kind", to_string(c.policy.kind)}};
  if (c.policy.kind == PolicyKind::Random) policy["seed"] = c.policy.seed;
  return {{"family", to_string(c.family)},
          {"angles", c.angles},
          {"samples_per_domain", c.samples_per_domain},
          {"noise", c.noise},
          {"split", c.split},
          {"policy", policy},
          {"dils", to_json(c.dils)},
          {"w1", to_json(c.w1)},
          {"source", {{"steps", c.source.steps},
                      {"learning_rate", c.source.learning_rate},
                      {"batch_size", c.source.batch_size},
                      {"spectral_clip", c.source.spectral_clip}}},
          {"arch", {{"extractor_hidden", c.arch.extractor_hidden},
                    {"feature_dim", c.arch.feature_dim},
                    {"classifier_hidden", c.arch.classifier_hidden}}},
          {"theta_ce", c.theta_ce == ThetaCeMode::Analytic ? "analytic" : "empirical"},
          {"out_dir", c.out_dir.string()},
          {"transport", to_string(c.transport)},
          {"seed", c.seed}};
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig c) {
  check_keys(j,
             {"family", "angles", "samples_per_domain", "noise", "split", "policy", "dils", "w1",
              "source", "arch", "theta_ce", "out_dir", "transport", "seed"},
             "experiment config");
  try {
    if (j.contains("family")) c.family = domain_family_from_string(j.at("family").get<std::string>());
    read(j, "angles", c.angles);
    read(j, "samples_per_domain", c.samples_per_domain);
    read(j, "noise", c.noise);
    read(j, "split", c.split);
    if (j.contains("policy")) {
      const Json& p = j.at("policy");
      if (p.is_string()) {
        c.policy.kind = policy_kind_from_string(p.get<std::string>());
      } else {
        check_keys(p, {"kind", "seed"}, "policy");
        if (p.contains("kind")) c.policy.kind = policy_kind_from_string(p.at("kind").get<std::string>());
        read(p, "seed", c.policy.seed);
      }
    }
    if (j.contains("dils")) c.dils = dils_config_from_json(j.at("dils"), c.dils);
    if (j.contains("w1")) c.w1 = w1_config_from_json(j.at("w1"), c.w1);
    if (j.contains("source")) {
      const Json& s = j.at("source");
      check_keys(s, {"steps", "learning_rate", "batch_size", "spectral_clip"}, "source");
      read(s, "steps", c.source.steps);
      read(s, "learning_rate", c.source.learning_rate);
      read(s, "batch_size", c.source.batch_size);
      read(s, "spectral_clip", c.source.spectral_clip);
    }
    if (j.contains("arch")) {
      const Json& a = j.at("arch");
      check_keys(a, {"extractor_hidden", "feature_dim", "classifier_hidden"}, "arch");
      read(a, "extractor_hidden", c.arch.extractor_hidden);
      read(a, "feature_dim", c.arch.feature_dim);
      read(a, "classifier_hidden", c.arch.classifier_hidden);
    }
    if (j.contains("theta_ce")) {
      const auto mode = j.at("theta_ce").get<std::string>();
      if (mode == "analytic") {
        c.theta_ce = ThetaCeMode::Analytic;
      } else if (mode == "empirical") {
        c.theta_ce = ThetaCeMode::Empirical;
      } else {
        throw ConfigError("theta_ce must be 'analytic' or 'empirical'");
      }
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("transport")) {
      c.transport = transport_mode_from_string(j.at("transport").get<std::string>());
    }
    read(j, "seed", c.seed);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

Json to_json(const BoundReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json row = {{"domain_id", e.domain_id}, {"eps_l1", e.eps_l1}, {"theta", e.theta},
                {"theta_ce", e.theta_ce},   {"w1", e.w1},         {"bound", e.bound},
                {"feasible", e.feasible}};
    if (!e.error.empty()) row["error"] = e.error;
    entries.push_back(std::move(row));
  }
  return {{"target_id", r.target_id},
          {"chosen", r.chosen},
          {"tie_break", r.tie_break},
          {"entries", entries}};
}

BoundReport bound_report_from_json(const Json& j) {
  BoundReport r;
  try {
    r.target_id = j.at("target_id").get<std::uint16_t>();
    r.chosen = j.at("chosen").get<std::uint16_t>();
    r.tie_break = j.value("tie_break", "");
    for (const auto& e : j.at("entries")) {
      r.entries.push_back({e.at("domain_id").get<std::uint16_t>(), e.at("eps_l1").get<double>(),
                           e.at("theta").get<double>(), e.at("theta_ce").get<double>(),
                           e.at("w1").get<double>(), e.at("bound").get<double>(),
                           e.at("feasible").get<bool>(), e.value("error", "")});
    }
  } catch (const Json::exception& ex) {
    throw ConfigError(std::string("bad bound report: ") + ex.what());
  }
  return r;
}

Json to_json(const W1Estimate& e) {
  return {{"value", e.value},
          {"clamped", e.clamped()},
          {"loss_candidate", e.loss_candidate},
          {"loss_target", e.loss_target},
          {"trace", e.trace}};
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dda
