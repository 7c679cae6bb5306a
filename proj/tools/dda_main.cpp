// SPDX-License-Identifier: Apache-2.0
// Command-line driver: source training, W1 estimation, collaborator
// selection, single-pair adaptation (in-process or split across two
// processes over TCP), full sequences, and the privacy audit.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dda/audit.hpp"
#include "dda/dils.hpp"
#include "dda/orchestrator.hpp"
#include "dda/rng.hpp"
#include "dda/serialize.hpp"
#include "dda/wdist.hpp"

namespace fs = std::filesystem;
using namespace dda;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string transport;
  std::string out;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "Override the config seed");
  sub->add_option("--transport", opts.transport, "loopback or tcp")
      ->check(CLI::IsMember({"loopback", "tcp"}));
  sub->add_option("--out", opts.out, "Output directory");
}

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig config;
  if (!opts.config_path.empty()) config = experiment_config_from_json(read_json(opts.config_path));
  if (opts.seed) config.seed = *opts.seed;
  if (!opts.transport.empty()) config.transport = transport_mode_from_string(opts.transport);
  if (!opts.out.empty()) config.out_dir = opts.out;
  config.validate();
  fs::create_directories(config.out_dir);
  return config;
}

std::uint16_t domain_id_for(const ExperimentConfig& config, double angle) {
  const auto it = std::find(config.angles.begin(), config.angles.end(), angle);
  return it == config.angles.end() ? static_cast<std::uint16_t>(config.angles.size())
                                   : static_cast<std::uint16_t>(it - config.angles.begin());
}

// The source model from --model, or trained exactly as `run` would train it.
ModelFile source_model(const ExperimentConfig& config, const std::string& model_path) {
  if (!model_path.empty()) return model_file_from_json(read_json(model_path));
  const DomainData source = make_domain(config, 0, config.angles[0]);
  TrainedModel m = train_source(source.train, source.test, config.arch, config.source,
                                derive_seed(config.seed, "source"));
  std::cerr << "trained source model, held-out accuracy " << m.held_out_accuracy << '\n';
  return {0, config.angles[0], std::move(m.extractor), std::move(m.classifier)};
}

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--connect", "expected HOST:PORT");
  return {text.substr(0, colon), static_cast<std::uint16_t>(std::stoul(text.substr(colon + 1)))};
}

int cmd_train_source(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const DomainData source = make_domain(config, 0, config.angles[0]);
  TrainedModel m = train_source(source.train, source.test, config.arch, config.source,
                                derive_seed(config.seed, "source"));
  const fs::path path = config.out_dir / "model_0.json";
  write_json(path, to_json(ModelFile{0, config.angles[0], m.extractor, m.classifier}));
  save_csv(source.train, config.out_dir / "source_train.csv");
  std::cout << "held-out accuracy " << m.held_out_accuracy << "\nwrote " << path.string() << '\n';
  return 0;
}

int cmd_wdist(const CommonOptions& opts, const std::string& model_path, double target_angle,
              const std::string& candidate_csv, const std::string& target_csv) {
  const ExperimentConfig config = load_config(opts);
  DomainDataset candidate, target;
  Mlp encoder = Mlp::identity(Role::FeatureExtractor, 2);
  if (!candidate_csv.empty() || !target_csv.empty()) {
    if (candidate_csv.empty() || target_csv.empty()) {
      throw CLI::ValidationError("--candidate-csv", "give both --candidate-csv and --target-csv");
    }
    candidate = load_csv(candidate_csv).unlabeled();
    target = load_csv(target_csv).unlabeled();
    target.domain_id = 1;
    encoder = model_path.empty() ? Mlp::identity(Role::FeatureExtractor, candidate.dim())
                                 : model_file_from_json(read_json(model_path)).extractor;
  } else {
    const ModelFile model = source_model(config, model_path);
    candidate = make_domain(config, model.domain_id, model.angle_deg).train.unlabeled();
    target = make_domain(config, domain_id_for(config, target_angle), target_angle).train.unlabeled();
    encoder = model.extractor;
  }
  const W1Run run = estimate_w1(encoder, candidate, target, config.w1, config.transport);
  write_json(config.out_dir / "w1.json", to_json(run.estimate));
  std::cout << "W1 estimate " << run.estimate.value << '\n';
  return 0;
}

int cmd_ocs(const CommonOptions& opts) {
  ExperimentConfig config = load_config(opts);
  Sequence sequence(config);
  while (sequence.config().angles.size() - sequence.record().targets.size() > 2) {
    const TargetRecord& t = sequence.step();
    std::cerr << "adapted " << t.angle_deg << " deg from domain " << t.collaborator << '\n';
  }
  const DomainData target = sequence.next_target();
  const BoundReport report =
      select_collaborator(sequence.candidates(), target.train, config.w1, config.transport);
  write_json(config.out_dir / "bounds.json", to_json(report));
  std::printf("%-10s %-8s %-8s %-8s %-10s %s\n", "candidate", "eps_l1", "theta", "w1", "bound", "");
  for (const auto& e : report.entries) {
    std::printf("%-10u %-8.4f %-8.3f %-8.4f %-10.4f %s\n", e.domain_id, e.eps_l1, e.theta, e.w1,
                e.bound, e.feasible ? (e.domain_id == report.chosen ? "<- chosen" : "") : e.error.c_str());
  }
  return 0;
}

int cmd_adapt(const CommonOptions& opts, const std::string& model_path,
              std::optional<double> target_angle, std::optional<std::uint16_t> listen_port,
              const std::string& bind, const std::string& connect) {
  const ExperimentConfig config = load_config(opts);
  const double angle = target_angle.value_or(config.angles[1]);
  const std::uint16_t target_id = domain_id_for(config, angle);
  DilsConfig dils = config.dils;
  dils.seed = derive_seed(config.dils.seed, "adapt", target_id);
  const fs::path frames = config.out_dir / "frames";

  if (listen_port) {
    const DomainData target = make_domain(config, target_id, angle);
    TcpListener listener(*listen_port, bind);
    std::cerr << "target node listening on " << bind << ':' << listener.port() << '\n';
    Endpoint endpoint = listener.accept();
    endpoint.record_frames(true);
    const NodeOutcome out = run_target_node(endpoint, target.train.features, dils, target_id);
    write_json(config.out_dir / "target_extractor.json", to_json(out.state.extractor));
    out.report.log.save(frames, "target");
    std::cout << "target node done: " << out.report.sync_events.size() << " exchanges, "
              << out.report.counters.bytes_sent << " bytes sent\n";
    return 0;
  }

  const ModelFile model = source_model(config, model_path);
  const DomainData collab = make_domain(config, model.domain_id, model.angle_deg);
  if (!connect.empty()) {
    const auto [host, port] = parse_host_port(connect);
    Endpoint endpoint = tcp_connect(host, port);
    endpoint.record_frames(true);
    const NodeOutcome out = run_collaborator_node(endpoint, model.extractor,
                                                  collab.train.features, dils, model.domain_id);
    out.report.log.save(frames, "collaborator");
    std::cout << "collaborator node done: " << out.report.sync_events.size() << " exchanges, "
              << out.report.counters.bytes_sent << " bytes sent\n";
    return 0;
  }

  const DomainData target = make_domain(config, target_id, angle);
  const double pre = evaluate(model.extractor, model.classifier, target.test);
  const DilsResult r = run_dils(model.extractor, model.classifier, collab.train.unlabeled(),
                                target.train.unlabeled(), dils, config.transport, &target.test);
  write_json(config.out_dir / "target_extractor.json", to_json(r.target_extractor));
  write_json(config.out_dir / "adapted_model.json",
             to_json(ModelFile{target_id, angle, r.target_extractor, model.classifier}));
  r.collaborator.log.save(frames, "collaborator");
  r.target.log.save(frames, "target");
  std::cout << "accuracy " << pre << " -> " << *r.metrics.accuracy << " (" << r.metrics.sync_events
            << " exchanges, " << r.metrics.bytes_sent_target << " bytes sent by the target)\n";
  return 0;
}

int cmd_run(const CommonOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  write_json(config.out_dir / "config.json", to_json(config));
  const MetricsRecord record = run_sequence(config);
  emit_report(record, config.out_dir);
  std::printf("source accuracy %.4f\n", record.source_accuracy);
  for (const auto& t : record.targets) {
    if (t.ok) {
      std::printf("%6.1f deg  from %u  %.4f -> %.4f\n", t.angle_deg, t.collaborator,
                  t.pre_accuracy, t.post_accuracy);
    } else {
      std::printf("%6.1f deg  failed: %s\n", t.angle_deg, t.error.c_str());
    }
  }
  std::printf("mean adaptation accuracy %.4f\nreport in %s\n", record.mean_accuracy(),
              config.out_dir.string().c_str());
  return 0;
}

Json exposure_json(const std::string& name, const ExposureReport& r) {
  return {{"log", name}, {"frames", r.frames}, {"violations", r.violations}, {"warnings", r.warnings}};
}

int cmd_audit(const CommonOptions& opts, const std::vector<std::string>& logs) {
  const ExperimentConfig config = load_config(opts);
  Json out;
  std::size_t violations = 0;
  auto check = [&](const std::string& name, const FrameLog& log) {
    const ExposureReport r = trace_exposure_check(log);
    violations += r.violations.size();
    out["exposure"].push_back(exposure_json(name, r));
    std::cout << name << ": " << r.frames << " frames, " << r.violations.size() << " violations\n";
    for (const auto& v : r.violations) std::cout << "  violation: " << v << '\n';
    for (const auto& w : r.warnings) std::cout << "  warning: " << w << '\n';
  };

  if (!logs.empty()) {
    for (const auto& stem : logs) {
      const fs::path p(stem);
      check(stem, FrameLog::load(p.parent_path(), p.filename().string()));
    }
  } else {
    const Mlp victim = Mlp::create(Role::Classifier, std::vector<std::size_t>{2, 4, 2},
                                   Activation::LeakyReLU, Activation::Identity,
                                   derive_seed(config.seed, "victim"));
    const std::vector<double> x = {0.7, -0.4};
    const auto baseline = std::get<AttackResult>(gradient_matching_attack(full_knowledge_setup(victim, x, 1)));
    out["full_knowledge_mse"] = *baseline.mse;
    std::cout << "full-knowledge attack MSE " << *baseline.mse << '\n';

    const DomainData source = make_domain(config, 0, config.angles[0]);
    const DomainData target = make_domain(config, 1, config.angles[1]);
    TrainedModel m = train_source(source.train, source.test, config.arch, config.source,
                                  derive_seed(config.seed, "source"));
    DilsConfig dils = config.dils;
    dils.steps = std::min<std::size_t>(dils.steps, 200);
    dils.p = std::min(dils.p, dils.steps);
    const DilsResult r = run_dils(m.extractor, m.classifier, source.train.unlabeled(),
                                  target.train.unlabeled(), dils, config.transport);
    const auto describe = [](const AttackOutcome& o) -> std::string {
      if (const auto* missing = std::get_if<MissingKnowledge>(&o)) return "missing " + to_string(*missing);
      return "instantiable";
    };
    const std::string from_target =
        describe(gradient_matching_attack(setup_from_target_trace(r.collaborator.log, r.discriminator)));
    const std::string from_collab = describe(gradient_matching_attack(
        setup_from_collaborator_trace(r.target.log, m.extractor, r.discriminator)));
    out["attack_on_target_trace"] = from_target;
    out["attack_on_collaborator_trace"] = from_collab;
    std::cout << "attack on the target's trace: " << from_target
              << "\nattack on the collaborator's trace: " << from_collab << '\n';
    check("collaborator", r.collaborator.log);
    check("target", r.target.log);
  }
  write_json(config.out_dir / "audit.json", out);
  return violations == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed domain adaptation with collaborator selection"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string model_path, candidate_csv, target_csv, bind = "127.0.0.1", connect;
  double wdist_target = 30.0;
  std::optional<double> adapt_target;
  std::optional<std::uint16_t> listen_port;
  std::vector<std::string> logs;

  auto* train = app.add_subcommand("train-source", "Train E and C on the labeled source domain");
  add_common(train, common);

  auto* wdist = app.add_subcommand("wdist", "Estimate W1 between a candidate and a target domain");
  add_common(wdist, common);
  wdist->add_option("--model", model_path, "Candidate model file (default: train the source)");
  wdist->add_option("--target-angle", wdist_target, "Rotation of the target domain");
  wdist->add_option("--candidate-csv", candidate_csv, "Candidate data instead of generated moons");
  wdist->add_option("--target-csv", target_csv, "Target data instead of generated moons");

  auto* ocs = app.add_subcommand("ocs", "Adapt along the arrival order, then rank collaborators for the last target");
  add_common(ocs, common);

  auto* adapt = app.add_subcommand("adapt", "Adapt one target from one collaborator");
  add_common(adapt, common);
  adapt->add_option("--model", model_path, "Collaborator model file (default: train the source)");
  adapt->add_option("--target-angle", adapt_target, "Rotation of the target (default: second angle)");
  auto* listen = adapt->add_option("--listen", listen_port, "Run only the target node, listening on PORT");
  adapt->add_option("--bind", bind, "Listen address");
  adapt->add_option("--connect", connect, "Run only the collaborator node, connecting to HOST:PORT")
      ->excludes(listen);

  auto* run = app.add_subcommand("run", "Full sequence: select, adapt and report for every target");
  add_common(run, common);

  auto* audit = app.add_subcommand("audit", "Privacy harness and frame-log exposure check");
  add_common(audit, common);
  audit->add_option("--log", logs, "Saved frame log stem (DIR/NAME); repeatable");

  auto* show = app.add_subcommand("show-config", "Print the effective config as JSON");
  add_common(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train_source(common);
    if (*wdist) return cmd_wdist(common, model_path, wdist_target, candidate_csv, target_csv);
    if (*ocs) return cmd_ocs(common);
    if (*adapt) return cmd_adapt(common, model_path, adapt_target, listen_port, bind, connect);
    if (*run) return cmd_run(common);
    if (*audit) return cmd_audit(common, logs);
    if (*show) {
      ExperimentConfig config;
      if (!common.config_path.empty()) config = experiment_config_from_json(read_json(common.config_path));
      if (common.seed) config.seed = *common.seed;
      std::cout << to_json(config).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
