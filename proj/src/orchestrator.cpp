// SPDX-License-Identifier: Apache-2.0
#include "dda/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/losses.hpp"
#include "dda/optimizer.hpp"
#include "dda/rng.hpp"
#include "dda/serialize.hpp"
#include "dda/spectral.hpp"

namespace dda {

std::string to_string(DomainFamily family) {
  return family == DomainFamily::Moons ? "moons" : "blobs";
}

DomainFamily domain_family_from_string(const std::string& name) {
  if (name == "moons") return DomainFamily::Moons;
  if (name == "blobs") return DomainFamily::Blobs;
  throw InputError("unknown domain family '" + name + "'");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::OCS: return "ocs";
    case PolicyKind::LabeledSource: return "labeled-source";
    case PolicyKind::Random: return "random";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "ocs") return PolicyKind::OCS;
  if (name == "labeled-source") return PolicyKind::LabeledSource;
  if (name == "random") return PolicyKind::Random;
  throw InputError("unknown selection policy '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (angles.size() < 2) throw InputError("need a source and at least one target angle");
  if (std::set<double>(angles.begin(), angles.end()).size() != angles.size()) {
    throw InputError("arrival order has repeated angles");
  }
  if (angles.size() > 65535) throw InputError("too many domains");
  if (samples_per_domain < 12) throw InputError("samples_per_domain too small");
  if (!(noise >= 0.0)) throw InputError("noise must be >= 0");
  if (arch.feature_dim == 0) throw InputError("feature_dim must be positive");
  if (source.steps == 0 || source.batch_size == 0 || !(source.learning_rate > 0.0)) {
    throw InputError("bad source training settings");
  }
  dils.validate();
  w1.validate();
}

DomainData make_domain(const ExperimentConfig& config, std::uint16_t domain_id,
                       double angle_deg) {
  const std::uint64_t seed = derive_seed(config.seed, "domain", domain_id);
  DomainDataset full = config.family == DomainFamily::Moons
                           ? make_rotated_moons(angle_deg, config.samples_per_domain,
                                                config.noise, seed, domain_id)
                           : make_rotated_blobs(angle_deg, config.samples_per_domain,
                                                config.noise, seed, domain_id);
  const Split s = split(full, config.split, derive_seed(seed, "split"));
  DomainData out{full, full.subset(s.train), full.subset(s.validation), full.subset(s.test)};
  return out;
}

TrainedModel train_source(const DomainDataset& train, const DomainDataset& held_out,
                          const ArchConfig& arch, const SourceTrainConfig& config,
                          std::uint64_t seed) {
  if (!train.labeled() || train.size() == 0) throw InputError("source training needs labels");
  std::vector<std::size_t> widths{train.dim()};
  widths.insert(widths.end(), arch.extractor_hidden.begin(), arch.extractor_hidden.end());
  widths.push_back(arch.feature_dim);
  Mlp extractor = Mlp::create(Role::FeatureExtractor, widths, Activation::LeakyReLU,
                              Activation::Identity, derive_seed(seed, "extractor"));
  std::vector<std::size_t> head{arch.feature_dim};
  head.insert(head.end(), arch.classifier_hidden.begin(), arch.classifier_hidden.end());
  head.push_back(train.num_classes());
  Mlp classifier = Mlp::create(Role::Classifier, head, Activation::LeakyReLU,
                               Activation::Identity, derive_seed(seed, "classifier"));
  OptimizerState opt_e = OptimizerState::adam(config.learning_rate);
  OptimizerState opt_c = OptimizerState::adam(config.learning_rate);
  BatchSampler sampler(train.size(), std::min(config.batch_size, train.size()),
                       derive_seed(seed, "source-batches"));
  std::optional<SpectralClipper> clip_e;
  std::optional<SpectralClipper> clip_c;
  if (config.spectral_clip > 0.0) {
    clip_e.emplace(config.spectral_clip);
    clip_c.emplace(config.spectral_clip);
  }
  std::vector<int> labels;
  for (std::size_t n = 0; n < config.steps; ++n) {
    const auto rows = sampler.indices(n);
    labels.clear();
    for (auto r : rows) labels.push_back((*train.labels)[r]);
    const ForwardPass fe = mlp_forward(extractor, gather_rows(train.features, rows));
    const ForwardPass fc = mlp_forward(classifier, fe.output());
    const LossOutput loss = classification_loss(fc.output(), labels);
    if (!std::isfinite(loss.loss)) throw NumericError("source training diverged");
    const BackwardResult bc = mlp_backward(classifier, fc, loss.grad);
    const BackwardResult be = mlp_backward(extractor, fe, bc.input_grad);
    opt_c.step(classifier, bc.params);
    opt_e.step(extractor, be.params);
    if (clip_e) {
      clip_e->apply(extractor);
      clip_c->apply(classifier);
    }
  }
  const double acc = held_out.size() > 0 ? evaluate(extractor, classifier, held_out) : 0.0;
  return {std::move(extractor), std::move(classifier), acc};
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double MetricsRecord::mean_accuracy() const {
  std::vector<double> acc;
  for (const auto& t : targets) {
    if (t.ok) acc.push_back(t.post_accuracy);
  }
  return mean_of(acc);
}

std::uint16_t choose_collaborator(const SelectionPolicy& policy, const CandidateSet& candidates,
                                  const DomainDataset& target, const W1Config& w1,
                                  TransportMode mode, std::size_t target_index,
                                  std::optional<BoundReport>* report) {
  if (candidates.empty()) throw SelectionError("candidate set is empty");
  switch (policy.kind) {
    case PolicyKind::LabeledSource:
      return candidates.items().front().domain_id;
    case PolicyKind::Random: {
      Rng rng(derive_seed(policy.seed, "random-policy", target_index));
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      return candidates.items()[pick(rng)].domain_id;
    }
    case PolicyKind::OCS: {
      BoundReport r = select_collaborator(candidates, target, w1, mode);
      const auto chosen = r.chosen;
      if (report != nullptr) *report = std::move(r);
      return chosen;
    }
  }
  throw InputError("unknown policy");
}

Sequence::Sequence(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  const DomainData source = make_domain(config_, 0, config_.angles[0]);
  TrainedModel model = train_source(source.train, source.test, config_.arch, config_.source,
                                    derive_seed(config_.seed, "source"));
  record_.source_accuracy = model.held_out_accuracy;
  candidates_.add(make_candidate(0, config_.angles[0], std::move(model.extractor),
                                 std::move(model.classifier), source.validation,
                                 source.train.unlabeled(), config_.theta_ce));
  record_.candidate_set_sizes.push_back(candidates_.size());
}

bool Sequence::done() const { return next_ >= config_.angles.size(); }

DomainData Sequence::next_target() const {
  if (done()) throw InputError("sequence has no targets left");
  return make_domain(config_, static_cast<std::uint16_t>(next_), config_.angles[next_]);
}

const TargetRecord& Sequence::step(const SelectionHook& hook) {
  if (done()) throw InputError("sequence has no targets left");
  const std::size_t i = next_++;
  const auto id = static_cast<std::uint16_t>(i);
  TargetRecord row;
  row.domain_id = id;
  row.angle_deg = config_.angles[i];
  const auto start = std::chrono::steady_clock::now();
  try {
    const DomainData target = make_domain(config_, id, config_.angles[i]);
    row.collaborator = choose_collaborator(config_.policy, candidates_, target.train, config_.w1,
                                           config_.transport, i, &row.bounds);
    if (hook) hook(candidates_, target, row.collaborator);
    const Candidate& collab = candidates_.at(row.collaborator);
    row.pre_accuracy = evaluate(collab.extractor, collab.classifier, target.test);

    DilsConfig dils = config_.dils;
    dils.seed = derive_seed(config_.dils.seed, "adapt", id);
    DilsResult result = run_dils(collab.extractor, collab.classifier, collab.unlabeled,
                                 target.train.unlabeled(), dils, config_.transport, &target.test);
    row.post_accuracy = result.metrics.accuracy.value_or(0.0);
    row.bytes_sent = result.target.counters.bytes_sent;
    row.bytes_received = result.target.counters.bytes_received;
    row.sync_events = result.metrics.sync_events;
    row.frames = std::move(result.target.log);

    Mlp classifier = collab.classifier;
    candidates_.add(make_candidate(id, config_.angles[i], std::move(result.target_extractor),
                                   std::move(classifier), target.validation,
                                   target.train.unlabeled(), config_.theta_ce));
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
    std::cerr << "target " << id << " (" << config_.angles[i] << " deg) skipped: " << e.what()
              << '\n';
  }
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  record_.targets.push_back(std::move(row));
  record_.candidate_set_sizes.push_back(candidates_.size());
  return record_.targets.back();
}

MetricsRecord run_sequence(const ExperimentConfig& config, const SelectionHook& hook) {
  Sequence sequence(config);
  while (!sequence.done()) sequence.step(hook);
  return sequence.record();
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void emit_report(const MetricsRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "bounds");

  auto metrics = open_out(dir / "metrics.csv");
  // Pre-adaptation accuracy applies the chosen collaborator's model to the
  // target test split unchanged.
  metrics << "domain_id,angle_deg,collaborator,pre_accuracy,post_accuracy,bytes_sent,"
             "bytes_received,sync_events,status\n";
  for (const auto& t : record.targets) {
    metrics << t.domain_id << ',' << fmt(t.angle_deg) << ',' << t.collaborator << ','
            << fmt(t.pre_accuracy) << ',' << fmt(t.post_accuracy) << ',' << t.bytes_sent << ','
            << t.bytes_received << ',' << t.sync_events << ',' << (t.ok ? "ok" : "failed")
            << '\n';
  }

  Json summary = {{"source_accuracy", record.source_accuracy},
                  {"mean_accuracy", record.mean_accuracy()},
                  {"candidate_set_sizes", record.candidate_set_sizes}};
  write_json(dir / "summary.json", summary);

  auto timing = open_out(dir / "timing.csv");
  timing << "domain_id,wall_seconds\n";
  for (const auto& t : record.targets) timing << t.domain_id << ',' << fmt(t.wall_seconds) << '\n';

  auto comm = open_out(dir / "comm.csv");
  comm << "domain_id,direction,msg_type,step,bytes\n";
  for (const auto& t : record.targets) {
    for (const auto& r : t.frames.records) {
      const SyncFrame f = decode_frame(r.bytes);
      comm << t.domain_id << ',' << (r.direction == Direction::Sent ? "sent" : "received") << ','
           << to_string(f.type) << ',' << f.step << ',' << r.bytes.size() << '\n';
    }
  }

  for (const auto& t : record.targets) {
    if (!t.bounds) continue;
    write_json(dir / "bounds" / (std::to_string(t.domain_id) + ".json"), to_json(*t.bounds));
  }
}

}  // namespace dda
