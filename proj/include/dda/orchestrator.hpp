// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dda/dils.hpp"
#include "dda/domains.hpp"
#include "dda/ocs.hpp"
#include "dda/transport.hpp"
#include "dda/wdist.hpp"

namespace dda {

enum class DomainFamily { Moons, Blobs };
std::string to_string(DomainFamily family);
DomainFamily domain_family_from_string(const std::string& name);

enum class PolicyKind { OCS, LabeledSource, Random };
std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct SelectionPolicy {
  PolicyKind kind = PolicyKind::OCS;
  /// Only used by Random.
  std::uint64_t seed = 0;
};

struct ArchConfig {
  /// Empty: the extractor is a single linear map into feature space.
  std::vector<std::size_t> extractor_hidden = {};
  std::size_t feature_dim = 8;
  std::vector<std::size_t> classifier_hidden = {32, 32};
};

struct SourceTrainConfig {
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  /// Per-layer spectral cap during training; 0 disables it.
  double spectral_clip = 3.0;
};

struct ExperimentConfig {
  DomainFamily family = DomainFamily::Moons;
  /// Arrival order; the first entry is the labeled source.
  std::vector<double> angles = {0.0, 30.0, 60.0, 90.0, 120.0};
  std::size_t samples_per_domain = 600;
  double noise = 0.1;
  /// train / validation / test fractions.
  std::array<double, 3> split = {0.7, 0.1, 0.2};
  SelectionPolicy policy;
  DilsConfig dils;
  W1Config w1;
  SourceTrainConfig source;
  ArchConfig arch;
  ThetaCeMode theta_ce = ThetaCeMode::Analytic;
  std::filesystem::path out_dir = "out";
  TransportMode transport = TransportMode::Loopback;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One domain of the family with its splits. Domain id = position in the
/// arrival order.
struct DomainData {
  DomainDataset full;
  DomainDataset train;
  DomainDataset validation;
  DomainDataset test;
};

DomainData make_domain(const ExperimentConfig& config, std::uint16_t domain_id, double angle_deg);

struct TrainedModel {
  Mlp extractor;
  Mlp classifier;
  double held_out_accuracy = 0.0;
};

/// Supervised training of E and C with Adam on the classification loss;
/// spectral projection after each update when enabled. `held_out` is only
/// used for the reported accuracy.
TrainedModel train_source(const DomainDataset& train, const DomainDataset& held_out,
                          const ArchConfig& arch, const SourceTrainConfig& config,
                          std::uint64_t seed);

struct TargetRecord {
  std::uint16_t domain_id = 0;
  double angle_deg = 0.0;
  std::uint16_t collaborator = 0;
  double pre_accuracy = 0.0;
  double post_accuracy = 0.0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t sync_events = 0;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
  std::optional<BoundReport> bounds;
  /// Frames seen by the target node, for comm.csv.
  FrameLog frames;
};

struct MetricsRecord {
  double source_accuracy = 0.0;
  std::vector<TargetRecord> targets;
  /// Candidate-set size after each target (failed targets do not grow it).
  std::vector<std::size_t> candidate_set_sizes;

  /// Mean post-adaptation accuracy over the targets that completed.
  double mean_accuracy() const;
};

double mean_of(std::span<const double> values);

/// Collaborator choice for the next target under `policy`. `target_index`
/// seeds the Random policy.
std::uint16_t choose_collaborator(const SelectionPolicy& policy, const CandidateSet& candidates,
                                  const DomainDataset& target, const W1Config& w1,
                                  TransportMode mode, std::size_t target_index,
                                  std::optional<BoundReport>* report = nullptr);

/// Called once per target after selection, before adaptation.
using SelectionHook = std::function<void(const CandidateSet& candidates,
                                         const DomainData& target, std::uint16_t chosen)>;

/// Sequential arrival, one target at a time: select, adapt, evaluate, grow
/// the candidate set. Construction trains the source model.
class Sequence {
 public:
  explicit Sequence(ExperimentConfig config);

  bool done() const;
  /// Domain that the next step() will adapt to.
  DomainData next_target() const;
  /// Processes the next target. A target that fails is logged and skipped.
  const TargetRecord& step(const SelectionHook& hook = {});

  const ExperimentConfig& config() const { return config_; }
  const CandidateSet& candidates() const { return candidates_; }
  const MetricsRecord& record() const { return record_; }

 private:
  ExperimentConfig config_;
  CandidateSet candidates_;
  MetricsRecord record_;
  std::size_t next_ = 1;
};

/// Runs a Sequence to the end.
MetricsRecord run_sequence(const ExperimentConfig& config, const SelectionHook& hook = {});

/// metrics.csv (one row per target), summary.json, timing.csv, comm.csv and
/// bounds/<target>.json under `dir`.
void emit_report(const MetricsRecord& record, const std::filesystem::path& dir);

}  // namespace dda
