// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dda/domains.hpp"
#include "dda/mlp.hpp"
#include "dda/wdist.hpp"

namespace dda {

/// L2 Lipschitz constant of softmax cross-entropy in the logits: the
/// gradient softmax - onehot has norm at most sqrt(2).
inline constexpr double kCrossEntropyLipschitz = std::numbers::sqrt2;

enum class ThetaCeMode { Analytic, Empirical };

struct Candidate {
  std::uint16_t domain_id = 0;
  double angle_deg = 0.0;
  Mlp extractor;
  Mlp classifier;
  /// Lipschitz bound of classifier o extractor.
  double theta = 0.0;
  double theta_ce = kCrossEntropyLipschitz;
  double eps_l1 = 0.0;
  /// Small labeled set used for eps_l1.
  DomainDataset validation;
  /// Unlabeled training data used for W1 estimation.
  DomainDataset unlabeled;
};

/// Fills theta, theta_ce and eps_l1 from the models and validation set.
Candidate make_candidate(std::uint16_t domain_id, double angle_deg, Mlp extractor,
                         Mlp classifier, DomainDataset validation, DomainDataset unlabeled,
                         ThetaCeMode mode = ThetaCeMode::Analytic);

/// Append-only list of candidates with unique ids.
class CandidateSet {
 public:
  void add(Candidate candidate);
  const std::vector<Candidate>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Candidate& at(std::uint16_t domain_id) const;
  bool contains(std::uint16_t domain_id) const;

 private:
  std::vector<Candidate> items_;
};

/// Mean L1 distance between softmax(C(E(x))) and the one-hot labels.
double candidate_error(const Mlp& extractor, const Mlp& classifier,
                       const DomainDataset& validation);

/// Largest |CE(z1) - CE(z2)| / ||z1 - z2|| over sampled same-label pairs of
/// logits on `data`.
double empirical_theta_ce(const Mlp& extractor, const Mlp& classifier, const DomainDataset& data,
                          std::uint64_t seed, std::size_t pairs = 2000);

/// theta_ce * (eps_l1 + 2 * theta * w1).
double collaboration_bound(double theta_ce, double eps_l1, double theta, double w1);
double collaboration_bound(const Candidate& candidate, double w1);

struct BoundEntry {
  std::uint16_t domain_id = 0;
  double eps_l1 = 0.0;
  double theta = 0.0;
  double theta_ce = 0.0;
  /// Raw estimate; the bound uses it clamped at zero.
  double w1 = 0.0;
  double bound = 0.0;
  bool feasible = true;
  std::string error;
};

struct BoundReport {
  std::uint16_t target_id = 0;
  std::vector<BoundEntry> entries;
  std::uint16_t chosen = 0;
  std::string tie_break;
};

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowest bound among feasible entries; ties go to the lowest domain id.
/// Fills report.chosen and report.tie_break.
std::uint16_t choose_min_bound(BoundReport& report);

/// Estimates W1 from every candidate to `target`, computes the bounds and
/// picks the argmin. A candidate whose estimate fails is marked infeasible.
BoundReport select_collaborator(const CandidateSet& candidates, const DomainDataset& target,
                                const W1Config& config,
                                TransportMode mode = TransportMode::Loopback);

}  // namespace dda
