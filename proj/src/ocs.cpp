// SPDX-License-Identifier: Apache-2.0
#include "dda/ocs.hpp"

#include <algorithm>
#include <cmath>

#include "dda/errors.hpp"
#include "dda/losses.hpp"
#include "dda/rng.hpp"
#include "dda/spectral.hpp"

namespace dda {

Candidate make_candidate(std::uint16_t domain_id, double angle_deg, Mlp extractor,
                         Mlp classifier, DomainDataset validation, DomainDataset unlabeled,
                         ThetaCeMode mode) {
  const Mlp* chain[] = {&extractor, &classifier};
  const double theta = lipschitz_constant(chain);
  const double eps = candidate_error(extractor, classifier, validation);
  const double theta_ce = mode == ThetaCeMode::Analytic
                              ? kCrossEntropyLipschitz
                              : empirical_theta_ce(extractor, classifier, validation,
                                                   derive_seed(domain_id, "theta-ce"));
  return {domain_id,  angle_deg, std::move(extractor),  std::move(classifier),
          theta,      theta_ce,  eps,                   std::move(validation),
          std::move(unlabeled)};
}

void CandidateSet::add(Candidate candidate) {
  if (contains(candidate.domain_id)) {
    throw InputError("candidate " + std::to_string(candidate.domain_id) + " already present");
  }
  items_.push_back(std::move(candidate));
}

bool CandidateSet::contains(std::uint16_t domain_id) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const Candidate& c) { return c.domain_id == domain_id; });
}

const Candidate& CandidateSet::at(std::uint16_t domain_id) const {
  for (const auto& c : items_) {
    if (c.domain_id == domain_id) return c;
  }
  throw InputError("no candidate with id " + std::to_string(domain_id));
}

double candidate_error(const Mlp& extractor, const Mlp& classifier,
                       const DomainDataset& validation) {
  if (validation.size() == 0) throw InputError("validation set is empty");
  if (!validation.labeled()) throw InputError("validation set needs labels");
  const Tensor probs = softmax(mlp_predict(classifier, mlp_predict(extractor, validation.features)));
  return l1_error(probs, one_hot(*validation.labels, probs.cols()));
}

double empirical_theta_ce(const Mlp& extractor, const Mlp& classifier, const DomainDataset& data,
                          std::uint64_t seed, std::size_t pairs) {
  if (!data.labeled() || data.size() < 2) throw InputError("need at least two labeled rows");
  const Tensor logits = mlp_predict(classifier, mlp_predict(extractor, data.features));
  const auto& labels = *data.labels;
  auto ce = [&](std::size_t r, int y) {
    const auto row = logits.row(r);
    double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float v : row) z += std::exp(v - mx);
    return std::log(z) + mx - row[static_cast<std::size_t>(y)];
  };
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  double best = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    if (a == b) continue;
    // Same label so both losses are on the same coordinate function.
    const int y = labels[a];
    double dist2 = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double d = double(logits(a, c)) - logits(b, c);
      dist2 += d * d;
    }
    if (dist2 <= 1e-20) continue;
    best = std::max(best, std::abs(ce(a, y) - ce(b, y)) / std::sqrt(dist2));
  }
  return best > 0.0 ? best : kCrossEntropyLipschitz;
}

double collaboration_bound(double theta_ce, double eps_l1, double theta, double w1) {
  return theta_ce * (eps_l1 + 2.0 * theta * w1);
}

double collaboration_bound(const Candidate& candidate, double w1) {
  return collaboration_bound(candidate.theta_ce, candidate.eps_l1, candidate.theta, w1);
}

std::uint16_t choose_min_bound(BoundReport& report) {
  const BoundEntry* best = nullptr;
  for (const auto& e : report.entries) {
    if (!e.feasible) continue;
    if (best == nullptr || e.bound < best->bound ||
        (e.bound == best->bound && e.domain_id < best->domain_id)) {
      best = &e;
    }
  }
  if (best == nullptr) throw SelectionError("no feasible collaborator");
  const auto tied = std::count_if(report.entries.begin(), report.entries.end(),
                                  [&](const BoundEntry& e) {
                                    return e.feasible && e.bound == best->bound;
                                  });
  report.chosen = best->domain_id;
  report.tie_break = tied > 1 ? "equal bounds; lowest domain id chosen" : "";
  return report.chosen;
}

BoundReport select_collaborator(const CandidateSet& candidates, const DomainDataset& target,
                                const W1Config& config, TransportMode mode) {
  if (candidates.empty()) throw SelectionError("candidate set is empty");
  BoundReport report;
  report.target_id = target.domain_id;
  for (const auto& c : candidates.items()) {
    BoundEntry entry{c.domain_id, c.eps_l1, c.theta, c.theta_ce, 0.0, 0.0, true, {}};
    try {
      entry.w1 = estimate_w1(c.extractor, c.unlabeled, target.unlabeled(), config, mode).estimate.value;
      entry.bound = collaboration_bound(c, std::max(0.0, entry.w1));
    } catch (const std::exception& e) {
      entry.feasible = false;
      entry.error = e.what();
    }
    report.entries.push_back(std::move(entry));
  }
  choose_min_bound(report);
  return report;
}

}  // namespace dda
