// SPDX-License-Identifier: Apache-2.0
#include "dda/audit.hpp"

#include <cmath>
#include <numbers>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {

std::string to_string(MissingKnowledge missing) {
  return missing == MissingKnowledge::Weights ? "weights" : "extractor_gradients";
}

std::optional<MissingKnowledge> missing_knowledge(const AttackSetup& setup) {
  if (setup.chain.empty()) return MissingKnowledge::Weights;
  for (const auto& seg : setup.chain) {
    if (!seg.weights) return MissingKnowledge::Weights;
  }
  for (const auto& seg : setup.chain) {
    if (!seg.gradients) return MissingKnowledge::ExtractorGradients;
  }
  return std::nullopt;
}

namespace {

struct DLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // [out x in]
  std::vector<double> b;
  Activation act = Activation::Identity;
};

std::vector<DLayer> to_double(std::span<const Mlp* const> chain) {
  std::vector<DLayer> out;
  for (const Mlp* net : chain) {
    for (const auto& l : net->layers()) {
      out.push_back({l.in(), l.out(), {l.weights.data().begin(), l.weights.data().end()},
                     {l.bias.data().begin(), l.bias.data().end()}, l.activation});
    }
  }
  return out;
}

double act_fwd(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::LeakyReLU: return z > 0.0 ? z : kLeakySlope * z;
  }
  return z;
}

double act_slope(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyReLU: return z > 0.0 ? 1.0 : kLeakySlope;
  }
  return 1.0;
}

// Flat parameter gradient of softmax cross-entropy against the soft label
// `target`, for a single input.
std::vector<double> flat_gradient(const std::vector<DLayer>& layers, const std::vector<double>& x,
                                  const std::vector<double>& target) {
  std::vector<std::vector<double>> acts{x};
  std::vector<std::vector<double>> pre;
  for (const auto& l : layers) {
    std::vector<double> z(l.out), a(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = l.b[o];
      for (std::size_t i = 0; i < l.in; ++i) s += l.w[o * l.in + i] * acts.back()[i];
      z[o] = s;
      a[o] = act_fwd(l.act, s);
    }
    pre.push_back(std::move(z));
    acts.push_back(std::move(a));
  }
  const auto& logits = acts.back();
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double zsum = 0.0;
  for (double v : logits) zsum += std::exp(v - mx);
  std::vector<double> delta(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    delta[k] = std::exp(logits[k] - mx) / zsum - target[k];
  }

  std::vector<std::vector<double>> per_layer(layers.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    for (std::size_t o = 0; o < l.out; ++o) delta[o] *= act_slope(l.act, pre[li][o]);
    auto& g = per_layer[li];
    g.resize(l.out * l.in + l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      for (std::size_t i = 0; i < l.in; ++i) g[o * l.in + i] = delta[o] * acts[li][i];
      g[l.out * l.in + o] = delta[o];
    }
    std::vector<double> prev(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      for (std::size_t i = 0; i < l.in; ++i) prev[i] += l.w[o * l.in + i] * delta[o];
    }
    delta = std::move(prev);
  }
  std::vector<double> flat;
  for (auto& g : per_layer) flat.insert(flat.end(), g.begin(), g.end());
  return flat;
}

std::vector<double> softmax_of(std::span<const double> z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += out[k] = std::exp(z[k] - mx);
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

GradientSet sample_gradient(const Mlp& net, const std::vector<double>& x, int label) {
  if (x.size() != net.input_dim()) throw ShapeError("sample width does not match the network");
  if (label < 0 || static_cast<std::size_t>(label) >= net.output_dim()) {
    throw InputError("label out of range");
  }
  const Mlp* chain[] = {&net};
  std::vector<double> target(net.output_dim(), 0.0);
  target[static_cast<std::size_t>(label)] = 1.0;
  const auto flat = flat_gradient(to_double(chain), x, target);
  return GradientSet::from_flat(net, std::vector<float>(flat.begin(), flat.end()));
}

AttackSetup full_knowledge_setup(const Mlp& net, const std::vector<double>& x, int label) {
  AttackSetup setup;
  setup.chain.push_back({"network", net, sample_gradient(net, x, label)});
  setup.truth = x;
  return setup;
}

AttackOutcome gradient_matching_attack(const AttackSetup& setup) {
  if (auto missing = missing_knowledge(setup)) return *missing;
  std::vector<const Mlp*> nets;
  std::vector<double> observed;
  for (const auto& seg : setup.chain) {
    nets.push_back(&*seg.weights);
    if (!seg.gradients->matches(*seg.weights)) {
      throw ShapeError("observed gradients do not match segment '" + seg.name + "'");
    }
    for (float v : seg.gradients->flatten()) observed.push_back(v);
  }
  const auto layers = to_double(nets);
  const std::size_t in_dim = layers.front().in;
  const std::size_t classes = layers.back().out;

  // Dummy variables: input followed by label logits.
  std::vector<double> v(in_dim + classes, 0.0);
  Rng rng(derive_seed(setup.seed, "attack-init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < in_dim; ++i) v[i] = normal(rng);

  auto matching = [&](const std::vector<double>& vars) {
    const std::vector<double> x(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(in_dim));
    const auto target = softmax_of(std::span(vars).subspan(in_dim));
    const auto g = flat_gradient(layers, x, target);
    double d = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) d += (g[i] - observed[i]) * (g[i] - observed[i]);
    return d;
  };

  AttackResult result;
  result.loss_trace.reserve(setup.iterations);
  constexpr double h = 1e-6;
  std::vector<double> grad(v.size());
  for (std::size_t t = 0; t < setup.iterations; ++t) {
    result.loss_trace.push_back(matching(v));
    for (std::size_t k = 0; k < v.size(); ++k) {
      auto plus = v;
      auto minus = v;
      plus[k] += h;
      minus[k] -= h;
      grad[k] = (matching(plus) - matching(minus)) / (2.0 * h);
    }
    const double lr = 0.5 * setup.learning_rate *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                                      static_cast<double>(setup.iterations)));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * grad[k];
  }
  result.reconstruction.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(in_dim));
  result.label_logits.assign(v.begin() + static_cast<std::ptrdiff_t>(in_dim), v.end());
  if (setup.truth) {
    if (setup.truth->size() != in_dim) throw ShapeError("truth has the wrong width");
    double mse = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double d = result.reconstruction[i] - (*setup.truth)[i];
      mse += d * d;
    }
    result.mse = mse / static_cast<double>(in_dim);
  }
  return result;
}

namespace {

std::optional<std::vector<float>> last_payload(const FrameLog& log, MsgType type,
                                               std::uint16_t sender) {
  std::optional<std::vector<float>> out;
  for (const auto& r : log.records) {
    const SyncFrame f = decode_frame(r.bytes);
    if (f.type == type && f.domain_id == sender) out = f.reals();
  }
  return out;
}

}  // namespace

AttackSetup setup_from_target_trace(const FrameLog& log, const Mlp& discriminator) {
  AttackSetup setup;
  // The target never ships its extractor, so its weights stay unknown.
  setup.chain.push_back({"target extractor", std::nullopt, std::nullopt});
  ObservedSegment disc{"discriminator", discriminator, std::nullopt};
  if (auto g = last_payload(log, MsgType::DiscGradBuffer, log.target_domain)) {
    disc.gradients = GradientSet::from_flat(discriminator, *g);
  }
  setup.chain.push_back(std::move(disc));
  return setup;
}

AttackSetup setup_from_collaborator_trace(const FrameLog& log, const Mlp& extractor_shape,
                                          const Mlp& discriminator) {
  AttackSetup setup;
  ObservedSegment ext{"collaborator extractor", std::nullopt, std::nullopt};
  if (auto w = last_payload(log, MsgType::ModelInit, log.collaborator_domain)) {
    Mlp known = extractor_shape;
    known.load_flat(*w);
    ext.weights = std::move(known);
  }
  setup.chain.push_back(std::move(ext));
  ObservedSegment disc{"discriminator", discriminator, std::nullopt};
  if (auto g = last_payload(log, MsgType::DiscGradBuffer, log.collaborator_domain)) {
    disc.gradients = GradientSet::from_flat(discriminator, *g);
  }
  setup.chain.push_back(std::move(disc));
  return setup;
}

ExposureReport trace_exposure_check(const FrameLog& log) {
  ExposureReport report;
  report.frames = log.records.size();
  if (log.records.empty()) {
    report.warnings.push_back("empty frame log");
    return report;
  }
  const std::size_t extractor_bytes = 4 * log.extractor_params;
  std::size_t model_inits = 0;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const std::string where = "frame " + std::to_string(i);
    SyncFrame f;
    try {
      f = decode_frame(log.records[i].bytes);
    } catch (const DecodeError& e) {
      report.violations.push_back(where + ": undecodable (" + e.what() + ")");
      continue;
    }
    switch (f.type) {
      case MsgType::Hello:
      case MsgType::DiscGradBuffer:
      case MsgType::W1Stats:
      case MsgType::Bye:
        break;
      case MsgType::ModelInit:
        ++model_inits;
        if (f.domain_id != log.collaborator_domain) {
          report.violations.push_back(where + ": ModelInit sent by domain " +
                                      std::to_string(f.domain_id) + ", not the collaborator");
        }
        if (f.payload.size() != extractor_bytes) {
          report.violations.push_back(where + ": ModelInit payload is " +
                                      std::to_string(f.payload.size()) +
                                      " bytes, expected the extractor's " +
                                      std::to_string(extractor_bytes));
        }
        continue;
    }
    if (extractor_bytes > 0 && f.payload.size() == extractor_bytes) {
      report.violations.push_back(where + ": " + to_string(f.type) +
                                  " payload has the size of an extractor gradient");
    }
  }
  if (model_inits > 1) {
    report.violations.push_back(std::to_string(model_inits) + " ModelInit frames in one run");
  }
  return report;
}

}  // namespace dda
