// SPDX-License-Identifier: Apache-2.0
#include "dda/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {
namespace {

// Numerically stable log(1 + exp(-|z|)) based BCE-with-logits.
double bce_with_logits(double z, double label) {
  return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_nonempty(const Tensor& t, const char* what) {
  if (t.empty()) throw InputError(std::string(what) + " batch is empty");
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::GRL:
      return "grl";
    case LossKind::WDA:
      return "wda";
    case LossKind::ADDA:
      break;
  }
  return "adda";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "adda") return LossKind::ADDA;
  if (name == "grl") return LossKind::GRL;
  if (name == "wda") return LossKind::WDA;
  throw InputError("unknown loss variant '" + name + "'");
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [batch x classes]");
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (float v : z) total += std::exp(v - zmax);
    auto p = out.row(r);
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = static_cast<float>(std::exp(z[c] - zmax) / total);
    }
  }
  return out;
}

LossOutput classification_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw ShapeError("logits " + logits.shape_string() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  require_nonempty(logits, "classification");
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  LossOutput out{0.0, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    auto z = logits.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (float v : z) sum += std::exp(v - zmax);
    const double log_norm = zmax + std::log(sum);
    total += log_norm - z[y];
    auto g = out.grad.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(z[c] - log_norm);
      g[c] = static_cast<float>((p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) /
                                static_cast<double>(n));
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

LossOutput side_discriminator_loss(const LossVariant& variant, const Tensor& d,
                                   DomainSide side) {
  require_nonempty(d, "discriminator");
  const double n = static_cast<double>(d.size());
  LossOutput out{0.0, Tensor(d.shape())};
  if (variant.kind == LossKind::WDA) {
    const double sign = side == DomainSide::Source ? -1.0 : 1.0;
    double sum = 0.0;
    for (float v : d.data()) sum += v;
    out.loss = sign * sum / n;
    out.grad.fill(static_cast<float>(sign / n));
    return out;
  }
  const double label = side == DomainSide::Source ? 1.0 : 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += bce_with_logits(d[i], label);
    out.grad[i] = static_cast<float>((sigmoid(d[i]) - label) / n);
  }
  out.loss = total / n;
  return out;
}

PairLossOutput discriminator_loss(const LossVariant& variant, const Tensor& d_src,
                                  const Tensor& d_tgt) {
  LossOutput s = side_discriminator_loss(variant, d_src, DomainSide::Source);
  LossOutput t = side_discriminator_loss(variant, d_tgt, DomainSide::Target);
  if (variant.kind == LossKind::WDA) {
    return {s.loss + t.loss, std::move(s.grad), std::move(t.grad)};
  }
  for (float& g : s.grad.data()) g *= 0.5f;
  for (float& g : t.grad.data()) g *= 0.5f;
  return {0.5 * (s.loss + t.loss), std::move(s.grad), std::move(t.grad)};
}

LossOutput target_mapping_loss(const LossVariant& variant, const Tensor& d_tgt) {
  require_nonempty(d_tgt, "target");
  switch (variant.kind) {
    case LossKind::ADDA:
      // Inverted label: target features should look like source (label 1).
      return side_discriminator_loss(variant, d_tgt, DomainSide::Source);
    case LossKind::GRL: {
      LossOutput t = side_discriminator_loss(variant, d_tgt, DomainSide::Target);
      for (float& g : t.grad.data()) g = -(g * 0.5f);
      t.loss = -(0.5 * t.loss);
      return t;
    }
    case LossKind::WDA: {
      LossOutput t = side_discriminator_loss(variant, d_tgt, DomainSide::Target);
      for (float& g : t.grad.data()) g = -g;
      t.loss = -t.loss;
      return t;
    }
  }
  throw InputError("unknown loss variant");
}

PairLossOutput mapping_loss(const LossVariant& variant, const Tensor& d_tgt,
                            const Tensor* d_src) {
  if (variant.kind == LossKind::GRL) {
    if (d_src == nullptr) throw InputError("GRL mapping loss needs source discriminator outputs");
    PairLossOutput dis = discriminator_loss(variant, *d_src, d_tgt);
    dis.loss = -dis.loss;
    for (float& g : dis.grad_src.data()) g = -g;
    for (float& g : dis.grad_tgt.data()) g = -g;
    return dis;
  }
  LossOutput t = target_mapping_loss(variant, d_tgt);
  Tensor zero_src = d_src != nullptr ? Tensor(d_src->shape()) : Tensor();
  return {t.loss, std::move(zero_src), std::move(t.grad)};
}

PenaltyOutput gradient_penalty(const Mlp& critic, const Tensor& batch, double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InputError("gradient-penalty weight must be finite and >= 0");
  }
  if (critic.output_dim() != 1) throw ShapeError("gradient penalty needs a scalar critic");
  require_nonempty(batch, "penalty");
  const std::size_t n = batch.rows();
  const std::size_t dim = batch.cols();

  ForwardPass pass = mlp_forward(critic, batch);
  BackwardResult back = mlp_backward(critic, pass, Tensor({n, 1}, 1.0f));

  PenaltyOutput out{0.0, GradientSet::zeros_like(critic), std::vector<double>(n),
                    std::move(pass.outputs.back()), std::move(back.params)};
  // Rows [0, n) hold x + h*u and rows [n, 2n) hold x - h*u.
  Tensor shifted({2 * n, dim});
  std::copy(batch.data().begin(), batch.data().end(), shifted.data().begin());
  std::copy(batch.data().begin(), batch.data().end(), shifted.data().begin() + n * dim);
  Tensor shifted_grad({2 * n, 1});
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto g = back.input_grad.row(r);
    double sq = 0.0;
    for (float v : g) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    out.input_grad_norms[r] = norm;
    total += (norm - 1.0) * (norm - 1.0);
    if (norm == 0.0) continue;  // direction undefined; no gradient signal
    auto xp = shifted.row(r);
    auto xm = shifted.row(n + r);
    for (std::size_t c = 0; c < dim; ++c) {
      const float step = static_cast<float>(kPenaltyStep * g[c] / norm);
      xp[c] += step;
      xm[c] -= step;
    }
    const auto scale = static_cast<float>(gamma * 2.0 * (norm - 1.0) /
                                          (static_cast<double>(n) * 2.0 * kPenaltyStep));
    shifted_grad(r, 0) = scale;
    shifted_grad(n + r, 0) = -scale;
  }
  out.loss = gamma * total / static_cast<double>(n);
  if (gamma == 0.0) return out;

  out.grads = mlp_backward(critic, mlp_forward(critic, shifted), shifted_grad).params;
  return out;
}

Tensor interpolate_rows(const Tensor& a, const Tensor& b, std::uint64_t seed) {
  if (a.shape() != b.shape() || a.rank() != 2) throw ShapeError("interpolate_rows shape mismatch");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor out(a.shape());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double alpha = unit(rng);
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out(r, c) = static_cast<float>(alpha * a(r, c) + (1.0 - alpha) * b(r, c));
    }
  }
  return out;
}

double l1_error(const Tensor& probs, const Tensor& onehot) {
  if (probs.shape() != onehot.shape() || probs.rank() != 2) {
    throw ShapeError("l1_error: probs " + probs.shape_string() + " vs one-hot " +
                     onehot.shape_string());
  }
  require_nonempty(probs, "l1_error");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double row_sum = 0.0;
    double dist = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      row_sum += probs(r, c);
      dist += std::abs(static_cast<double>(probs(r, c)) - onehot(r, c));
    }
    if (std::abs(row_sum - 1.0) > 1e-5) {
      throw InputError("probability row " + std::to_string(r) + " sums to " +
                       std::to_string(row_sum));
    }
    total += dist;
  }
  return total / static_cast<double>(probs.rows());
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor out({labels.size(), num_classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes) {
      throw InputError("label outside class range");
    }
    out(r, static_cast<std::size_t>(labels[r])) = 1.0f;
  }
  return out;
}

}  // namespace dda
