// SPDX-License-Identifier: Apache-2.0
#include "dda/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {

float apply_activation(Activation act, float x) {
  switch (act) {
    case Activation::ReLU:
      return x > 0.0f ? x : 0.0f;
    case Activation::LeakyReLU:
      return x > 0.0f ? x : kLeakySlope * x;
    case Activation::Identity:
      break;
  }
  return x;
}

namespace {

// Derivative expressed through the post-activation value. Both rectifiers
// preserve sign, so y > 0 iff the pre-activation was > 0.
float activation_slope(Activation act, float y) {
  switch (act) {
    case Activation::ReLU:
      return y > 0.0f ? 1.0f : 0.0f;
    case Activation::LeakyReLU:
      return y > 0.0f ? 1.0f : kLeakySlope;
    case Activation::Identity:
      break;
  }
  return 1.0f;
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::ReLU:
      return "relu";
    case Activation::LeakyReLU:
      return "leaky_relu";
    case Activation::Identity:
      break;
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "leaky_relu") return Activation::LeakyReLU;
  if (name == "identity") return Activation::Identity;
  throw InputError("unknown activation '" + name + "'");
}

std::string to_string(Role role) {
  switch (role) {
    case Role::Classifier:
      return "classifier";
    case Role::Discriminator:
      return "discriminator";
    case Role::FeatureExtractor:
      break;
  }
  return "feature_extractor";
}

Role role_from_string(const std::string& name) {
  if (name == "feature_extractor") return Role::FeatureExtractor;
  if (name == "classifier") return Role::Classifier;
  if (name == "discriminator") return Role::Discriminator;
  throw InputError("unknown network role '" + name + "'");
}

Mlp::Mlp(Role role, std::vector<DenseLayer> layers)
    : role_(role), layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("an Mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.weights.rank() != 2 || layer.bias.rank() != 1 ||
        layer.bias.size() != layer.out() || layer.out() == 0 || layer.in() == 0) {
      throw ShapeError("layer " + std::to_string(l) + " has weights " +
                       layer.weights.shape_string() + " and bias " +
                       layer.bias.shape_string());
    }
    if (l > 0 && layer.in() != layers_[l - 1].out()) {
      throw ShapeError("layer " + std::to_string(l) + " expects input width " +
                       std::to_string(layer.in()) + " but previous layer emits " +
                       std::to_string(layers_[l - 1].out()));
    }
    if (!layer.weights.all_finite() || !layer.bias.all_finite()) {
      throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

Mlp Mlp::create(Role role, std::span<const std::size_t> widths, Activation hidden,
                Activation output, std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Tensor({out, in}), Tensor({out}),
                     l + 2 == widths.size() ? output : hidden};
    for (float& w : layer.weights.data()) w = static_cast<float>(dist(rng));
    layers.push_back(std::move(layer));
  }
  return Mlp(role, std::move(layers));
}

Mlp Mlp::identity(Role role, std::size_t dim) {
  DenseLayer layer{Tensor({dim, dim}), Tensor({dim}), Activation::Identity};
  for (std::size_t i = 0; i < dim; ++i) layer.weights(i, i) = 1.0f;
  return Mlp(role, {std::move(layer)});
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

std::vector<float> Mlp::flatten() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
    out.insert(out.end(), layer.bias.data().begin(), layer.bias.data().end());
  }
  return out;
}

void Mlp::load_flat(std::span<const float> params) {
  if (params.size() != parameter_count()) {
    throw ShapeError("expected " + std::to_string(parameter_count()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  if (!std::all_of(params.begin(), params.end(), [](float v) { return std::isfinite(v); })) {
    throw NumericError("non-finite parameter in flat load");
  }
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    std::copy_n(params.begin() + offset, layer.weights.size(), layer.weights.data().begin());
    offset += layer.weights.size();
    std::copy_n(params.begin() + offset, layer.bias.size(), layer.bias.data().begin());
    offset += layer.bias.size();
  }
}

std::vector<float> describe_architecture(const Mlp& net) {
  std::vector<float> out{static_cast<float>(net.layers().size()),
                         static_cast<float>(net.input_dim())};
  for (const auto& layer : net.layers()) {
    out.push_back(static_cast<float>(layer.out()));
    out.push_back(static_cast<float>(static_cast<int>(layer.activation)));
  }
  return out;
}

Mlp architecture_shell(Role role, std::span<const float> description) {
  if (description.size() < 2) throw InputError("architecture description too short");
  const auto layers = static_cast<std::size_t>(description[0]);
  if (layers == 0 || description.size() != 2 + 2 * layers) {
    throw InputError("architecture description has the wrong length");
  }
  std::vector<DenseLayer> out;
  auto in = static_cast<std::size_t>(description[1]);
  for (std::size_t l = 0; l < layers; ++l) {
    const auto width = static_cast<std::size_t>(description[2 + 2 * l]);
    const auto code = static_cast<int>(description[3 + 2 * l]);
    if (code < 0 || code > static_cast<int>(Activation::LeakyReLU)) {
      throw InputError("unknown activation code " + std::to_string(code));
    }
    out.push_back({Tensor({width, in}), Tensor({width}), static_cast<Activation>(code)});
    in = width;
  }
  return Mlp(role, std::move(out));
}

bool bitwise_equal(const Mlp& a, const Mlp& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    const auto& la = a.layers()[l];
    const auto& lb = b.layers()[l];
    if (la.activation != lb.activation || !bitwise_equal(la.weights, lb.weights) ||
        !bitwise_equal(la.bias, lb.bias)) {
      return false;
    }
  }
  return true;
}

ForwardPass mlp_forward(const Mlp& net, const Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != net.input_dim()) {
    throw ShapeError("batch " + batch.shape_string() + " does not fit network input width " +
                     std::to_string(net.input_dim()));
  }
  ForwardPass pass{batch, {}};
  pass.outputs.reserve(net.layers().size());
  const Tensor* current = &pass.input;
  const std::size_t rows = batch.rows();
  std::vector<float> wt;
  std::vector<double> acc;
  for (const DenseLayer& layer : net.layers()) {
    const std::size_t in = layer.in();
    const std::size_t n_out = layer.out();
    Tensor out({rows, n_out});
    // Transposed weights keep the per-output sums in the inner loop.
    wt.resize(in * n_out);
    const float* wp = layer.weights.data().data();
    for (std::size_t o = 0; o < n_out; ++o) {
      for (std::size_t i = 0; i < in; ++i) wt[i * n_out + o] = wp[o * in + i];
    }
    acc.resize(n_out);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* x = current->row(r).data();
      float* y = out.row(r).data();
      for (std::size_t o = 0; o < n_out; ++o) acc[o] = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const float* w = wt.data() + i * n_out;
        for (std::size_t o = 0; o < n_out; ++o) acc[o] += static_cast<double>(w[o]) * xi;
      }
      for (std::size_t o = 0; o < n_out; ++o) {
        y[o] = apply_activation(layer.activation, static_cast<float>(acc[o]));
      }
    }
    if (!out.all_finite()) throw NumericError("non-finite activation in forward pass");
    pass.outputs.push_back(std::move(out));
    current = &pass.outputs.back();
  }
  return pass;
}

Tensor mlp_predict(const Mlp& net, const Tensor& batch) {
  return std::move(mlp_forward(net, batch).outputs.back());
}

GradientSet::GradientSet(std::vector<LayerGradient> entries) : entries_(std::move(entries)) {}

GradientSet GradientSet::zeros_like(const Mlp& net) {
  std::vector<LayerGradient> entries;
  entries.reserve(net.layers().size());
  for (const auto& layer : net.layers()) {
    entries.push_back({Tensor(layer.weights.shape()), Tensor(layer.bias.shape())});
  }
  return GradientSet(std::move(entries));
}

std::size_t GradientSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.weights.size() + e.bias.size();
  return n;
}

std::vector<float> GradientSet::flatten() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (const auto& e : entries_) {
    out.insert(out.end(), e.weights.data().begin(), e.weights.data().end());
    out.insert(out.end(), e.bias.data().begin(), e.bias.data().end());
  }
  return out;
}

GradientSet GradientSet::from_flat(const Mlp& net, std::span<const float> values) {
  GradientSet g = zeros_like(net);
  if (values.size() != g.parameter_count()) {
    throw ShapeError("gradient payload has " + std::to_string(values.size()) +
                     " values, network has " + std::to_string(g.parameter_count()));
  }
  std::size_t offset = 0;
  for (auto& e : g.entries_) {
    std::copy_n(values.begin() + offset, e.weights.size(), e.weights.data().begin());
    offset += e.weights.size();
    std::copy_n(values.begin() + offset, e.bias.size(), e.bias.data().begin());
    offset += e.bias.size();
  }
  return g;
}

namespace {

void check_same_shape(const GradientSet& a, const GradientSet& b) {
  if (a.entries().size() != b.entries().size()) {
    throw ShapeError("gradient sets have different layer counts");
  }
  for (std::size_t l = 0; l < a.entries().size(); ++l) {
    if (a.entries()[l].weights.shape() != b.entries()[l].weights.shape() ||
        a.entries()[l].bias.shape() != b.entries()[l].bias.shape()) {
      throw ShapeError("gradient sets differ in layer " + std::to_string(l));
    }
  }
}

template <typename Op>
void zip_apply(GradientSet& a, const GradientSet& b, Op op) {
  check_same_shape(a, b);
  for (std::size_t l = 0; l < a.entries().size(); ++l) {
    auto& ea = a.entries()[l];
    const auto& eb = b.entries()[l];
    auto wa = ea.weights.data();
    auto wb = eb.weights.data();
    for (std::size_t i = 0; i < wa.size(); ++i) wa[i] = op(wa[i], wb[i]);
    auto ba = ea.bias.data();
    auto bb = eb.bias.data();
    for (std::size_t i = 0; i < ba.size(); ++i) ba[i] = op(ba[i], bb[i]);
  }
}

}  // namespace

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  zip_apply(*this, other, [](float x, float y) { return x + y; });
  return *this;
}

GradientSet& GradientSet::operator-=(const GradientSet& other) {
  zip_apply(*this, other, [](float x, float y) { return x - y; });
  return *this;
}

GradientSet& GradientSet::operator*=(float factor) {
  for (auto& e : entries_) {
    for (float& v : e.weights.data()) v *= factor;
    for (float& v : e.bias.data()) v *= factor;
  }
  return *this;
}

void GradientSet::set_zero() {
  for (auto& e : entries_) {
    e.weights.fill(0.0f);
    e.bias.fill(0.0f);
  }
}

bool GradientSet::is_zero() const {
  for (const auto& e : entries_) {
    for (float v : e.weights.data()) {
      if (v != 0.0f) return false;
    }
    for (float v : e.bias.data()) {
      if (v != 0.0f) return false;
    }
  }
  return true;
}

bool GradientSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.weights.all_finite() || !e.bias.all_finite()) return false;
  }
  return true;
}

bool GradientSet::matches(const Mlp& net) const {
  if (entries_.size() != net.layers().size()) return false;
  for (std::size_t l = 0; l < entries_.size(); ++l) {
    if (entries_[l].weights.shape() != net.layers()[l].weights.shape() ||
        entries_[l].bias.shape() != net.layers()[l].bias.shape()) {
      return false;
    }
  }
  return true;
}

bool bitwise_equal(const GradientSet& a, const GradientSet& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t l = 0; l < a.entries().size(); ++l) {
    if (!bitwise_equal(a.entries()[l].weights, b.entries()[l].weights) ||
        !bitwise_equal(a.entries()[l].bias, b.entries()[l].bias)) {
      return false;
    }
  }
  return true;
}

BackwardResult mlp_backward(const Mlp& net, const ForwardPass& pass,
                            const Tensor& output_grad) {
  const auto& layers = net.layers();
  const std::size_t rows = pass.input.rows();
  bool consistent = pass.outputs.size() == layers.size() && pass.input.rank() == 2 &&
                    pass.input.cols() == net.input_dim();
  for (std::size_t l = 0; consistent && l < layers.size(); ++l) {
    consistent = pass.outputs[l].rank() == 2 && pass.outputs[l].rows() == rows &&
                 pass.outputs[l].cols() == layers[l].out();
  }
  if (!consistent) throw ShapeError("forward pass does not belong to this network");
  if (output_grad.rank() != 2 || output_grad.rows() != rows ||
      output_grad.cols() != net.output_dim()) {
    throw ShapeError("output gradient " + output_grad.shape_string() +
                     " does not match network output");
  }

  GradientSet grads = GradientSet::zeros_like(net);
  // delta holds dLoss/d(post-activation) of the current layer on entry and
  // is converted in place to dLoss/d(pre-activation).
  Tensor delta = output_grad;
  std::vector<double> bias_acc;
  std::vector<double> weight_acc;
  std::vector<double> input_acc;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const Tensor& y = pass.outputs[l];
    const Tensor& x = l == 0 ? pass.input : pass.outputs[l - 1];
    const std::size_t in = layer.in();
    const std::size_t out = layer.out();
    if (layer.activation != Activation::Identity) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        delta[i] *= activation_slope(layer.activation, y[i]);
      }
    }
    LayerGradient& g = grads.entries()[l];
    const float* dp = delta.data().data();
    const float* xp = x.data().data();
    bias_acc.assign(out, 0.0);
    weight_acc.assign(out * in, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* d = dp + r * out;
      const float* xr = xp + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        bias_acc[o] += d[o];
        const double dro = d[o];
        double* wa = weight_acc.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) wa[i] += dro * xr[i];
      }
    }
    for (std::size_t o = 0; o < out; ++o) g.bias[o] = static_cast<float>(bias_acc[o]);
    float* gw = g.weights.data().data();
    for (std::size_t k = 0; k < out * in; ++k) gw[k] = static_cast<float>(weight_acc[k]);
    Tensor prev({rows, in});
    const float* wp = layer.weights.data().data();
    input_acc.resize(in);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* d = dp + r * out;
      std::fill(input_acc.begin(), input_acc.end(), 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double dro = d[o];
        const float* w = wp + o * in;
        for (std::size_t i = 0; i < in; ++i) input_acc[i] += dro * w[i];
      }
      float* p = prev.row(r).data();
      for (std::size_t i = 0; i < in; ++i) p[i] = static_cast<float>(input_acc[i]);
    }
    delta = std::move(prev);
  }
  if (!grads.all_finite() || !delta.all_finite()) {
    throw NumericError("non-finite gradient in backward pass");
  }
  return {std::move(grads), std::move(delta)};
}

}  // namespace dda
