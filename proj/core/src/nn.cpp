#include "redus/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "redus/errors.hpp"

namespace redus::nn {

namespace {

bool finite_span(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// Four partial sums let the compiler vectorize; the order is fixed, so
// results stay reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void check_trace_shape(const MLPModel& model, const ForwardTrace& trace) {
  const std::size_t depth = model.layers.size();
  if (trace.inputs.size() != depth || trace.pre_activations.size() != depth ||
      trace.masks.size() != depth || trace.outputs.size() != depth ||
      trace.probabilities.size() != model.output_width()) {
    throw std::logic_error("backward: trace does not match model shape");
  }
}

}  // namespace

std::vector<LayerSpec> make_layer_specs(std::size_t inputs, std::span<const std::size_t> hidden,
                                        std::size_t classes, double dropout) {
  std::vector<LayerSpec> specs;
  std::size_t width = inputs;
  for (std::size_t h : hidden) {
    specs.push_back({width, h, Activation::relu, dropout});
    width = h;
  }
  specs.push_back({width, classes, Activation::identity, 0.0});
  return specs;
}

void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    if (s.input_width == 0 || s.output_width == 0) {
      throw ConfigError("layer " + std::to_string(k) + " has zero width");
    }
    if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0)) {
      throw ConfigError("layer " + std::to_string(k) + " dropout rate must be in [0, 1)");
    }
    if (k + 1 < specs.size() && s.output_width != specs[k + 1].input_width) {
      throw ConfigError("layer " + std::to_string(k) + " output width " +
                        std::to_string(s.output_width) + " does not match layer " +
                        std::to_string(k + 1) + " input width " +
                        std::to_string(specs[k + 1].input_width));
    }
  }
}

std::size_t MLPModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params) total += p.weights.values.size() + p.bias.size();
  return total;
}

bool MLPModel::all_finite() const {
  return std::all_of(params.begin(), params.end(), [](const DenseParams& p) {
    return finite_span(p.weights.values) && finite_span(p.bias);
  });
}

bool MLPModel::same_shape(const MLPModel& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].input_width != other.layers[k].input_width ||
        layers[k].output_width != other.layers[k].output_width) {
      return false;
    }
  }
  return true;
}

GradientSet GradientSet::zeros_like(const MLPModel& model) {
  GradientSet g;
  g.layers.reserve(model.params.size());
  for (const auto& p : model.params) {
    g.layers.push_back({Matrix(p.weights.rows, p.weights.cols),
                        std::vector<double>(p.bias.size(), 0.0)});
  }
  return g;
}

void GradientSet::set_zero() {
  for (auto& l : layers) {
    std::fill(l.weights.values.begin(), l.weights.values.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

void GradientSet::scale(double factor) {
  for (auto& l : layers) {
    for (double& v : l.weights.values) v *= factor;
    for (double& v : l.bias) v *= factor;
  }
}

bool GradientSet::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseParams& p) {
    return finite_span(p.weights.values) && finite_span(p.bias);
  });
}

MLPModel zero_model(std::span<const LayerSpec> specs) {
  validate_specs(specs);
  MLPModel model;
  model.layers.assign(specs.begin(), specs.end());
  for (const auto& s : specs) {
    model.params.push_back({Matrix(s.output_width, s.input_width),
                            std::vector<double>(s.output_width, 0.0)});
  }
  return model;
}

MLPModel init_model(std::span<const LayerSpec> specs, RngStream& rng) {
  MLPModel model = zero_model(specs);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const double limit = std::sqrt(6.0 / static_cast<double>(specs[k].input_width));
    for (double& w : model.params[k].weights.values) w = rng.uniform(-limit, limit);
  }
  return model;
}

void softmax_inplace(std::span<double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - peak);
    total += z;
  }
  for (double& z : logits) z /= total;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ForwardTrace forward(const MLPModel& model, std::span<const double> input, Mode mode,
                     RngStream& rng) {
  if (input.size() != model.input_width()) {
    throw DataError("input has " + std::to_string(input.size()) + " features, model expects " +
                    std::to_string(model.input_width()));
  }
  if (!finite_span(input)) throw DataError("non-finite value in input features");

  const std::size_t depth = model.layers.size();
  ForwardTrace trace;
  trace.inputs.resize(depth);
  trace.pre_activations.resize(depth);
  trace.masks.resize(depth);
  trace.outputs.resize(depth);

  std::span<const double> current = input;
  for (std::size_t k = 0; k < depth; ++k) {
    const LayerSpec& spec = model.layers[k];
    const DenseParams& p = model.params[k];
    trace.inputs[k].assign(current.begin(), current.end());

    auto& pre = trace.pre_activations[k];
    pre.resize(spec.output_width);
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      const double* w = p.weights.values.data() + o * spec.input_width;
      pre[o] = p.bias[o] + dot(w, trace.inputs[k].data(), spec.input_width);
    }

    auto& mask = trace.masks[k];
    mask.assign(spec.output_width, 1.0);
    if (mode == Mode::train && spec.dropout_rate > 0.0) {
      const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
      for (double& m : mask) m = rng.uniform() < spec.dropout_rate ? 0.0 : keep_scale;
    }

    auto& out = trace.outputs[k];
    out.resize(spec.output_width);
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      const double a = spec.activation == Activation::relu ? std::max(pre[o], 0.0) : pre[o];
      out[o] = a * mask[o];
    }
    current = out;
  }

  trace.probabilities = trace.outputs.back();
  softmax_inplace(trace.probabilities);
  return trace;
}

std::vector<double> infer(const MLPModel& model, std::span<const double> input) {
  RngStream unused(0, "infer");
  return forward(model, input, Mode::infer, unused).probabilities;
}

double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot) {
  double loss = 0.0;
  for (std::size_t c = 0; c < probabilities.size(); ++c) {
    if (one_hot[c] != 0.0) loss -= one_hot[c] * std::log(std::max(probabilities[c], kLogClamp));
  }
  return loss;
}

double cross_entropy(std::span<const double> probabilities, std::size_t label) {
  return -std::log(std::max(probabilities[label], kLogClamp));
}

namespace {

// Shared backward pass; `output_delta` is dL/d(final output) = p - y.
void backprop(const MLPModel& model, const ForwardTrace& trace, std::vector<double> delta,
              GradientSet& grads) {
  check_trace_shape(model, trace);
  if (grads.layers.size() != model.layers.size()) {
    throw std::logic_error("backward: gradient buffer does not match model shape");
  }
  std::vector<double> upstream;
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const LayerSpec& spec = model.layers[k];
    const auto& pre = trace.pre_activations[k];
    const auto& mask = trace.masks[k];
    // delta arrives as dL/d(output_k); fold in the mask and activation.
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      double g = delta[o] * mask[o];
      if (spec.activation == Activation::relu && pre[o] <= 0.0) g = 0.0;
      delta[o] = g;
    }

    DenseParams& g = grads.layers[k];
    const auto& in = trace.inputs[k];
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      if (d == 0.0) continue;
      double* row = g.weights.values.data() + o * spec.input_width;
      for (std::size_t i = 0; i < spec.input_width; ++i) row[i] += d * in[i];
    }

    if (k == 0) break;
    upstream.assign(spec.input_width, 0.0);
    const DenseParams& p = model.params[k];
    for (std::size_t o = 0; o < spec.output_width; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = p.weights.values.data() + o * spec.input_width;
      for (std::size_t i = 0; i < spec.input_width; ++i) upstream[i] += row[i] * d;
    }
    delta.swap(upstream);
  }
}

}  // namespace

void accumulate_backward(const MLPModel& model, const ForwardTrace& trace, std::size_t label,
                         GradientSet& grads) {
  std::vector<double> delta = trace.probabilities;
  if (label >= delta.size()) throw std::logic_error("backward: label out of range");
  delta[label] -= 1.0;
  backprop(model, trace, std::move(delta), grads);
}

GradientSet backward(const MLPModel& model, const ForwardTrace& trace,
                     std::span<const double> one_hot) {
  if (one_hot.size() != trace.probabilities.size()) {
    throw std::logic_error("backward: label width does not match output width");
  }
  std::vector<double> delta = trace.probabilities;
  for (std::size_t c = 0; c < delta.size(); ++c) delta[c] -= one_hot[c];
  GradientSet grads = GradientSet::zeros_like(model);
  backprop(model, trace, std::move(delta), grads);
  return grads;
}

GradientSet backward(const MLPModel& model, const ForwardTrace& trace, std::size_t label) {
  GradientSet grads = GradientSet::zeros_like(model);
  accumulate_backward(model, trace, label, grads);
  return grads;
}

void sgd_step(MLPModel& model, const GradientSet& grads, double learning_rate) {
  if (grads.layers.size() != model.params.size()) {
    throw std::logic_error("sgd_step: gradient shape does not match model");
  }
  if (!grads.all_finite()) throw NumericError("non-finite gradient; aborting training");
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    auto& p = model.params[k];
    const auto& g = grads.layers[k];
    for (std::size_t i = 0; i < p.weights.values.size(); ++i) {
      p.weights.values[i] -= learning_rate * g.weights.values[i];
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= learning_rate * g.bias[i];
  }
}

std::vector<std::int32_t> predict(const MLPModel& model, std::span<const double> features,
                                  std::size_t cols) {
  if (cols != model.input_width()) {
    throw DataError("feature matrix has " + std::to_string(cols) + " columns, model expects " +
                    std::to_string(model.input_width()));
  }
  const std::size_t rows = cols == 0 ? 0 : features.size() / cols;
  std::vector<std::int32_t> labels(rows);
  RngStream unused(0, "infer");
  for (std::size_t r = 0; r < rows; ++r) {
    const auto trace = forward(model, features.subspan(r * cols, cols), Mode::infer, unused);
    labels[r] = static_cast<std::int32_t>(argmax(trace.probabilities));
  }
  return labels;
}

}  // namespace redus::nn
