#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "redus/rng.hpp"

namespace redus::nn {

enum class Activation { relu, identity };

enum class Mode { train, infer };

/// One dense layer. Dropout is applied to the layer's output after the
/// activation.
struct LayerSpec {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;

  bool operator==(const LayerSpec&) const = default;
};

/// Hidden ReLU layers (each with `dropout`) followed by an identity output
/// layer of width `classes` feeding the softmax.
std::vector<LayerSpec> make_layer_specs(std::size_t inputs,
                                        std::span<const std::size_t> hidden,
                                        std::size_t classes, double dropout);

/// Throws ConfigError when widths do not chain or a rate is out of [0, 1).
void validate_specs(std::span<const LayerSpec> specs);

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

struct DenseParams {
  Matrix weights;             // output_width x input_width
  std::vector<double> bias;   // output_width

  bool operator==(const DenseParams&) const = default;
};

struct MLPModel {
  std::vector<LayerSpec> layers;
  std::vector<DenseParams> params;

  std::size_t input_width() const { return layers.front().input_width; }
  std::size_t output_width() const { return layers.back().output_width; }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_shape(const MLPModel& other) const;

  bool operator==(const MLPModel&) const = default;
};

/// Caches from one forward pass. inputs[k] is what layer k consumed;
/// outputs[k] is its activated, masked output.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<double>> masks;
  std::vector<std::vector<double>> outputs;
  std::vector<double> probabilities;
};

/// Parameter-shaped gradient buffer.
struct GradientSet {
  std::vector<DenseParams> layers;

  static GradientSet zeros_like(const MLPModel& model);
  void set_zero();
  void scale(double factor);
  bool all_finite() const;
};

MLPModel init_model(std::span<const LayerSpec> specs, RngStream& rng);

/// Zero weights and biases; handy as a uniform-output baseline.
MLPModel zero_model(std::span<const LayerSpec> specs);

ForwardTrace forward(const MLPModel& model, std::span<const double> input, Mode mode,
                     RngStream& rng);

/// Infer-mode probabilities without keeping the trace around.
std::vector<double> infer(const MLPModel& model, std::span<const double> input);

void softmax_inplace(std::span<double> logits);

/// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

/// -sum y_c log(max(p_c, 1e-12)).
double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot);
double cross_entropy(std::span<const double> probabilities, std::size_t label);

inline constexpr double kLogClamp = 1e-12;

/// Adds the single-sample cross-entropy gradient into `grads`.
void accumulate_backward(const MLPModel& model, const ForwardTrace& trace, std::size_t label,
                         GradientSet& grads);

GradientSet backward(const MLPModel& model, const ForwardTrace& trace,
                     std::span<const double> one_hot);
GradientSet backward(const MLPModel& model, const ForwardTrace& trace, std::size_t label);

/// p <- p - lr * g for every parameter. Throws NumericError on a non-finite
/// gradient, leaving the model untouched.
void sgd_step(MLPModel& model, const GradientSet& grads, double learning_rate);

/// Argmax of infer-mode forward per row of a row-major matrix with `cols` columns.
std::vector<std::int32_t> predict(const MLPModel& model, std::span<const double> features,
                                  std::size_t cols);

}  // namespace redus::nn
