#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "redus/data.hpp"
#include "redus/nn.hpp"
#include "redus/resampler.hpp"

namespace redus::train {

enum class TrainMode { vanilla, redus };

std::string to_string(TrainMode mode);
TrainMode parse_mode(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double theta = 0.0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::vanilla;

  /// Throws ConfigError on zero epochs/batch, non-positive lr, negative theta,
  /// or batch_size > n.
  void validate(std::size_t n) const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t included_samples = 0;
  std::size_t backprop_count = 0;
  double train_loss = 0.0;      // mean over the samples trained this epoch
  double train_accuracy = 0.0;  // train-mode argmax match rate over the same samples
  double wall_time_s = 0.0;
  std::optional<double> epsilon;  // redus epochs after the first
  std::optional<double> alpha;
  bool fallback_used = false;
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

struct TrainingReport {
  TrainConfig config;
  std::size_t sample_count = 0;
  std::vector<EpochMetrics> epochs;
  std::optional<Evaluation> test;
  std::size_t total_backprops = 0;
  double total_wall_time_s = 0.0;

  /// Recomputes the totals from the epoch entries.
  void finalize();
};

struct TrainResult {
  nn::MLPModel model;
  TrainingReport report;
};

/// E epochs of shuffled mini-batch SGD over every sample.
TrainResult train_vanilla(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg);

/// Adaptive-resampling training. When `carried` is non-null its table seeds
/// the weights (if non-empty) and receives the final weights afterwards.
TrainResult train_redus(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg,
                        resample::SampleWeightTable* carried = nullptr);

/// Dispatches on cfg.mode.
TrainResult train(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg);

/// Infer-mode accuracy and mean cross-entropy.
Evaluation evaluate(const nn::MLPModel& model, const data::Dataset& data);

/// Infer-mode correctness over every row.
resample::CorrectnessMask correctness_mask(const nn::MLPModel& model, const data::Dataset& data);

/// Modelled training time |D| * tau * E.
double ltt_estimate(std::size_t sample_count, double tau_seconds, std::size_t epochs);

/// Mean seconds for one train-mode forward plus backward pass, measured over
/// `backprops` samples cycling through `data`.
double measure_backprop_seconds(const nn::MLPModel& model, const data::Dataset& data,
                                std::size_t backprops, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Threshold sweeps

struct SweepCell {
  double theta = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  Evaluation test;
  std::size_t total_backprops = 0;
  std::size_t fallback_epochs = 0;
  std::vector<std::size_t> included_per_epoch;
  double wall_time_s = 0.0;
  double mean_epoch_time_s = 0.0;
};

struct SweepRow {
  double theta = 0.0;
  double acc_pct = 0.0;
  double loss = 0.0;
  double mean_backprops = 0.0;
  double avg_time_s = 0.0;        // per training run
  double avg_epoch_time_s = 0.0;  // per epoch
  // Relative to the theta = 0 row; empty on that row.
  std::optional<double> acc_red_pct;
  std::optional<double> backprop_red_pct;
  std::optional<double> time_red_pct;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;  // ordered by (theta index, repeat)
};

/// Runs `repeats` seeded trainings per grid threshold and averages them.
/// The theta = 0 row is plain vanilla training and is prepended when the grid
/// lacks it. Repeat r uses the same seed for every theta. `jobs` > 1 runs
/// cells on worker threads; results are ordered regardless.
SweepTable sweep_thresholds(const data::Dataset& train_data, const data::Dataset& test_data,
                            std::span<const double> grid, std::span<const nn::LayerSpec> layers,
                            const TrainConfig& cfg, std::size_t repeats, std::size_t jobs = 1);

/// Fills the reduction columns against the theta = 0 row; clears them when
/// there is none.
void recompute_reductions(std::vector<SweepRow>& rows);

/// Rebuilds rows (means and reductions) from cells, in first-seen theta order.
std::vector<SweepRow> summarize_cells(std::span<const SweepCell> cells);

}  // namespace redus::train
