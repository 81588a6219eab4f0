#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace redus::resample {

/// Correctness mask: 1 where the model's prediction matched the label.
using CorrectnessMask = std::vector<std::uint8_t>;

inline constexpr double kEpsilonFloor = 1e-10;
inline constexpr double kEpsilonCeil = 1.0 - 1e-10;

/// Per-sample weights plus the exclusion threshold. Weights sum to one.
struct SampleWeightTable {
  std::vector<double> weights;
  double theta = 0.0;
  std::size_t epoch_index = 1;

  std::size_t size() const { return weights.size(); }
  double sum() const;
};

struct EpochErrorStats {
  double raw_epsilon = 0.0;   // before clamping
  double epsilon = 0.0;       // clamped into [kEpsilonFloor, kEpsilonCeil]
  double alpha = 0.0;
  double normalizer = 1.0;    // Z
  CorrectnessMask correct;

  /// True when the raw error sat outside the clamp range (all correct or all
  /// wrong); such epochs leave the weights unchanged.
  bool degenerate() const { return raw_epsilon < kEpsilonFloor || raw_epsilon > kEpsilonCeil; }
};

struct EpochSelection {
  std::vector<std::size_t> included;  // ascending
  std::size_t excluded_count = 0;
  bool fallback_used = false;
};

SampleWeightTable init_weights(std::size_t n, double theta = 0.0);

/// Weighted misclassification rate. Fills epsilon/raw_epsilon and the mask only.
EpochErrorStats compute_error(const SampleWeightTable& table, std::span<const std::uint8_t> correct);

double compute_alpha(double epsilon);
double compute_normalizer(double epsilon);

/// Full error statistics: epsilon, alpha, Z.
EpochErrorStats error_stats(const SampleWeightTable& table, std::span<const std::uint8_t> correct);

/// Multiplicative update over every sample, excluded ones included.
/// Returns the statistics that drove it.
EpochErrorStats update_weights(SampleWeightTable& table, std::span<const std::uint8_t> correct);

/// {i : w_i >= theta}; the full index set when that would be empty.
EpochSelection select_samples(const SampleWeightTable& table);

/// Largest threshold on the evaluation grid, (2/3) * (1/n).
double theta_max(std::size_t n);

/// steps evenly spaced thresholds from 0 to theta_max(n) inclusive.
std::vector<double> threshold_grid(std::size_t n, std::size_t steps);

/// One epoch's resampling outcome.
struct EpochPlan {
  std::size_t epoch = 1;
  EpochSelection selection;
  std::optional<EpochErrorStats> stats;  // empty on the initializing epoch
};

/// Drives the per-epoch weighting loop. The first epoch uses uniform weights
/// and never asks for a mask; later epochs ask for the correctness of the
/// current model over all n samples, update, then select.
///
/// A scheduler built from a carried-over table skips the initializing step
/// and updates on every epoch.
class RedusScheduler {
 public:
  RedusScheduler(std::size_t n, double theta);
  explicit RedusScheduler(SampleWeightTable carried);

  EpochPlan next_epoch(const std::function<CorrectnessMask()>& correctness);

  const SampleWeightTable& table() const { return table_; }
  SampleWeightTable release() && { return std::move(table_); }

 private:
  SampleWeightTable table_;
  bool initialized_ = false;
  std::size_t epoch_ = 0;
};

/// Debug snapshot rows: index,weight,included.
void write_weight_snapshot_csv(const std::string& path, const SampleWeightTable& table);
/// Flat little-endian layout: "RDSWGT01", u64 n, f64 theta, then n x (f64 weight, u8 included).
void write_weight_snapshot_binary(const std::string& path, const SampleWeightTable& table);
SampleWeightTable read_weight_snapshot_binary(const std::string& path);

}  // namespace redus::resample
