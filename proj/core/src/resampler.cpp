#include "redus/resampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "redus/errors.hpp"

namespace redus::resample {

double SampleWeightTable::sum() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

SampleWeightTable init_weights(std::size_t n, double theta) {
  if (n == 0) throw ConfigError("cannot weight an empty dataset");
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError("threshold must be finite and >= 0");
  SampleWeightTable table;
  table.weights.assign(n, 1.0 / static_cast<double>(n));
  table.theta = theta;
  table.epoch_index = 1;
  return table;
}

EpochErrorStats compute_error(const SampleWeightTable& table, std::span<const std::uint8_t> correct) {
  if (correct.size() != table.size()) {
    throw DataError("correctness mask has " + std::to_string(correct.size()) +
                    " entries, weight table has " + std::to_string(table.size()));
  }
  EpochErrorStats stats;
  double eps = 0.0;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    if (!correct[i]) eps += table.weights[i];
  }
  stats.raw_epsilon = eps;
  stats.epsilon = std::clamp(eps, kEpsilonFloor, kEpsilonCeil);
  stats.correct.assign(correct.begin(), correct.end());
  return stats;
}

double compute_alpha(double epsilon) { return 0.5 * std::log((1.0 - epsilon) / epsilon); }

double compute_normalizer(double epsilon) { return 2.0 * std::sqrt(epsilon * (1.0 - epsilon)); }

EpochErrorStats error_stats(const SampleWeightTable& table, std::span<const std::uint8_t> correct) {
  EpochErrorStats stats = compute_error(table, correct);
  stats.alpha = compute_alpha(stats.epsilon);
  stats.normalizer = compute_normalizer(stats.epsilon);
  return stats;
}

EpochErrorStats update_weights(SampleWeightTable& table, std::span<const std::uint8_t> correct) {
  EpochErrorStats stats = error_stats(table, correct);
  ++table.epoch_index;
  if (stats.degenerate()) return stats;
  const double up = std::exp(stats.alpha) / stats.normalizer;
  const double down = std::exp(-stats.alpha) / stats.normalizer;
  for (std::size_t i = 0; i < table.size(); ++i) {
    table.weights[i] *= correct[i] ? down : up;
  }
  return stats;
}

EpochSelection select_samples(const SampleWeightTable& table) {
  EpochSelection sel;
  sel.included.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.weights[i] >= table.theta) sel.included.push_back(i);
  }
  if (sel.included.empty()) {
    sel.fallback_used = true;
    sel.included.resize(table.size());
    std::iota(sel.included.begin(), sel.included.end(), std::size_t{0});
  }
  sel.excluded_count = table.size() - sel.included.size();
  return sel;
}

double theta_max(std::size_t n) {
  if (n == 0) throw ConfigError("threshold grid needs n >= 1");
  return (2.0 / 3.0) / static_cast<double>(n);
}

std::vector<double> threshold_grid(std::size_t n, std::size_t steps) {
  if (steps < 2) throw ConfigError("threshold grid needs at least 2 steps");
  const double top = theta_max(n);
  std::vector<double> grid(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    grid[k] = static_cast<double>(k) * top / static_cast<double>(steps - 1);
  }
  return grid;
}

RedusScheduler::RedusScheduler(std::size_t n, double theta) : table_(init_weights(n, theta)) {}

RedusScheduler::RedusScheduler(SampleWeightTable carried)
    : table_(std::move(carried)), initialized_(true) {
  if (table_.weights.empty()) throw ConfigError("carried weight table is empty");
}

EpochPlan RedusScheduler::next_epoch(const std::function<CorrectnessMask()>& correctness) {
  EpochPlan plan;
  plan.epoch = ++epoch_;
  if (!initialized_) {
    initialized_ = true;
  } else {
    const CorrectnessMask mask = correctness();
    plan.stats = update_weights(table_, mask);
  }
  plan.selection = select_samples(table_);
  return plan;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("weight snapshot truncated");
  return value;
}

constexpr char kWeightMagic[8] = {'R', 'D', 'S', 'W', 'G', 'T', '0', '1'};

}  // namespace

void write_weight_snapshot_csv(const std::string& path, const SampleWeightTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "index,weight,included\n";
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", table.weights[i]);
    out << i << ',' << buf << ',' << (table.weights[i] >= table.theta ? 1 : 0) << '\n';
  }
}

void write_weight_snapshot_binary(const std::string& path, const SampleWeightTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(kWeightMagic, sizeof kWeightMagic);
  put_le<std::uint64_t>(out, table.size());
  put_le<double>(out, table.theta);
  for (double w : table.weights) {
    put_le<double>(out, w);
    put_le<std::uint8_t>(out, w >= table.theta ? 1 : 0);
  }
}

SampleWeightTable read_weight_snapshot_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kWeightMagic, sizeof magic) != 0) {
    throw DataError(path + ": not a weight snapshot");
  }
  SampleWeightTable table;
  const auto n = get_le<std::uint64_t>(in);
  table.theta = get_le<double>(in);
  table.weights.resize(n);
  for (auto& w : table.weights) {
    w = get_le<double>(in);
    (void)get_le<std::uint8_t>(in);
  }
  return table;
}

}  // namespace redus::resample
