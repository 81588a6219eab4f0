#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redus/rng.hpp"

namespace redus::data {

/// Row-major feature matrix with contiguous integer labels in [0, class_count).
struct Dataset {
  std::size_t rows = 0;
  std::size_t feature_count = 0;
  std::size_t class_count = 0;
  std::vector<double> features;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return rows; }
  bool empty() const { return rows == 0; }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * feature_count, feature_count};
  }
  std::vector<double> one_hot(std::size_t i) const;

  /// Rows picked by `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Per-class counts, length class_count.
  std::vector<std::size_t> class_counts() const;

  /// Throws DataError when shape, label range or finiteness is violated.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Sorted distinct label strings mapped to 0..C-1.
class LabelEncoder {
 public:
  LabelEncoder() = default;
  explicit LabelEncoder(std::vector<std::string> names);

  static LabelEncoder fit(std::span<const std::string> labels);

  std::int32_t encode(const std::string& label) const;
  const std::string& decode(std::int32_t code) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

struct CsvOptions {
  std::string label_column = "label";
  bool has_header = true;
};

/// Parsed CSV before label encoding.
struct RawTable {
  std::vector<std::string> feature_names;
  std::size_t feature_count = 0;
  std::vector<double> features;
  std::vector<std::string> labels;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;  // one per dropped row, 1-based line numbers

  std::size_t rows() const { return labels.size(); }
};

/// Without a header the label column is the last one. Rows with an
/// unparseable or non-finite feature are dropped and reported.
RawTable load_csv(const std::string& path, const CsvOptions& options = {});

struct EncodedDataset {
  Dataset dataset;
  LabelEncoder encoder;
};

EncodedDataset encode(const RawTable& table);

/// Per-feature training-split min/max.
struct NormalizationStats {
  std::vector<double> minimum;
  std::vector<double> maximum;

  bool is_constant(std::size_t feature) const { return minimum[feature] == maximum[feature]; }
};

NormalizationStats fit_stats(const Dataset& data);

/// x <- (x - min) / (max - min); constant features map to 0; no clipping.
Dataset apply_normalize(const Dataset& data, const NormalizationStats& stats);

/// Fits on `data` unless `stats` is given, then applies.
std::pair<Dataset, NormalizationStats> fit_normalize(
    const Dataset& data, const std::optional<NormalizationStats>& stats = std::nullopt);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Seeded shuffle, then a contiguous split with round(n * train_fraction)
/// training rows.
SplitResult split(const Dataset& data, double train_fraction, double test_fraction, RngStream& rng);

/// C Gaussian clusters of unit variance; class means sit on random orthonormal
/// directions scaled so every pair of means is `separation` apart. Labels
/// cycle 0..C-1 so counts differ by at most one.
Dataset synth_generate(std::size_t n, std::size_t d, std::size_t classes, double separation,
                       RngStream& rng);

/// Header is f0..f{d-1},label; label column last.
void write_csv(const std::string& path, const Dataset& data);

/// Cache layout (little-endian): "REDUSDS1", u64 n, u64 d, u64 C,
/// n*d f64 features row-major, n i32 labels.
void write_binary(const std::string& path, const Dataset& data);
Dataset read_binary(const std::string& path);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace redus::data
