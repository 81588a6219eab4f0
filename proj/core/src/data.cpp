#include "redus/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>

#include "redus/errors.hpp"

namespace redus::data {

std::vector<double> Dataset::one_hot(std::size_t i) const {
  std::vector<double> y(class_count, 0.0);
  y[static_cast<std::size_t>(labels[i])] = 1.0;
  return y;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.rows = indices.size();
  out.feature_count = feature_count;
  out.class_count = class_count;
  out.features.reserve(indices.size() * feature_count);
  out.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto r = row(idx);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[idx]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void Dataset::validate() const {
  if (rows == 0) throw DataError("dataset is empty");
  if (features.size() != rows * feature_count || labels.size() != rows) {
    throw DataError("dataset buffers do not match its shape");
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(class_count) + ")");
    }
  }
  if (!std::all_of(features.begin(), features.end(), [](double x) { return std::isfinite(x); })) {
    throw DataError("dataset contains non-finite features");
  }
}

LabelEncoder::LabelEncoder(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

LabelEncoder LabelEncoder::fit(std::span<const std::string> labels) {
  return LabelEncoder(std::vector<std::string>(labels.begin(), labels.end()));
}

std::int32_t LabelEncoder::encode(const std::string& label) const {
  const auto it = std::lower_bound(names_.begin(), names_.end(), label);
  if (it == names_.end() || *it != label) throw DataError("unknown label '" + label + "'");
  return static_cast<std::int32_t>(it - names_.begin());
}

const std::string& LabelEncoder::decode(std::int32_t code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= names_.size()) {
    throw DataError("label code " + std::to_string(code) + " out of range");
  }
  return names_[static_cast<std::size_t>(code)];
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

RawTable load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::size_t label_index = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  if (!next_line()) throw DataError(path + ": file is empty");

  const auto first = split_fields(line);
  columns = first.size();
  if (options.has_header) {
    const auto it = std::find(first.begin(), first.end(), options.label_column);
    if (it == first.end()) {
      throw DataError(path + ": missing label column '" + options.label_column + "'");
    }
    label_index = static_cast<std::size_t>(it - first.begin());
    for (std::size_t c = 0; c < columns; ++c) {
      if (c != label_index) table.feature_names.emplace_back(first[c]);
    }
  } else {
    label_index = columns - 1;
    for (std::size_t c = 0; c + 1 < columns; ++c) table.feature_names.push_back("f" + std::to_string(c));
  }
  if (columns < 2) throw DataError(path + ": need at least one feature column and a label column");
  table.feature_count = columns - 1;

  std::vector<double> row(table.feature_count);
  auto consume = [&](std::string_view text) {
    const auto fields = split_fields(text);
    if (fields.size() != columns) {
      table.warnings.push_back("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(columns) + " fields, found " +
                               std::to_string(fields.size()));
      ++table.dropped_rows;
      return;
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < columns; ++c) {
      if (c == label_index) continue;
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        table.warnings.push_back("line " + std::to_string(line_no) + ": unusable value '" +
                                 std::string(fields[c]) + "' in column " + std::to_string(c + 1));
        ++table.dropped_rows;
        return;
      }
      row[f++] = v;
    }
    if (fields[label_index].empty()) {
      table.warnings.push_back("line " + std::to_string(line_no) + ": empty label");
      ++table.dropped_rows;
      return;
    }
    table.features.insert(table.features.end(), row.begin(), row.end());
    table.labels.emplace_back(fields[label_index]);
  };

  if (!options.has_header) consume(line);
  while (next_line()) consume(line);

  if (table.rows() == 0) throw DataError(path + ": no usable rows");
  return table;
}

EncodedDataset encode(const RawTable& table) {
  EncodedDataset out;
  out.encoder = LabelEncoder::fit(table.labels);
  Dataset& ds = out.dataset;
  ds.rows = table.rows();
  ds.feature_count = table.feature_count;
  ds.class_count = out.encoder.size();
  ds.features = table.features;
  ds.labels.reserve(ds.rows);
  for (const auto& l : table.labels) ds.labels.push_back(out.encoder.encode(l));
  return out;
}

NormalizationStats fit_stats(const Dataset& data) {
  if (data.empty()) throw DataError("cannot fit normalization on an empty dataset");
  NormalizationStats stats;
  const auto first = data.row(0);
  stats.minimum.assign(first.begin(), first.end());
  stats.maximum.assign(first.begin(), first.end());
  for (std::size_t i = 1; i < data.rows; ++i) {
    const auto r = data.row(i);
    for (std::size_t f = 0; f < data.feature_count; ++f) {
      stats.minimum[f] = std::min(stats.minimum[f], r[f]);
      stats.maximum[f] = std::max(stats.maximum[f], r[f]);
    }
  }
  return stats;
}

Dataset apply_normalize(const Dataset& data, const NormalizationStats& stats) {
  if (stats.minimum.size() != data.feature_count) {
    throw DataError("normalization stats cover " + std::to_string(stats.minimum.size()) +
                    " features, dataset has " + std::to_string(data.feature_count));
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* r = out.features.data() + i * out.feature_count;
    for (std::size_t f = 0; f < out.feature_count; ++f) {
      const double range = stats.maximum[f] - stats.minimum[f];
      r[f] = range > 0.0 ? (r[f] - stats.minimum[f]) / range : 0.0;
    }
  }
  return out;
}

std::pair<Dataset, NormalizationStats> fit_normalize(const Dataset& data,
                                                     const std::optional<NormalizationStats>& stats) {
  NormalizationStats used = stats ? *stats : fit_stats(data);
  Dataset out = apply_normalize(data, used);
  return {std::move(out), std::move(used)};
}

SplitResult split(const Dataset& data, double train_fraction, double test_fraction, RngStream& rng) {
  if (!(train_fraction > 0.0) || !(test_fraction > 0.0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(data.rows) * train_fraction));
  if (n_train == 0 || n_train >= data.rows) {
    throw ConfigError("split of " + std::to_string(data.rows) + " rows would leave one side empty");
  }
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  SplitResult result;
  result.train = data.subset(std::span<const std::size_t>(order).first(n_train));
  result.test = data.subset(std::span<const std::size_t>(order).subspan(n_train));

  const auto train_counts = result.train.class_counts();
  const auto test_counts = result.test.class_counts();
  for (std::size_t c = 0; c < data.class_count; ++c) {
    if (train_counts[c] == 0) result.warnings.push_back("class " + std::to_string(c) + " absent from training split");
    if (test_counts[c] == 0) result.warnings.push_back("class " + std::to_string(c) + " absent from test split");
  }
  return result;
}

Dataset synth_generate(std::size_t n, std::size_t d, std::size_t classes, double separation,
                       RngStream& rng) {
  if (classes == 0 || d == 0) throw ConfigError("synthetic data needs d >= 1 and at least one class");
  if (n < classes) throw ConfigError("synthetic data needs n >= number of classes");
  if (!(separation >= 0.0)) throw ConfigError("separation must be >= 0");

  // Random directions, orthonormalized while the dimension allows it.
  std::vector<std::vector<double>> dirs;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(d);
    for (;;) {
      for (double& x : v) x = rng.normal();
      if (dirs.size() < d) {
        for (const auto& u : dirs) {
          const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
          for (std::size_t k = 0; k < d; ++k) v[k] -= dot * u[k];
        }
      }
      const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm > 1e-8) {
        for (double& x : v) x /= norm;
        break;
      }
    }
    dirs.push_back(std::move(v));
  }

  // |a u - a v| = a sqrt(2) for orthonormal u, v.
  const double radius = separation / std::sqrt(2.0);
  Dataset ds;
  ds.rows = n;
  ds.feature_count = d;
  ds.class_count = classes;
  ds.features.resize(n * d);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<std::int32_t>(c);
    double* r = ds.features.data() + i * d;
    for (std::size_t k = 0; k < d; ++k) r[k] = radius * dirs[c][k] + rng.normal();
  }
  return ds;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (std::size_t f = 0; f < data.feature_count; ++f) out << 'f' << f << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto r = data.row(i);
    for (double x : r) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << buf << ',';
    }
    out << data.labels[i] << '\n';
  }
}

namespace {

constexpr char kDatasetMagic[8] = {'R', 'E', 'D', 'U', 'S', 'D', 'S', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("dataset cache truncated");
  return value;
}

}  // namespace

void write_binary(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  put_le<std::uint64_t>(out, data.rows);
  put_le<std::uint64_t>(out, data.feature_count);
  put_le<std::uint64_t>(out, data.class_count);
  for (double x : data.features) put_le<double>(out, x);
  for (auto y : data.labels) put_le<std::int32_t>(out, y);
}

Dataset read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
    throw DataError(path + ": not a dataset cache");
  }
  Dataset ds;
  ds.rows = get_le<std::uint64_t>(in);
  ds.feature_count = get_le<std::uint64_t>(in);
  ds.class_count = get_le<std::uint64_t>(in);
  ds.features.resize(ds.rows * ds.feature_count);
  for (double& x : ds.features) x = get_le<double>(in);
  ds.labels.resize(ds.rows);
  for (auto& y : ds.labels) y = get_le<std::int32_t>(in);
  ds.validate();
  return ds;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace redus::data
