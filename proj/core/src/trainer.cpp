#include "redus/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <thread>

#include "redus/errors.hpp"

namespace redus::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Streams {
  RngStream dropout;
  RngStream shuffle;

  explicit Streams(std::uint64_t seed) : dropout(seed, "dropout"), shuffle(seed, "shuffle") {}
};

// One epoch of shuffled mini-batch SGD over `order`. The last partial batch
// is kept; gradients are averaged over each batch.
void run_epoch(nn::MLPModel& model, const data::Dataset& data, std::vector<std::size_t> order,
               const TrainConfig& cfg, Streams& streams, nn::GradientSet& grads,
               EpochMetrics& metrics) {
  streams.shuffle.shuffle(std::span<std::size_t>(order));
  double loss_sum = 0.0;
  std::size_t hits = 0;
  std::size_t backprops = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
    grads.set_zero();
    for (std::size_t b = start; b < stop; ++b) {
      const std::size_t i = order[b];
      const auto label = static_cast<std::size_t>(data.labels[i]);
      const auto trace = nn::forward(model, data.row(i), nn::Mode::train, streams.dropout);
      const double loss = nn::cross_entropy(trace.probabilities, label);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(metrics.epoch) +
                           ", sample " + std::to_string(i));
      }
      loss_sum += loss;
      if (nn::argmax(trace.probabilities) == label) ++hits;
      nn::accumulate_backward(model, trace, label, grads);
      ++backprops;
    }
    grads.scale(1.0 / static_cast<double>(stop - start));
    nn::sgd_step(model, grads, cfg.learning_rate);
  }
  metrics.included_samples = order.size();
  metrics.backprop_count = backprops;
  const double count = static_cast<double>(std::max<std::size_t>(order.size(), 1));
  metrics.train_loss = loss_sum / count;
  metrics.train_accuracy = static_cast<double>(hits) / count;
}

void check_inputs(const nn::MLPModel& model, const data::Dataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  cfg.validate(data.size());
  if (model.input_width() != data.feature_count) {
    throw ConfigError("model expects " + std::to_string(model.input_width()) +
                      " features, dataset has " + std::to_string(data.feature_count));
  }
  if (model.output_width() != data.class_count) {
    throw ConfigError("model has " + std::to_string(model.output_width()) +
                      " outputs, dataset has " + std::to_string(data.class_count) + " classes");
  }
}

}  // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::vanilla ? "vanilla" : "redus"; }

TrainMode parse_mode(const std::string& text) {
  if (text == "vanilla") return TrainMode::vanilla;
  if (text == "redus") return TrainMode::redus;
  throw ConfigError("unknown training mode '" + text + "'");
}

void TrainConfig::validate(std::size_t n) const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (batch_size > n) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                      std::to_string(n));
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError("threshold must be >= 0");
}

void TrainingReport::finalize() {
  total_backprops = 0;
  total_wall_time_s = 0.0;
  for (const auto& e : epochs) {
    total_backprops += e.backprop_count;
    total_wall_time_s += e.wall_time_s;
  }
}

TrainResult train_vanilla(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg) {
  check_inputs(model, data, cfg);
  TrainResult result{std::move(model), {}};
  result.report.config = cfg;
  result.report.config.mode = TrainMode::vanilla;
  result.report.sample_count = data.size();

  Streams streams(cfg.seed);
  auto grads = nn::GradientSet::zeros_like(result.model);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  for (std::size_t t = 1; t <= cfg.epochs; ++t) {
    EpochMetrics m;
    m.epoch = t;
    const auto start = Clock::now();
    run_epoch(result.model, data, all, cfg, streams, grads, m);
    m.wall_time_s = seconds_since(start);
    result.report.epochs.push_back(m);
  }
  result.report.finalize();
  return result;
}

TrainResult train_redus(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg,
                        resample::SampleWeightTable* carried) {
  check_inputs(model, data, cfg);
  const double n = static_cast<double>(data.size());
  if (cfg.theta > 1.0 / n) {
    std::cerr << "warning: threshold " << cfg.theta << " exceeds 1/n = " << 1.0 / n
              << "; every epoch may fall back to the full dataset\n";
  }

  TrainResult result{std::move(model), {}};
  result.report.config = cfg;
  result.report.config.mode = TrainMode::redus;
  result.report.sample_count = data.size();

  auto scheduler = [&] {
    if (carried && !carried->weights.empty()) {
      if (carried->size() != data.size()) {
        throw ConfigError("carried weight table size does not match dataset");
      }
      resample::SampleWeightTable table = *carried;
      table.theta = cfg.theta;
      return resample::RedusScheduler(std::move(table));
    }
    return resample::RedusScheduler(data.size(), cfg.theta);
  }();

  Streams streams(cfg.seed);
  auto grads = nn::GradientSet::zeros_like(result.model);

  for (std::size_t t = 1; t <= cfg.epochs; ++t) {
    EpochMetrics m;
    m.epoch = t;
    const auto start = Clock::now();
    const auto plan =
        scheduler.next_epoch([&] { return correctness_mask(result.model, data); });
    if (plan.stats) {
      m.epsilon = plan.stats->epsilon;
      m.alpha = plan.stats->alpha;
    }
    m.fallback_used = plan.selection.fallback_used;
    run_epoch(result.model, data, plan.selection.included, cfg, streams, grads, m);
    m.wall_time_s = seconds_since(start);
    result.report.epochs.push_back(m);
  }
  result.report.finalize();
  if (carried) *carried = scheduler.table();
  return result;
}

TrainResult train(nn::MLPModel model, const data::Dataset& data, const TrainConfig& cfg) {
  return cfg.mode == TrainMode::vanilla ? train_vanilla(std::move(model), data, cfg)
                                        : train_redus(std::move(model), data, cfg);
}

Evaluation evaluate(const nn::MLPModel& model, const data::Dataset& data) {
  if (data.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  RngStream unused(0, "infer");
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto trace = nn::forward(model, data.row(i), nn::Mode::infer, unused);
    const auto label = static_cast<std::size_t>(data.labels[i]);
    loss += nn::cross_entropy(trace.probabilities, label);
    if (nn::argmax(trace.probabilities) == label) ++hits;
  }
  const double count = static_cast<double>(data.size());
  return {static_cast<double>(hits) / count, loss / count};
}

resample::CorrectnessMask correctness_mask(const nn::MLPModel& model, const data::Dataset& data) {
  const auto predicted = nn::predict(model, data.features, data.feature_count);
  resample::CorrectnessMask mask(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) mask[i] = predicted[i] == data.labels[i] ? 1 : 0;
  return mask;
}

double ltt_estimate(std::size_t sample_count, double tau_seconds, std::size_t epochs) {
  return static_cast<double>(sample_count) * tau_seconds * static_cast<double>(epochs);
}

double measure_backprop_seconds(const nn::MLPModel& model, const data::Dataset& data,
                                std::size_t backprops, std::uint64_t seed) {
  if (data.empty() || backprops == 0) throw ConfigError("calibration needs data and a positive count");
  RngStream dropout(seed, "dropout");
  auto grads = nn::GradientSet::zeros_like(model);
  const auto start = Clock::now();
  for (std::size_t k = 0; k < backprops; ++k) {
    const std::size_t i = k % data.size();
    const auto trace = nn::forward(model, data.row(i), nn::Mode::train, dropout);
    nn::accumulate_backward(model, trace, static_cast<std::size_t>(data.labels[i]), grads);
  }
  return seconds_since(start) / static_cast<double>(backprops);
}

void recompute_reductions(std::vector<SweepRow>& rows) {
  const auto base = std::find_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.theta == 0.0; });
  for (auto& r : rows) {
    r.acc_red_pct.reset();
    r.backprop_red_pct.reset();
    r.time_red_pct.reset();
  }
  if (base == rows.end()) return;
  const SweepRow ref = *base;
  for (auto& r : rows) {
    if (r.theta == 0.0) continue;
    r.acc_red_pct = ref.acc_pct - r.acc_pct;
    if (ref.mean_backprops > 0.0) r.backprop_red_pct = (1.0 - r.mean_backprops / ref.mean_backprops) * 100.0;
    if (ref.avg_time_s > 0.0) r.time_red_pct = (1.0 - r.avg_time_s / ref.avg_time_s) * 100.0;
  }
}

std::vector<SweepRow> summarize_cells(std::span<const SweepCell> cells) {
  std::vector<double> order;
  std::map<double, std::vector<const SweepCell*>> groups;
  for (const auto& c : cells) {
    if (!groups.count(c.theta)) order.push_back(c.theta);
    groups[c.theta].push_back(&c);
  }

  std::vector<SweepRow> rows;
  for (double theta : order) {
    const auto& members = groups[theta];
    const double k = static_cast<double>(members.size());
    SweepRow row;
    row.theta = theta;
    for (const auto* c : members) {
      row.acc_pct += 100.0 * c->test.accuracy / k;
      row.loss += c->test.mean_loss / k;
      row.mean_backprops += static_cast<double>(c->total_backprops) / k;
      row.avg_time_s += c->wall_time_s / k;
      row.avg_epoch_time_s += c->mean_epoch_time_s / k;
    }
    rows.push_back(row);
  }

  recompute_reductions(rows);
  return rows;
}

SweepTable sweep_thresholds(const data::Dataset& train_data, const data::Dataset& test_data,
                            std::span<const double> grid, std::span<const nn::LayerSpec> layers,
                            const TrainConfig& cfg, std::size_t repeats, std::size_t jobs) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  if (test_data.empty()) throw ConfigError("sweep needs a non-empty test split");
  nn::validate_specs(layers);

  std::vector<double> thetas;
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end()) thetas.push_back(0.0);
  thetas.insert(thetas.end(), grid.begin(), grid.end());

  std::vector<SweepCell> cells(thetas.size() * repeats);
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    for (std::size_t r = 0; r < repeats; ++r) {
      auto& c = cells[t * repeats + r];
      c.theta = thetas[t];
      c.repeat = r;
      c.seed = derive_repeat_seed(cfg.seed, r);
    }
  }

  auto run_cell = [&](SweepCell& cell) {
    TrainConfig local = cfg;
    local.seed = cell.seed;
    local.theta = cell.theta;
    local.mode = cell.theta == 0.0 ? TrainMode::vanilla : TrainMode::redus;
    RngStream init(cell.seed, "init");
    auto result = train(nn::init_model(layers, init), train_data, local);
    cell.test = evaluate(result.model, test_data);
    cell.total_backprops = result.report.total_backprops;
    cell.wall_time_s = result.report.total_wall_time_s;
    cell.mean_epoch_time_s = cell.wall_time_s / static_cast<double>(result.report.epochs.size());
    for (const auto& e : result.report.epochs) {
      cell.included_per_epoch.push_back(e.included_samples);
      if (e.fallback_used) ++cell.fallback_epochs;
    }
  };

  if (jobs <= 1) {
    for (auto& c : cells) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(cells.size());
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, cells.size()); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          try {
            run_cell(cells[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SweepTable table;
  table.rows = summarize_cells(cells);
  table.cells = std::move(cells);
  return table;
}

}  // namespace redus::train
