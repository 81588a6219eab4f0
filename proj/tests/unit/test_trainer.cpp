#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "redus/data.hpp"
#include "redus/errors.hpp"
#include "redus/trainer.hpp"

using namespace redus;
using namespace redus::train;

namespace {

struct Fixture {
  data::Dataset train;
  data::Dataset test;
  std::vector<nn::LayerSpec> specs;
};

Fixture make_fixture(std::size_t n_total, double separation, std::size_t hidden_width,
                     double dropout, std::uint64_t seed = 42) {
  RngStream rng(seed, "synth");
  const auto full = data::synth_generate(n_total, 10, 3, separation, rng);
  RngStream split_rng(seed, "split");
  auto parts = data::split(full, 0.8, 0.2, split_rng);
  auto [train_n, stats] = data::fit_normalize(parts.train);
  Fixture f{train_n, data::apply_normalize(parts.test, stats), {}};
  const std::vector<std::size_t> hidden{hidden_width};
  f.specs = nn::make_layer_specs(10, hidden, 3, dropout);
  return f;
}

nn::MLPModel fresh(const Fixture& f, std::uint64_t seed) {
  RngStream init(seed, "init");
  return nn::init_model(f.specs, init);
}

std::vector<double> losses(const TrainingReport& r) {
  std::vector<double> out;
  for (const auto& e : r.epochs) out.push_back(e.train_loss);
  return out;
}

}  // namespace

TEST_CASE("vanilla backprop count is n per epoch") {
  const auto f = make_fixture(1250, 6.0, 16, 0.0);
  REQUIRE(f.train.size() == 1000);
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto r = train_vanilla(fresh(f, 1), f.train, cfg);
  CHECK(r.report.total_backprops == 10000);
  for (const auto& e : r.report.epochs) {
    CHECK(e.backprop_count == 1000);
    CHECK(e.included_samples == 1000);
  }
}

TEST_CASE("vanilla training fits a separable 3-class set") {
  const auto f = make_fixture(2500, 6.0, 64, 0.0);
  REQUIRE(f.train.size() == 2000);
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto r = train_vanilla(fresh(f, 2), f.train, cfg);
  CHECK(evaluate(r.model, f.train).accuracy >= 0.95);
}

TEST_CASE("same seed gives identical reports and models") {
  const auto f = make_fixture(600, 4.0, 16, 0.2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const auto a = train_vanilla(fresh(f, 9), f.train, cfg);
  const auto b = train_vanilla(fresh(f, 9), f.train, cfg);
  CHECK(losses(a.report) == losses(b.report));
  CHECK(a.model == b.model);
  cfg.mode = TrainMode::redus;
  cfg.theta = 0.5 / static_cast<double>(f.train.size());
  const auto c = train_redus(fresh(f, 9), f.train, cfg);
  const auto d = train_redus(fresh(f, 9), f.train, cfg);
  CHECK(losses(c.report) == losses(d.report));
  CHECK(c.model == d.model);
}

TEST_CASE("theta = 0 replays vanilla training exactly") {
  const auto f = make_fixture(800, 5.0, 32, 0.2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 77;
  const auto v = train_vanilla(fresh(f, 77), f.train, cfg);
  cfg.mode = TrainMode::redus;
  const auto r = train_redus(fresh(f, 77), f.train, cfg);
  CHECK(r.model == v.model);
  CHECK(losses(r.report) == losses(v.report));
  CHECK(r.report.total_backprops == v.report.total_backprops);
  CHECK_FALSE(r.report.epochs[0].epsilon.has_value());
  CHECK(r.report.epochs[1].epsilon.has_value());
}

TEST_CASE("half-uniform threshold shrinks the working set without hurting accuracy") {
  // Small nets on a couple of thousand rows drift several points once the
  // working set collapses to the hard samples; this size fits reliably.
  const auto f = make_fixture(6250, 6.0, 256, 0.2);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  const auto v = train_vanilla(fresh(f, 5), f.train, cfg);
  cfg.mode = TrainMode::redus;
  cfg.theta = 0.5 / static_cast<double>(f.train.size());
  const auto r = train_redus(fresh(f, 5), f.train, cfg);

  bool decreased = false;
  for (std::size_t t = 1; t < r.report.epochs.size(); ++t) {
    decreased |= r.report.epochs[t].included_samples < r.report.epochs[t - 1].included_samples;
  }
  CHECK(decreased);
  CHECK(r.report.total_backprops < v.report.total_backprops);
  const double acc_v = evaluate(v.model, f.test).accuracy;
  const double acc_r = evaluate(r.model, f.test).accuracy;
  CHECK(std::abs(acc_v - acc_r) <= 0.03);
}

TEST_CASE("report bookkeeping is exact") {
  const auto f = make_fixture(1000, 5.0, 16, 0.2);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.mode = TrainMode::redus;
  cfg.theta = 0.55 / static_cast<double>(f.train.size());
  const auto r = train_redus(fresh(f, 3), f.train, cfg);
  std::size_t sum = 0;
  double time = 0.0;
  for (const auto& e : r.report.epochs) {
    CHECK(e.backprop_count == e.included_samples);
    CHECK(e.included_samples <= f.train.size());
    sum += e.backprop_count;
    time += e.wall_time_s;
  }
  CHECK(r.report.total_backprops == sum);
  CHECK(r.report.total_wall_time_s == doctest::Approx(time));
  CHECK(r.report.total_backprops <= cfg.epochs * f.train.size());
  CHECK(r.report.epochs[0].included_samples == f.train.size());
}

TEST_CASE("threshold above 1/n falls back to the full set") {
  const auto f = make_fixture(300, 5.0, 8, 0.0);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.mode = TrainMode::redus;
  cfg.theta = 2.0 / static_cast<double>(f.train.size());
  const auto r = train_redus(fresh(f, 1), f.train, cfg);
  CHECK(r.report.epochs[0].fallback_used);
  CHECK(r.report.epochs[0].included_samples == f.train.size());
}

TEST_CASE("carried weights persist between calls") {
  const auto f = make_fixture(400, 3.0, 8, 0.0);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.mode = TrainMode::redus;
  cfg.theta = 0.5 / static_cast<double>(f.train.size());
  resample::SampleWeightTable carried;
  const auto first = train_redus(fresh(f, 1), f.train, cfg, &carried);
  REQUIRE(carried.size() == f.train.size());
  CHECK(std::abs(carried.sum() - 1.0) < 1e-9);
  const auto second = train_redus(first.model, f.train, cfg, &carried);
  CHECK(second.report.epochs[0].epsilon.has_value());
}

TEST_CASE("configuration errors") {
  const auto f = make_fixture(100, 3.0, 4, 0.0);
  TrainConfig cfg;
  data::Dataset empty;
  empty.feature_count = 10;
  empty.class_count = 3;
  CHECK_THROWS_AS(train_vanilla(fresh(f, 1), empty, cfg), ConfigError);
  cfg.mode = TrainMode::redus;
  CHECK_THROWS_AS(train_redus(fresh(f, 1), empty, cfg), ConfigError);
  cfg.batch_size = 1000;
  CHECK_THROWS_AS(train_vanilla(fresh(f, 1), f.train, cfg), ConfigError);
  cfg.batch_size = 32;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_vanilla(fresh(f, 1), f.train, cfg), ConfigError);
  CHECK_THROWS_AS(parse_mode("boost"), ConfigError);
}

TEST_CASE("non-finite parameters abort training") {
  const auto f = make_fixture(100, 3.0, 4, 0.0);
  auto m = fresh(f, 1);
  m.params[0].weights.values[0] = NAN;
  TrainConfig cfg;
  CHECK_THROWS_AS(train_vanilla(m, f.train, cfg), NumericError);
}

TEST_CASE("evaluate baselines") {
  // One-hot features with an identity map: every prediction is right.
  data::Dataset d;
  d.rows = 6;
  d.feature_count = 3;
  d.class_count = 3;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 3; ++c) d.features.push_back(c == i % 3 ? 1.0 : 0.0);
    d.labels.push_back(static_cast<std::int32_t>(i % 3));
  }
  auto m = nn::zero_model(std::vector<nn::LayerSpec>{{3, 3, nn::Activation::identity, 0.0}});
  const auto uniform = evaluate(m, d);
  CHECK(uniform.accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(uniform.mean_loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  for (std::size_t c = 0; c < 3; ++c) m.params[0].weights(c, c) = 10.0;
  CHECK(evaluate(m, d).accuracy == 1.0);
}

TEST_CASE("LTT model") {
  CHECK(ltt_estimate(100, 0.001, 10) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ltt_estimate(100, 0.001, 0) == 0.0);
}

TEST_CASE("calibrated LTT predicts a vanilla epoch within 25%") {
  const auto f = make_fixture(5000, 5.0, 128, 0.2);
  const auto model = fresh(f, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  // Warm caches once, then take the best of three to dampen scheduler noise.
  (void)measure_backprop_seconds(model, f.train, 1000, 1);
  double tau = 1e9, epoch = 1e9;
  for (int k = 0; k < 3; ++k) {
    tau = std::min(tau, measure_backprop_seconds(model, f.train, 1000, 1));
    epoch = std::min(epoch, train_vanilla(model, f.train, cfg).report.total_wall_time_s);
  }
  const double estimate = ltt_estimate(f.train.size(), tau, 1);
  CHECK(std::abs(estimate - epoch) / epoch <= 0.25);
}

TEST_CASE("epoch time grows with the number of trained samples") {
  const auto full = make_fixture(5000, 5.0, 64, 0.0);
  TrainConfig cfg;
  cfg.epochs = 1;
  std::vector<double> xs, ys;
  for (std::size_t n = 500; n <= 4000; n += 500) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto sub = full.train.subset(idx);
    double best = 1e9;
    for (int k = 0; k < 2; ++k) best = std::min(best, train_vanilla(fresh(full, 1), sub, cfg).report.total_wall_time_s);
    xs.push_back(static_cast<double>(n));
    ys.push_back(best);
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  CHECK(num / den > 0.0);
}

TEST_CASE("sweep rows, baseline and determinism") {
  const auto f = make_fixture(700, 5.0, 16, 0.2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 11;
  const double top = 0.6 / static_cast<double>(f.train.size());
  const std::vector<double> grid{top, top};
  const auto table = sweep_thresholds(f.train, f.test, grid, f.specs, cfg, 2);
  REQUIRE(table.rows.size() == 2);  // theta = 0 prepended, duplicate thresholds merged
  CHECK(table.rows[0].theta == 0.0);
  CHECK_FALSE(table.rows[0].acc_red_pct.has_value());
  CHECK_FALSE(table.rows[0].time_red_pct.has_value());
  REQUIRE(table.cells.size() == 6);
  // The two identical grid entries produce identical cells, repeat by repeat.
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& a = table.cells[2 + r];
    const auto& b = table.cells[4 + r];
    CHECK(a.test.accuracy == b.test.accuracy);
    CHECK(a.test.mean_loss == b.test.mean_loss);
    CHECK(a.included_per_epoch == b.included_per_epoch);
  }
  CHECK(table.rows[1].acc_red_pct.has_value());
  CHECK(*table.rows[1].acc_red_pct == doctest::Approx(table.rows[0].acc_pct - table.rows[1].acc_pct));
  CHECK(table.rows[0].mean_backprops == 4.0 * f.train.size());

  const auto threaded = sweep_thresholds(f.train, f.test, grid, f.specs, cfg, 2, 3);
  REQUIRE(threaded.cells.size() == table.cells.size());
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    CHECK(threaded.cells[i].theta == table.cells[i].theta);
    CHECK(threaded.cells[i].test.accuracy == table.cells[i].test.accuracy);
    CHECK(threaded.cells[i].total_backprops == table.cells[i].total_backprops);
  }

  CHECK_THROWS_AS(sweep_thresholds(f.train, f.test, std::vector<double>{}, f.specs, cfg, 1), ConfigError);
  CHECK_THROWS_AS(sweep_thresholds(f.train, f.test, grid, f.specs, cfg, 0), ConfigError);
}

TEST_CASE("reductions follow the table sign conventions") {
  std::vector<SweepRow> rows(3);
  rows[0].theta = 0.0;
  rows[0].acc_pct = 94.33;
  rows[0].avg_time_s = 777;
  rows[1].theta = 1.5e-6;
  rows[1].acc_pct = 92.71;
  rows[1].avg_time_s = 213;
  rows[2].theta = 2.2e-7;
  rows[2].acc_pct = 95.0;
  rows[2].avg_time_s = 780;
  recompute_reductions(rows);
  CHECK(*rows[1].time_red_pct == doctest::Approx(72.59).epsilon(1e-3));
  CHECK(*rows[1].acc_red_pct == doctest::Approx(1.62).epsilon(1e-9));
  CHECK(*rows[2].time_red_pct < 0.0);  // slower than baseline
  CHECK(*rows[2].acc_red_pct < 0.0);   // better than baseline
}
