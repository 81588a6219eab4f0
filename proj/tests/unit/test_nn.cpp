#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "redus/errors.hpp"
#include "redus/nn.hpp"

using namespace redus;
using namespace redus::nn;

namespace {

std::vector<LayerSpec> small_net(double dropout = 0.0) {
  return {{4, 5, Activation::relu, dropout}, {5, 3, Activation::identity, 0.0}};
}

double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-8) return std::abs(a - b);
  return std::abs(a - b) / scale;
}

}  // namespace

TEST_CASE("init_model shapes for the reference architecture") {
  const std::vector<std::size_t> hidden{256, 512, 256, 128};
  const auto specs = make_layer_specs(46, hidden, 34, 0.2);
  RngStream rng(1, "init");
  const auto m = init_model(specs, rng);
  const std::vector<std::pair<std::size_t, std::size_t>> expected{
      {256, 46}, {512, 256}, {256, 512}, {128, 256}, {34, 128}};
  REQUIRE(m.params.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(m.params[k].weights.rows == expected[k].first);
    CHECK(m.params[k].weights.cols == expected[k].second);
    CHECK(m.params[k].bias.size() == expected[k].first);
    const double limit = std::sqrt(6.0 / static_cast<double>(expected[k].second));
    for (double w : m.params[k].weights.values) REQUIRE(std::abs(w) <= limit);
  }
  CHECK(m.layers.back().activation == Activation::identity);
  CHECK(m.layers.front().dropout_rate == 0.2);
}

TEST_CASE("init_model biases are zero and seeds are reproducible") {
  const std::vector<LayerSpec> specs{{2, 2, Activation::identity, 0.0}};
  RngStream a(9, "init"), b(9, "init"), c(10, "init");
  const auto ma = init_model(specs, a);
  const auto mb = init_model(specs, b);
  const auto mc = init_model(specs, c);
  CHECK(ma.params[0].bias == std::vector<double>{0.0, 0.0});
  CHECK(ma == mb);
  CHECK_FALSE(ma == mc);
}

TEST_CASE("mismatched layer widths are a configuration error") {
  const std::vector<LayerSpec> specs{{4, 5, Activation::relu, 0.0}, {6, 3, Activation::identity, 0.0}};
  RngStream rng(1, "init");
  CHECK_THROWS_AS(init_model(specs, rng), ConfigError);
  const std::vector<LayerSpec> bad_rate{{4, 3, Activation::relu, 1.0}};
  CHECK_THROWS_AS(init_model(bad_rate, rng), ConfigError);
}

TEST_CASE("forward on a zero model is uniform and predicts class 0") {
  const auto m = zero_model(small_net());
  RngStream rng(1, "dropout");
  const auto trace = forward(m, std::vector<double>{1, -2, 3, 0.5}, Mode::infer, rng);
  for (double p : trace.probabilities) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const std::vector<double> rows{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(predict(m, rows, 4) == std::vector<std::int32_t>{0, 0});
}

TEST_CASE("dropout disabled gives identical train and infer traces") {
  RngStream init(3, "init");
  const auto m = init_model(small_net(0.0), init);
  RngStream r1(5, "dropout"), r2(5, "dropout");
  const std::vector<double> x{0.3, -0.1, 0.7, 1.2};
  const auto t = forward(m, x, Mode::train, r1);
  const auto i = forward(m, x, Mode::infer, r2);
  CHECK(t.probabilities == i.probabilities);
  CHECK(t.outputs == i.outputs);
}

TEST_CASE("identity layer softmax matches hand evaluation") {
  MLPModel m = zero_model(std::vector<LayerSpec>{{2, 2, Activation::identity, 0.0}});
  m.params[0].weights(0, 0) = 1.0;
  m.params[0].weights(1, 1) = 1.0;
  const auto p = infer(m, std::vector<double>{2.0, 1.0});
  // softmax(2, 1) = (e / (e + 1), 1 / (e + 1))
  const double e = std::exp(1.0);
  CHECK(p[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-14));
  CHECK(argmax(p) == 0);
}

TEST_CASE("forward rejects bad inputs") {
  const auto m = zero_model(small_net());
  RngStream rng(1, "dropout");
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, 3}, Mode::infer, rng), DataError);
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, NAN, 4}, Mode::infer, rng), DataError);
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, INFINITY, 4}, Mode::infer, rng), DataError);
}

TEST_CASE("softmax sums to one for random nets and inputs") {
  RngStream gen(11, "test");
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t in = 1 + gen.below(6), hid = 1 + gen.below(8), out = 2 + gen.below(6);
    const std::vector<LayerSpec> specs{{in, hid, Activation::relu, 0.0}, {hid, out, Activation::identity, 0.0}};
    RngStream init(trial, "init");
    auto m = init_model(specs, init);
    const double scale = std::pow(10.0, gen.uniform(-2.0, 3.0));
    std::vector<double> x(in);
    for (double& v : x) v = scale * gen.normal();
    const auto p = infer(m, x);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    REQUIRE(std::abs(s - 1.0) <= 1e-9);
    for (double v : p) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("train-mode masks are inverted-dropout valued") {
  RngStream init(1, "init");
  const auto m = init_model(std::vector<LayerSpec>{{3, 200, Activation::relu, 0.25}, {200, 2, Activation::identity, 0.0}}, init);
  RngStream rng(2, "dropout");
  const auto t = forward(m, std::vector<double>{1, 2, 3}, Mode::train, rng);
  std::size_t zeros = 0;
  for (double v : t.masks[0]) {
    REQUIRE((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    zeros += v == 0.0;
  }
  CHECK(zeros > 20);
  CHECK(zeros < 80);
  for (double v : t.masks[1]) CHECK(v == 1.0);
}

TEST_CASE("inverted dropout preserves the expected activation") {
  RngStream init(4, "init");
  const auto m = init_model(std::vector<LayerSpec>{{5, 16, Activation::relu, 0.2}, {16, 2, Activation::identity, 0.0}}, init);
  const std::vector<double> x{0.5, -1.0, 2.0, 0.1, 1.5};
  RngStream rng(5, "dropout");
  const auto reference = forward(m, x, Mode::infer, rng).outputs[0];
  std::vector<double> mean(16, 0.0);
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) {
    const auto t = forward(m, x, Mode::train, rng);
    for (std::size_t u = 0; u < 16; ++u) mean[u] += t.outputs[0][u] / draws;
  }
  for (std::size_t u = 0; u < 16; ++u) {
    if (reference[u] > 1e-6) CHECK(std::abs(mean[u] - reference[u]) / reference[u] < 0.02);
    else CHECK(mean[u] == 0.0);
  }
}

TEST_CASE("cross_entropy closed forms") {
  CHECK(cross_entropy(std::vector<double>{0.0, 1.0, 0.0}, std::vector<double>{0, 1, 0}) <= 1.1e-12);
  std::vector<double> uniform(34, 1.0 / 34.0);
  std::vector<double> label(34, 0.0);
  label[7] = 1.0;
  CHECK(cross_entropy(uniform, label) == doctest::Approx(3.526361).epsilon(1e-6));
  CHECK(cross_entropy(uniform, label) == doctest::Approx(std::log(34.0)).epsilon(1e-14));
  CHECK(cross_entropy(std::vector<double>{0.25, 0.75}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.287682).epsilon(1e-6));
  CHECK(cross_entropy(std::vector<double>{0.25, 0.75}, std::size_t{1}) ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-15));
  // Clamp keeps confident mistakes finite.
  CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, std::size_t{1}) ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences") {
  RngStream gen(21, "test");
  for (int sample = 0; sample < 20; ++sample) {
    RngStream init(100 + sample, "init");
    const auto m = init_model(small_net(), init);
    std::vector<double> x(4);
    for (double& v : x) v = gen.normal();
    const std::size_t label = gen.below(3);
    RngStream rng(1, "dropout");
    const auto trace = forward(m, x, Mode::train, rng);
    const auto g = backward(m, trace, label);
    for (std::size_t k = 0; k < m.params.size(); ++k) {
      for (std::size_t i = 0; i < m.params[k].weights.values.size(); ++i) {
        const double fd = oracle::central_difference(m, k, false, i, x, label, 1e-5);
        REQUIRE(rel_error(g.layers[k].weights.values[i], fd) < 1e-4);
      }
      for (std::size_t i = 0; i < m.params[k].bias.size(); ++i) {
        const double fd = oracle::central_difference(m, k, true, i, x, label, 1e-5);
        REQUIRE(rel_error(g.layers[k].bias[i], fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("output bias gradient is p - y exactly") {
  RngStream init(8, "init");
  const auto m = init_model(small_net(), init);
  RngStream rng(1, "dropout");
  const auto trace = forward(m, std::vector<double>{0.2, 0.4, -0.3, 1.0}, Mode::train, rng);
  const std::vector<double> y{0, 0, 1};
  const auto g = backward(m, trace, y);
  for (std::size_t c = 0; c < 3; ++c) CHECK(g.layers[1].bias[c] == trace.probabilities[c] - y[c]);
  // One-hot and index forms agree.
  const auto g2 = backward(m, trace, std::size_t{2});
  CHECK(g2.layers[0].weights == g.layers[0].weights);
}

TEST_CASE("a dropped unit carries no gradient into its incoming weights") {
  RngStream init(2, "init");
  const auto m = init_model(std::vector<LayerSpec>{{4, 40, Activation::relu, 0.5}, {40, 3, Activation::identity, 0.0}}, init);
  RngStream rng(3, "dropout");
  const auto trace = forward(m, std::vector<double>{1, 1, 1, 1}, Mode::train, rng);
  const auto g = backward(m, trace, std::size_t{0});
  std::size_t dropped = 0;
  for (std::size_t u = 0; u < 40; ++u) {
    if (trace.masks[0][u] != 0.0) continue;
    ++dropped;
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.layers[0].weights(u, i) == 0.0);
    CHECK(g.layers[0].bias[u] == 0.0);
  }
  CHECK(dropped > 0);
}

TEST_CASE("sgd_step arithmetic") {
  MLPModel m = zero_model(std::vector<LayerSpec>{{1, 1, Activation::identity, 0.0}});
  m.params[0].weights(0, 0) = 1.0;
  auto g = GradientSet::zeros_like(m);
  g.layers[0].weights(0, 0) = 2.0;
  auto stepped = m;
  sgd_step(stepped, g, 0.01);
  CHECK(stepped.params[0].weights(0, 0) == doctest::Approx(0.98).epsilon(1e-15));

  auto unchanged = m;
  sgd_step(unchanged, GradientSet::zeros_like(m), 0.5);
  CHECK(unchanged == m);
  sgd_step(unchanged, g, 0.0);
  CHECK(unchanged == m);

  g.layers[0].bias[0] = NAN;
  auto guarded = m;
  CHECK_THROWS_AS(sgd_step(guarded, g, 0.01), NumericError);
  CHECK(guarded == m);
}

TEST_CASE("predict recovers labels on a separable toy set after training") {
  // Two well-separated blobs on a line; a softmax regression fits them.
  std::vector<double> xs;
  std::vector<std::int32_t> ys;
  for (int i = 0; i < 40; ++i) {
    const bool pos = i % 2 == 0;
    xs.push_back(pos ? 2.0 + 0.05 * i : -2.0 - 0.05 * i);
    xs.push_back(1.0);
    ys.push_back(pos ? 1 : 0);
  }
  RngStream init(1, "init");
  auto m = init_model(std::vector<LayerSpec>{{2, 2, Activation::identity, 0.0}}, init);
  RngStream rng(1, "dropout");
  for (int epoch = 0; epoch < 200; ++epoch) {
    auto g = GradientSet::zeros_like(m);
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const auto t = forward(m, std::span<const double>(xs).subspan(2 * i, 2), Mode::train, rng);
      accumulate_backward(m, t, static_cast<std::size_t>(ys[i]), g);
    }
    g.scale(1.0 / static_cast<double>(ys.size()));
    sgd_step(m, g, 0.5);
  }
  CHECK(predict(m, xs, 2) == ys);
  CHECK(predict(m, std::span<const double>(xs).first(2), 2).size() == 1);
}
