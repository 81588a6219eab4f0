#include <benchmark/benchmark.h>

#include <vector>

#include "redus/data.hpp"
#include "redus/nn.hpp"
#include "redus/resampler.hpp"
#include "redus/trainer.hpp"

using namespace redus;

namespace {

std::vector<nn::LayerSpec> reference_specs() {
  const std::vector<std::size_t> hidden{256, 512, 256, 128};
  return nn::make_layer_specs(10, hidden, 3, 0.2);
}

void BM_ForwardBackward(benchmark::State& state) {
  RngStream init(1, "init");
  const auto model = nn::init_model(reference_specs(), init);
  RngStream dropout(1, "dropout");
  std::vector<double> x(10, 0.5);
  auto grads = nn::GradientSet::zeros_like(model);
  for (auto _ : state) {
    const auto trace = nn::forward(model, x, nn::Mode::train, dropout);
    nn::accumulate_backward(model, trace, 1, grads);
    benchmark::DoNotOptimize(grads.layers.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardBackward);

void BM_Infer(benchmark::State& state) {
  RngStream init(1, "init");
  const auto model = nn::init_model(reference_specs(), init);
  std::vector<double> x(10, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(nn::infer(model, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Infer);

// Weight update plus selection for 336000 samples.
void BM_WeightUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(3, "bench");
  resample::CorrectnessMask mask(n);
  for (auto& m : mask) m = rng.uniform() < 0.05 ? 0 : 1;
  auto table = resample::init_weights(n, 1.5e-6);
  for (auto _ : state) {
    table.weights.assign(n, 1.0 / static_cast<double>(n));
    resample::update_weights(table, mask);
    benchmark::DoNotOptimize(resample::select_samples(table));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_WeightUpdate)->Arg(336000)->Unit(benchmark::kMillisecond);

void BM_VanillaEpoch(benchmark::State& state) {
  RngStream gen(4, "synth");
  const auto data = data::synth_generate(static_cast<std::size_t>(state.range(0)), 10, 3, 6.0, gen);
  const std::vector<std::size_t> hidden{256};
  const auto specs = nn::make_layer_specs(10, hidden, 3, 0.2);
  RngStream init(1, "init");
  const auto model = nn::init_model(specs, init);
  train::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_vanilla(model, data, cfg).report.total_backprops);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VanillaEpoch)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
