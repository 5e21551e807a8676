#include <benchmark/benchmark.h>

#include "drd/dataset.hpp"
#include "drd/gmm.hpp"
#include "drd/mlp.hpp"
#include "drd/oracle.hpp"
#include "drd/rng.hpp"
#include "drd/schedule.hpp"
#include "drd/scoring.hpp"
#include "drd/selector.hpp"

namespace {

using namespace drd;

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = make_schedule({});
  return s;
}

const GmmWorld& world() {
  static const GmmWorld w = world_preset("W2overlap").world;
  return w;
}

void BM_AnalyticPredict(benchmark::State& state) {
  AnalyticDenoiser denoiser(world(), schedule());
  Vector x(2);
  x << 0.3, -0.7;
  for (auto _ : state) benchmark::DoNotOptimize(denoiser.predict(x, 400, 1));
}
BENCHMARK(BM_AnalyticPredict);

void BM_DdimReconstruct(benchmark::State& state) {
  AnalyticDenoiser denoiser(world(), schedule());
  Vector x(2);
  x << 0.3, -0.7;
  const Timestep t = schedule().grid_timestep(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ddim_reconstruct(x, t, 0, denoiser, schedule()));
}
BENCHMARK(BM_DdimReconstruct)->Arg(5)->Arg(20)->Arg(49);

void BM_MlpForward(benchmark::State& state) {
  auto model = init_mlp(2, 2, static_cast<int>(state.range(0)), 1);
  LearnedDenoiser denoiser(model, schedule());
  Vector x(2);
  x << 0.3, -0.7;
  for (auto _ : state) benchmark::DoNotOptimize(denoiser.predict(x, 400, 1));
}
BENCHMARK(BM_MlpForward)->Arg(32)->Arg(128);

void BM_ScoreDataset(benchmark::State& state) {
  AnalyticDenoiser denoiser(world(), schedule());
  auto data = sample_dataset(world(), 250, 3);
  const auto metric = squared_l2_metric();
  for (auto _ : state)
    benchmark::DoNotOptimize(score_dataset(data, {409, 409}, denoiser, schedule(), metric, 8, 5));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_ScoreDataset)->Unit(benchmark::kMillisecond);

void BM_DiffusionClassifier(benchmark::State& state) {
  AnalyticDenoiser denoiser(world(), schedule());
  Vector x(2);
  x << 0.3, -0.7;
  for (auto _ : state) benchmark::DoNotOptimize(diffusion_classifier_logprob(x, 409, denoiser, schedule(), 20, 7));
}
BENCHMARK(BM_DiffusionClassifier);

void BM_MiQuadrature(benchmark::State& state) {
  MiSettings settings;
  settings.points_2d = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mi_quadrature(world(), 409, schedule(), settings));
}
BENCHMARK(BM_MiQuadrature)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

// The packaged benchmark_main archive is built with a different LTO version.
BENCHMARK_MAIN();
