#include <benchmark/benchmark.h>

#include <random>

#include "marca/proxops.hpp"
#include "marca/reconstructor.hpp"
#include "marca/synthbench.hpp"
#include "marca/trainer.hpp"

using namespace marca;

namespace {

Matrix gaussian(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

void BM_Shrink(benchmark::State& state) {
  const Matrix m = gaussian(state.range(0), state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(proxops::shrink(m, 0.5));
  state.SetItemsProcessed(state.iterations() * m.size());
}
BENCHMARK(BM_Shrink)->Arg(200)->Arg(1000);

void BM_Svt(benchmark::State& state) {
  const Matrix m = gaussian(state.range(0), state.range(1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(proxops::svt(m, 1.0));
}
BENCHMARK(BM_Svt)->Args({200, 60})->Args({1000, 200})->Unit(benchmark::kMillisecond);

void BM_Procrustes(benchmark::State& state) {
  const Matrix m = gaussian(state.range(0), state.range(1), 3);
  for (auto _ : state) benchmark::DoNotOptimize(proxops::procrustes(m));
}
BENCHMARK(BM_Procrustes)->Args({200, 4})->Args({5000, 20})->Unit(benchmark::kMicrosecond);

void BM_TrainDefault(benchmark::State& state) {
  synth::SynthSpec spec = synth::SynthSpec::defaults();
  spec.features = state.range(0);
  spec.samples = state.range(1);
  const auto inst = synth::generate(spec);
  int iterations = 0;
  for (auto _ : state) {
    const auto b = train(inst.training, SolverConfig{});
    iterations = b.diagnostics.iterations;
  }
  state.counters["admm_iterations"] = iterations;
}
BENCHMARK(BM_TrainDefault)->Args({200, 60})->Args({1000, 120})->Unit(benchmark::kMillisecond);

void BM_Complete(benchmark::State& state) {
  const auto spec = synth::SynthSpec::defaults();
  const auto inst = synth::generate(spec);
  ModelBundle bundle = train(inst.training, SolverConfig{});
  const ReconConfig config;
  build_span(bundle, config.rank_rule);
  const auto h = synth::draw_holdout(inst.truth, spec, 0.3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(complete(h.y, h.w, bundle, config));
}
BENCHMARK(BM_Complete)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
