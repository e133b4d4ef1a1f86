#include <benchmark/benchmark.h>

#include <random>

#include "cridiff/labels.hpp"
#include "cridiff/metrics.hpp"
#include "cridiff/phantom.hpp"

namespace {

cridiff::Mask phantom_mask(int side, std::uint64_t seed) {
  cridiff::data::PhantomSpec spec;
  spec.height = side;
  spec.width = side;
  std::mt19937_64 rng(seed);
  return cridiff::data::generate_phantom(spec, rng).mask;
}

void BM_DistanceTransform(benchmark::State& state) {
  const auto mask = phantom_mask(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(cridiff::labels::distance_transform(mask));
  state.SetComplexityN(state.range(0) * state.range(0));
}
BENCHMARK(BM_DistanceTransform)->RangeMultiplier(2)->Range(32, 512)->Complexity(benchmark::oN);

void BM_DecoupleLabels(benchmark::State& state) {
  const auto mask = phantom_mask(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(cridiff::labels::decouple_labels(mask));
}
BENCHMARK(BM_DecoupleLabels)->Arg(64)->Arg(256);

void BM_Evaluate(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto a = phantom_mask(side, 3);
  const auto b = phantom_mask(side, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cridiff::metrics::evaluate(a, b));
}
BENCHMARK(BM_Evaluate)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
