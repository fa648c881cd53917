#include <benchmark/benchmark.h>

#include <vector>

#include "emopipe/kmeans.hpp"
#include "emopipe/random.hpp"

namespace {

std::vector<double> random_vector(std::size_t dim, std::uint64_t seed) {
  emopipe::Rng rng(seed);
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_Distance(benchmark::State& state) {
  const auto metric = emopipe::kAllMetrics[state.range(0)];
  const auto x = random_vector(40, 1);
  const auto y = random_vector(40, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emopipe::distance(metric, x, y));
  state.SetLabel(std::string(emopipe::to_string(metric)));
}
BENCHMARK(BM_Distance)->DenseRange(0, 4);

void BM_Assign(benchmark::State& state) {
  emopipe::Centroids centroids;
  for (std::uint64_t i = 0; i < 8; ++i) centroids.push_back(random_vector(40, 10 + i));
  const auto point = random_vector(40, 3);
  for (auto _ : state) benchmark::DoNotOptimize(emopipe::assign(point, centroids, emopipe::Metric::Euclidean));
}
BENCHMARK(BM_Assign);

}  // namespace
