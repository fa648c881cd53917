#include <benchmark/benchmark.h>

#include <vector>

#include "emopipe/random.hpp"
#include "emopipe/vecstore.hpp"

namespace {

void BM_CanonicalKey(benchmark::State& state) {
  emopipe::Rng rng(1);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(emopipe::canonical_key(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CanonicalKey)->Arg(8)->Arg(40);

void BM_ParseVectorLine(benchmark::State& state) {
  emopipe::Rng rng(2);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.normal();
  const std::string line = emopipe::format_vector_line(emopipe::make_keyed(v));
  for (auto _ : state) benchmark::DoNotOptimize(emopipe::parse_vector_line(line));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(line.size()));
}
BENCHMARK(BM_ParseVectorLine);

}  // namespace
