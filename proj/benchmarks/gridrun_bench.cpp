#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"

namespace {

namespace gr = emopipe::gridrun;

void BM_StableHash(benchmark::State& state) {
  const std::string key(static_cast<std::size_t>(state.range(0)), 'k');
  for (auto _ : state) benchmark::DoNotOptimize(gr::stable_hash(key));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StableHash)->Arg(16)->Arg(320);

// Identity job over n "key<TAB>value" records; args are (n, workers).
void BM_IdentityJob(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  gr::ScratchDir dir(gr::default_scratch_dir(), "bench");
  emopipe::Rng rng(7);
  std::vector<std::string> lines;
  lines.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    lines.push_back("k" + std::to_string(rng.uniform_index(n)) + "\t" + std::to_string(i));
  emopipe::io::write_lines(dir.path() / "in.txt", lines);

  gr::JobSpec spec;
  spec.inputs = {dir.path() / "in.txt"};
  spec.partitions = 4;
  spec.workers = static_cast<std::size_t>(state.range(1));
  spec.split_bytes = 256u << 10;
  spec.scratch_dir = dir.path();
  spec.output_dir = dir.path() / "out";
  spec.mapper = [](const gr::MapContext&, std::string_view record, gr::Emitter& out) {
    const auto tab = record.find('\t');
    out.emit(record.substr(0, tab), record.substr(tab + 1));
  };
  spec.reducer = [](std::string_view key, std::span<const std::string> values, gr::ReduceOutput& out) {
    for (const auto& v : values) out.write(std::string(key) + "\t" + v);
  };
  for (auto _ : state) benchmark::DoNotOptimize(gr::run_job(spec).reduce_groups);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IdentityJob)->Args({100000, 1})->Args({100000, 4})->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace
