#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "emopipe/error.hpp"
#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"
#include "emopipe/text.hpp"
#include "test_support.hpp"

namespace emopipe::gridrun {
namespace {

using emopipe::testing::TempDir;

// Splits "key<TAB>value" records; a record without a tab is all key.
void identity_map(const MapContext&, std::string_view record, Emitter& out) {
  const auto tab = record.find('\t');
  if (tab == std::string_view::npos) {
    out.emit(record, "");
  } else {
    out.emit(record.substr(0, tab), record.substr(tab + 1));
  }
}

void identity_reduce(std::string_view key, std::span<const std::string> values, ReduceOutput& out) {
  for (const auto& v : values) out.write(std::string(key) + "\t" + v);
}

void word_map(const MapContext&, std::string_view record, Emitter& out) {
  for (auto w : text::split(record, ' ')) {
    if (w.empty()) continue;
    out.emit(w, "1");
    out.increment("words");
  }
}

void count_reduce(std::string_view key, std::span<const std::string> values, ReduceOutput& out) {
  out.write(std::string(key) + "\t" + std::to_string(values.size()));
}

std::vector<std::string> random_records(std::size_t n, std::uint64_t seed, std::size_t key_space) {
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back("k" + std::to_string(rng.uniform_index(key_space)) + "\tv" +
                  std::to_string(rng.uniform_index(1000000)));
  }
  return out;
}

JobSpec identity_job(std::vector<std::filesystem::path> inputs, const std::filesystem::path& out) {
  JobSpec spec;
  spec.name = "identity";
  spec.inputs = std::move(inputs);
  spec.mapper = identity_map;
  spec.reducer = identity_reduce;
  spec.output_dir = out;
  return spec;
}

TEST(StableHash, ReferenceValues) {
  EXPECT_EQ(stable_hash(""), 14695981039346656037ull);
  EXPECT_EQ(stable_hash("a"), 12638187200555641996ull);
  EXPECT_EQ(stable_hash("foobar"), 9625390261332436968ull);
  EXPECT_EQ(stable_hash("key"), stable_hash(std::string("key")));
  static_assert(stable_hash("") == kFnvOffsetBasis);
}

TEST(Partitioner, ModuloOfHash) {
  const Partitioner p(7);
  for (std::string k : {"", "a", "foobar", "0.000000,1.000000"}) EXPECT_EQ(p(k), stable_hash(k) % 7);
  EXPECT_THROW(Partitioner(0), ConfigError);
}

TEST(RunJob, IdentityIsSortedInput) {
  TempDir tmp;
  const auto records = random_records(500, 1, 50);
  io::write_lines(tmp / "in.txt", records);
  for (std::size_t workers : {1u, 3u}) {
    auto spec = identity_job({tmp / "in.txt"}, tmp / ("out" + std::to_string(workers)));
    spec.workers = workers;
    const auto result = run_job(spec);
    ASSERT_EQ(result.outputs.size(), 1u);
    EXPECT_EQ(result.outputs[0].filename(), "part-00000");
    auto expected = records;
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(io::read_lines(result.outputs[0]), expected);
    EXPECT_EQ(result.map_input_records, 500u);
    EXPECT_EQ(result.map_output_records, 500u);
  }
}

TEST(RunJob, WordCount) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", {"a b a"});
  JobSpec spec;
  spec.inputs = {tmp / "in.txt"};
  spec.mapper = word_map;
  spec.reducer = count_reduce;
  spec.output_dir = tmp / "out";
  const auto result = run_job(spec);
  EXPECT_EQ(io::read_lines(result.outputs[0]), (std::vector<std::string>{"a\t2", "b\t1"}));
  EXPECT_EQ(result.counters.at("words"), 3);
  EXPECT_EQ(result.reduce_groups, 2u);
}

TEST(RunJob, ReducerSeesSortedValues) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", {"k\tz", "k\ta", "j\tq", "k\tm"});
  JobSpec spec = identity_job({tmp / "in.txt"}, tmp / "out");
  std::vector<std::vector<std::string>> seen;
  std::vector<std::string> keys;
  spec.reducer = [&](std::string_view key, std::span<const std::string> values, ReduceOutput&) {
    keys.emplace_back(key);
    seen.emplace_back(values.begin(), values.end());
  };
  run_job(spec);
  EXPECT_EQ(keys, (std::vector<std::string>{"j", "k"}));
  EXPECT_EQ(seen[1], (std::vector<std::string>{"a", "m", "z"}));
}

TEST(RunJob, EmptyInput) {
  TempDir tmp;
  io::write_file(tmp / "in.txt", "");
  auto spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.partitions = 3;
  const auto result = run_job(spec);
  ASSERT_EQ(result.outputs.size(), 3u);
  for (const auto& p : result.outputs) EXPECT_EQ(io::read_file(p), "");
}

// Tiny split and spill sizes force many map tasks, many runs per partition
// and a multi-pass merge.
JobSpec stressed(JobSpec spec) {
  spec.split_bytes = 700;
  spec.spill_bytes = 300;
  spec.merge_fanin = 2;
  return spec;
}

TEST(RunJob, WorkerCountInvarianceAndConservation) {
  TempDir tmp;
  io::write_lines(tmp / "a.txt", random_records(2000, 2, 300));
  io::write_lines(tmp / "b.txt", random_records(1500, 3, 300));
  std::vector<std::string> reference;
  std::vector<std::string> inputs = io::read_lines(tmp / "a.txt");
  for (auto& l : io::read_lines(tmp / "b.txt")) inputs.push_back(l);
  std::sort(inputs.begin(), inputs.end());
  for (std::size_t workers : {1u, 2u, 5u, 8u}) {
    auto spec = stressed(identity_job({tmp / "a.txt", tmp / "b.txt"}, tmp / ("w" + std::to_string(workers))));
    spec.partitions = 4;
    spec.workers = workers;
    const auto result = run_job(spec);
    EXPECT_GT(result.map_tasks, 10u);
    EXPECT_GT(result.spill_runs, 4u * 10u);
    const auto bytes = emopipe::testing::file_bytes(result.outputs);
    if (reference.empty()) {
      reference = bytes;
    } else {
      EXPECT_EQ(bytes, reference) << "workers=" << workers;
    }
    EXPECT_EQ(emopipe::testing::sorted_lines(result.outputs), inputs);
  }
}

TEST(RunJob, PartitionsAreDisjointAndHashRouted) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", random_records(3000, 4, 500));
  auto spec = stressed(identity_job({tmp / "in.txt"}, tmp / "out"));
  spec.partitions = 5;
  spec.workers = 3;
  const auto result = run_job(spec);
  const Partitioner part(5);
  std::map<std::string, std::size_t> home;
  for (std::size_t p = 0; p < result.outputs.size(); ++p) {
    std::string prev_key;
    for (const auto& line : io::read_lines(result.outputs[p])) {
      const std::string key = line.substr(0, line.find('\t'));
      EXPECT_EQ(part(key), p);
      EXPECT_LE(prev_key, key);
      prev_key = key;
      auto [it, inserted] = home.emplace(key, p);
      EXPECT_EQ(it->second, p);
    }
  }
}

TEST(RunJob, MapperFailureNamesRecord) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", {"ok\t1", "ok\t2", "boom\t3"});
  auto spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.mapper = [](const MapContext& ctx, std::string_view record, Emitter& out) {
    if (record.starts_with("boom")) throw std::runtime_error("bad record");
    identity_map(ctx, record, out);
  };
  try {
    run_job(spec);
    FAIL() << "expected JobError";
  } catch (const JobError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("in.txt:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("boom\t3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bad record"), std::string::npos) << msg;
  }
}

TEST(RunJob, ReducerFailureNamesKey) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", {"fine\t1", "broken\t2"});
  auto spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.reducer = [](std::string_view key, std::span<const std::string>, ReduceOutput&) {
    if (key == "broken") throw std::runtime_error("nope");
  };
  try {
    run_job(spec);
    FAIL() << "expected JobError";
  } catch (const JobError& e) {
    EXPECT_NE(std::string(e.what()).find("'broken'"), std::string::npos) << e.what();
  }
}

TEST(RunJob, InvalidSpecs) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", {"a"});
  auto spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.workers = 0;
  EXPECT_THROW(run_job(spec), ConfigError);
  spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.partitions = 0;
  EXPECT_THROW(run_job(spec), ConfigError);
  spec = identity_job({tmp / "missing.txt"}, tmp / "out");
  EXPECT_THROW(run_job(spec), IoError);
  spec = identity_job({tmp / "in.txt"}, tmp / "out");
  spec.mapper = [](const MapContext&, std::string_view, Emitter& out) { out.emit("bad\tkey", "v"); };
  EXPECT_THROW(run_job(spec), JobError);
}

TEST(RunJob, ScratchIsCleanedUp) {
  TempDir tmp;
  io::write_lines(tmp / "in.txt", random_records(400, 5, 40));
  auto spec = stressed(identity_job({tmp / "in.txt"}, tmp / "out"));
  spec.scratch_dir = tmp / "scratch";
  std::filesystem::create_directories(spec.scratch_dir);
  run_job(spec);
  EXPECT_TRUE(std::filesystem::is_empty(spec.scratch_dir));
  spec.mapper = [](const MapContext&, std::string_view, Emitter&) { throw std::runtime_error("x"); };
  EXPECT_THROW(run_job(spec), JobError);
  EXPECT_TRUE(std::filesystem::is_empty(spec.scratch_dir));
}

TEST(RunJob, SpeedupWithWorkers) {
  if (std::thread::hardware_concurrency() < 4) {
    GTEST_SKIP() << "needs at least 4 hardware threads, have " << std::thread::hardware_concurrency();
  }
  TempDir tmp;
  io::write_lines(tmp / "in.txt", random_records(1000000, 6, 100000));
  auto timed = [&](std::size_t workers) {
    auto spec = identity_job({tmp / "in.txt"}, tmp / ("out" + std::to_string(workers)));
    spec.workers = workers;
    spec.partitions = 4;
    spec.split_bytes = 1u << 20;
    spec.mapper = [](const MapContext& ctx, std::string_view record, Emitter& out) {
      // Busy work proportional to the record.
      std::uint64_t h = 0;
      for (int i = 0; i < 200; ++i) h = stable_hash(record) ^ (h * 31);
      if (h == 42) out.increment("never");
      identity_map(ctx, record, out);
    };
    const auto start = std::chrono::steady_clock::now();
    run_job(spec);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const double one = timed(1);
  const double four = timed(4);
  EXPECT_GE(one / four, 1.5) << "W=1 " << one << "s, W=4 " << four << "s";
}

TEST(Concat, PartitionOrder) {
  TempDir tmp;
  io::write_file(tmp / "p0", "a\n");
  io::write_file(tmp / "p1", "b\nc\n");
  const std::vector<std::filesystem::path> parts{tmp / "p0", tmp / "p1"};
  concat_files(parts, tmp / "all");
  EXPECT_EQ(io::read_file(tmp / "all"), "a\nb\nc\n");
  EXPECT_EQ(part_name(12), "part-00012");
}

}  // namespace
}  // namespace emopipe::gridrun
