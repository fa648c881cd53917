#pragma once

// A desk-scale map-reduce engine: inputs are cut into line-aligned splits,
// map tasks spill sorted runs per hash partition to scratch files, and reduce
// tasks k-way merge those runs so every reducer call sees its key's values in
// lexicographic order. Output is a function of the job alone, never of the
// worker count.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emopipe::gridrun {

// 64-bit FNV-1a with the standard offset basis and prime.
inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t stable_hash(std::string_view bytes) noexcept {
  std::uint64_t h = kFnvOffsetBasis;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

class Partitioner {
 public:
  explicit Partitioner(std::size_t partitions);

  std::size_t operator()(std::string_view key) const noexcept {
    return static_cast<std::size_t>(stable_hash(key) % partitions_);
  }
  std::size_t partitions() const noexcept { return partitions_; }

 private:
  std::size_t partitions_;
};

using Counters = std::map<std::string, std::int64_t, std::less<>>;

struct MapContext {
  std::size_t shard = 0;               // index into JobSpec::inputs
  std::size_t line = 0;                // 1-based line number within the shard
  const std::filesystem::path* path = nullptr;
};

class Emitter {
 public:
  virtual ~Emitter() = default;
  // Keys may not contain '\t' or '\n'; values may not contain '\n'.
  virtual void emit(std::string_view key, std::string_view value) = 0;
  virtual void increment(std::string_view counter, std::int64_t delta = 1) = 0;
};

class ReduceOutput {
 public:
  virtual ~ReduceOutput() = default;
  // Appends one output line; must not contain '\n'.
  virtual void write(std::string_view line) = 0;
  virtual void increment(std::string_view counter, std::int64_t delta = 1) = 0;
};

using Mapper = std::function<void(const MapContext&, std::string_view record, Emitter&)>;
using Reducer =
    std::function<void(std::string_view key, std::span<const std::string> values, ReduceOutput&)>;

struct JobSpec {
  std::string name = "job";
  std::vector<std::filesystem::path> inputs;
  Mapper mapper;
  Reducer reducer;
  std::size_t partitions = 1;
  std::size_t workers = 1;
  std::filesystem::path scratch_dir;   // empty: default_scratch_dir()
  std::filesystem::path output_dir;
  std::size_t split_bytes = 4u << 20;  // target size of one map task's input
  std::size_t spill_bytes = 64u << 20; // map-side buffer before a run is spilled
  std::size_t merge_fanin = 64;        // max runs merged at once in reduce
};

struct JobResult {
  std::vector<std::filesystem::path> outputs;  // part-00000 .. part-{R-1}
  Counters counters;
  std::size_t map_tasks = 0;
  std::uint64_t map_input_records = 0;
  std::uint64_t map_output_records = 0;
  std::uint64_t reduce_groups = 0;
  std::uint64_t spill_runs = 0;
};

// Runs the job to completion. Throws JobError when a mapper or reducer throws
// (naming the record or key), IoError on scratch/output failures and
// ConfigError on an invalid spec. Scratch files are removed either way.
JobResult run_job(const JobSpec& spec);

// A uniquely named directory under `root`, removed with its contents on
// destruction.
class ScratchDir {
 public:
  ScratchDir(const std::filesystem::path& root, const std::string& label);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// $EMOPIPE_SCRATCH if set, else the system temp directory.
std::filesystem::path default_scratch_dir();

std::string part_name(std::size_t partition);

// Concatenates output shards in partition order.
void concat_files(std::span<const std::filesystem::path> parts, const std::filesystem::path& dest);

}  // namespace emopipe::gridrun
