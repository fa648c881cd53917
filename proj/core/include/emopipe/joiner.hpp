#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emopipe/dataset.hpp"
#include "emopipe/kmeans.hpp"

namespace emopipe {

struct JoinedRecord {
  std::string key;
  std::size_t cluster = 0;
  ClassId label{1};

  auto operator<=>(const JoinedRecord&) const = default;
};

struct JoinReport {
  std::uint64_t matched = 0;          // joined records emitted
  std::uint64_t unmatched_left = 0;   // left lines whose key is absent on the right
  std::uint64_t unmatched_right = 0;  // right lines whose key is absent on the left
  std::uint64_t collision_keys = 0;   // keys occurring more than once on either side

  bool operator==(const JoinReport&) const = default;

  // "matched=.. unmatched_left=.. unmatched_right=.. collision_keys=.."
  std::string summary() const;
  // One `name=value` line per field.
  std::string to_kv() const;
};

struct JoinOptions {
  EngineParams engine;
  // Abort when one key's left x right product exceeds this.
  std::uint64_t max_product = 10000;
};

struct JoinResult {
  std::vector<std::filesystem::path> shards;  // `key<TAB>clusterId<TAB>classId`, key-sorted
  JoinReport report;
};

// Reduce-side inner join of a clustered-points file (`clusterId<TAB>key`) with
// a labels file (`key<TAB>classId`) on gridrun. Duplicate keys produce the
// cross product. Shards are written to `output_dir`.
JoinResult mr_join(const std::filesystem::path& left, const std::filesystem::path& right,
                   const std::filesystem::path& output_dir, const JoinOptions& options = {});

struct NestedJoinResult {
  std::vector<JoinedRecord> records;
  JoinReport report;
};

// Literal double loop over both files: the correctness oracle and quadratic
// baseline for mr_join.
NestedJoinResult nested_loop_join(const std::filesystem::path& left, const std::filesystem::path& right);

std::vector<JoinedRecord> read_joined(const std::vector<std::filesystem::path>& shards);
void write_labels(const std::filesystem::path& path, const std::vector<std::pair<std::string, ClassId>>& labels);

struct BenchmarkRow {
  std::string method;  // "nested" or "mapreduce"
  std::size_t n = 0;
  std::vector<double> seconds;
  double median = 0.0;
};

struct JoinBenchmarkConfig {
  std::vector<std::size_t> nested_sizes;
  std::vector<std::size_t> mr_sizes;
  std::size_t trials = 3;
  EngineParams engine;
  std::uint64_t seed = 1;
};

struct JoinBenchmarkResult {
  std::vector<BenchmarkRow> rows;
  double nested_slope = 0.0;  // least-squares slope of log(median) on log(n)
  double mr_slope = 0.0;
};

// Times both join methods on synthetic one-to-one keyed files; trials run
// sequentially. A method with fewer than two sizes reports slope 0.
JoinBenchmarkResult join_benchmark(const JoinBenchmarkConfig& config);

// Writes a left/right pair with n lines each, every key matched once, in
// independent random orders.
void write_synthetic_join_inputs(const std::filesystem::path& left, const std::filesystem::path& right,
                                 std::size_t n, std::uint64_t seed);

double loglog_slope(const std::vector<std::size_t>& n, const std::vector<double>& seconds);

}  // namespace emopipe
