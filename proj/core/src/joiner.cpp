#include "emopipe/joiner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "emopipe/error.hpp"
#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"
#include "emopipe/text.hpp"
#include "emopipe/vecstore.hpp"

namespace emopipe {

namespace fs = std::filesystem;

std::string JoinReport::summary() const {
  return "matched=" + std::to_string(matched) + " unmatched_left=" + std::to_string(unmatched_left) +
         " unmatched_right=" + std::to_string(unmatched_right) + " collision_keys=" + std::to_string(collision_keys);
}

std::string JoinReport::to_kv() const {
  return "matched=" + std::to_string(matched) + "\nunmatched_left=" + std::to_string(unmatched_left) +
         "\nunmatched_right=" + std::to_string(unmatched_right) + "\ncollision_keys=" +
         std::to_string(collision_keys) + "\n";
}

namespace {

// `clusterId<TAB>key`
std::pair<std::string_view, std::size_t> parse_left(std::string_view line) {
  const auto f = text::split(line, '\t');
  const auto cluster = f.size() == 2 ? text::parse_int<std::size_t>(f[0]) : std::nullopt;
  if (!cluster || f[1].empty()) throw DomainError("expected clusterId<TAB>key");
  return {f[1], *cluster};
}

// `key<TAB>classId`
std::pair<std::string_view, ClassId> parse_right(std::string_view line) {
  const auto f = text::split(line, '\t');
  const auto cls = f.size() == 2 ? text::parse_int<int>(f[1]) : std::nullopt;
  if (!cls || f[0].empty() || *cls < 1 || *cls > kClassCount) throw DomainError("expected key<TAB>classId (1..8)");
  return {f[0], ClassId(*cls)};
}

template <typename Parse>
auto read_side(const fs::path& path, Parse parse) {
  using Value = decltype(parse(std::string_view{}).second);
  std::vector<std::pair<std::string, Value>> rows;
  io::LineReader in(path);
  std::string line;
  while (in.next(line)) {
    try {
      auto [key, value] = parse(line);
      rows.emplace_back(std::string(key), value);
    } catch (const DomainError& e) {
      throw ParseError(in.name(), in.line_number(), e.what());
    }
  }
  return rows;
}

std::string joined_line(std::string_view key, std::string_view cluster, std::string_view cls) {
  std::string line;
  line.reserve(key.size() + cluster.size() + cls.size() + 2);
  line.append(key);
  line.push_back('\t');
  line.append(cluster);
  line.push_back('\t');
  line.append(cls);
  return line;
}

}  // namespace

JoinResult mr_join(const fs::path& left, const fs::path& right, const fs::path& output_dir,
                   const JoinOptions& options) {
  gridrun::JobSpec job;
  job.name = "join";
  job.inputs = {left, right};
  job.partitions = options.engine.partitions;
  job.workers = options.engine.workers;
  job.scratch_dir = options.engine.scratch_dir;
  job.output_dir = output_dir;
  job.mapper = [](const gridrun::MapContext& ctx, std::string_view record, gridrun::Emitter& out) {
    std::string tagged;
    if (ctx.shard == 0) {
      const auto [key, cluster] = parse_left(record);
      tagged = "L\t" + std::to_string(cluster);
      out.emit(key, tagged);
    } else {
      const auto [key, cls] = parse_right(record);
      tagged = "R\t" + std::to_string(cls.value());
      out.emit(key, tagged);
    }
  };
  const std::uint64_t bound = options.max_product;
  job.reducer = [bound](std::string_view key, std::span<const std::string> values, gridrun::ReduceOutput& out) {
    // Values arrive sorted, so every "L\t..." precedes every "R\t...".
    const auto split = std::find_if(values.begin(), values.end(), [](const std::string& v) { return v[0] == 'R'; });
    const auto lefts = static_cast<std::uint64_t>(split - values.begin());
    const auto rights = static_cast<std::uint64_t>(values.end() - split);
    if (lefts > 1 || rights > 1) out.increment("collision_keys");
    if (rights == 0) {
      out.increment("unmatched_left", static_cast<std::int64_t>(lefts));
      return;
    }
    if (lefts == 0) {
      out.increment("unmatched_right", static_cast<std::int64_t>(rights));
      return;
    }
    if (lefts * rights > bound) {
      throw JobError("join key '" + std::string(key) + "' produces " + std::to_string(lefts * rights) +
                     " records, above the bound of " + std::to_string(bound));
    }
    for (auto l = values.begin(); l != split; ++l) {
      for (auto r = split; r != values.end(); ++r) {
        out.write(joined_line(key, std::string_view(*l).substr(2), std::string_view(*r).substr(2)));
      }
    }
    out.increment("matched", static_cast<std::int64_t>(lefts * rights));
  };

  const auto result = gridrun::run_job(job);
  JoinResult out;
  out.shards = result.outputs;
  auto counter = [&result](const char* name) -> std::uint64_t {
    auto it = result.counters.find(name);
    return it == result.counters.end() ? 0 : static_cast<std::uint64_t>(it->second);
  };
  out.report.matched = counter("matched");
  out.report.unmatched_left = counter("unmatched_left");
  out.report.unmatched_right = counter("unmatched_right");
  out.report.collision_keys = counter("collision_keys");
  return out;
}

NestedJoinResult nested_loop_join(const fs::path& left, const fs::path& right) {
  const auto lrows = read_side(left, parse_left);
  const auto rrows = read_side(right, parse_right);
  NestedJoinResult out;
  std::vector<bool> right_matched(rrows.size(), false);
  for (const auto& [lkey, cluster] : lrows) {
    bool matched = false;
    for (std::size_t j = 0; j < rrows.size(); ++j) {
      if (rrows[j].first == lkey) {
        out.records.push_back({lkey, cluster, rrows[j].second});
        right_matched[j] = true;
        matched = true;
      }
    }
    if (!matched) ++out.report.unmatched_left;
  }
  out.report.matched = out.records.size();
  out.report.unmatched_right = static_cast<std::uint64_t>(std::count(right_matched.begin(), right_matched.end(), false));

  std::map<std::string_view, std::pair<std::size_t, std::size_t>> multiplicity;
  for (const auto& row : lrows) ++multiplicity[row.first].first;
  for (const auto& row : rrows) ++multiplicity[row.first].second;
  for (const auto& [key, m] : multiplicity) {
    if (m.first > 1 || m.second > 1) ++out.report.collision_keys;
  }
  return out;
}

std::vector<JoinedRecord> read_joined(const std::vector<fs::path>& shards) {
  std::vector<JoinedRecord> out;
  for (const auto& shard : shards) {
    io::LineReader in(shard);
    std::string line;
    while (in.next(line)) {
      const auto f = text::split(line, '\t');
      const auto cluster = f.size() == 3 ? text::parse_int<std::size_t>(f[1]) : std::nullopt;
      const auto cls = f.size() == 3 ? text::parse_int<int>(f[2]) : std::nullopt;
      if (!cluster || !cls || *cls < 1 || *cls > kClassCount) {
        throw ParseError(in.name(), in.line_number(), "expected key<TAB>clusterId<TAB>classId");
      }
      out.push_back({std::string(f[0]), *cluster, ClassId(*cls)});
    }
  }
  return out;
}

void write_labels(const fs::path& path, const std::vector<std::pair<std::string, ClassId>>& labels) {
  io::LineWriter out(path);
  for (const auto& [key, cls] : labels) out.write(key + "\t" + std::to_string(cls.value()));
  out.close();
}

// ---------------------------------------------------------------------------
// Benchmark

void write_synthetic_join_inputs(const fs::path& left, const fs::path& right, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v[3] = {rng.normal(), rng.normal(), static_cast<double>(i)};
    keys[i] = canonical_key(v);
  }
  auto shuffled = [&rng](std::vector<std::size_t> order) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    return order;
  };
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  {
    io::LineWriter out(left);
    for (std::size_t i : shuffled(identity)) out.write(std::to_string(i % 8) + "\t" + keys[i]);
    out.close();
  }
  {
    io::LineWriter out(right);
    for (std::size_t i : shuffled(identity)) out.write(keys[i] + "\t" + std::to_string(1 + (i * 7) % 8));
    out.close();
  }
}

double loglog_slope(const std::vector<std::size_t>& n, const std::vector<double>& seconds) {
  if (n.size() < 2 || n.size() != seconds.size()) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(static_cast<double>(n[i]));
    const double y = std::log(seconds[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

template <typename Fn>
double time_seconds(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

JoinBenchmarkResult join_benchmark(const JoinBenchmarkConfig& config) {
  if (config.trials == 0) throw ConfigError("trials must be >= 1");
  gridrun::ScratchDir work(config.engine.scratch_dir, "join-bench");
  JoinBenchmarkResult result;

  auto run_method = [&](const std::string& method, const std::vector<std::size_t>& sizes) {
    std::vector<double> medians;
    for (std::size_t n : sizes) {
      const fs::path left = work.path() / ("left-" + std::to_string(n) + ".tsv");
      const fs::path right = work.path() / ("right-" + std::to_string(n) + ".tsv");
      write_synthetic_join_inputs(left, right, n, config.seed + n);
      BenchmarkRow row{method, n, {}, 0.0};
      for (std::size_t t = 0; t < config.trials; ++t) {
        const fs::path out = work.path() / ("out-" + method + "-" + std::to_string(n) + "-" + std::to_string(t));
        row.seconds.push_back(time_seconds([&] {
          if (method == "nested") {
            const auto r = nested_loop_join(left, right);
            if (r.report.matched != n) throw Error("nested join benchmark lost records");
          } else {
            JoinOptions opts;
            opts.engine = config.engine;
            const auto r = mr_join(left, right, out, opts);
            if (r.report.matched != n) throw Error("mapreduce join benchmark lost records");
          }
        }));
        std::error_code ec;
        fs::remove_all(out, ec);
      }
      row.median = median(row.seconds);
      medians.push_back(row.median);
      result.rows.push_back(std::move(row));
      fs::remove(left);
      fs::remove(right);
    }
    return loglog_slope(sizes, medians);
  };

  result.nested_slope = run_method("nested", config.nested_sizes);
  result.mr_slope = run_method("mapreduce", config.mr_sizes);
  return result;
}

}  // namespace emopipe
