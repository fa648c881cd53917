#include "emopipe/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "emopipe/error.hpp"
#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"
#include "emopipe/text.hpp"

namespace emopipe {

namespace fs = std::filesystem;

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Euclidean: return "euclidean";
    case Metric::SquaredEuclidean: return "squared-euclidean";
    case Metric::Manhattan: return "manhattan";
    case Metric::Cosine: return "cosine";
    case Metric::Tanimoto: return "tanimoto";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (expected euclidean, squared-euclidean, manhattan, cosine or tanimoto)");
}

double distance(Metric metric, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DomainError("dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  const std::size_t n = x.size();
  switch (metric) {
    case Metric::Euclidean:
    case Metric::SquaredEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
      }
      return metric == Metric::Euclidean ? std::sqrt(s) : s;
    }
    case Metric::Manhattan: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(x[i] - y[i]);
      return s;
    }
    case Metric::Cosine:
    case Metric::Tanimoto: {
      double dot = 0.0, xx = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
      }
      double sim;
      if (metric == Metric::Cosine) {
        if (xx == 0.0 || yy == 0.0) throw DomainError("cosine distance of a zero-norm vector");
        sim = dot / (std::sqrt(xx) * std::sqrt(yy));
      } else {
        const double denom = xx + yy - dot;
        if (denom == 0.0) throw DomainError("tanimoto distance of two zero vectors");
        sim = dot / denom;
      }
      // Rounding can push 1 - sim slightly below zero for parallel vectors.
      return std::max(0.0, 1.0 - sim);
    }
  }
  return 0.0;
}

Centroids init_centroids(std::span<const KeyedVector> data, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw InitializationError("k must be >= 1");
  Rng rng(seed);
  std::unordered_set<std::string_view> seen;
  Centroids reservoir;
  reservoir.reserve(k);
  std::uint64_t distinct = 0;
  for (const auto& kv : data) {
    if (!seen.insert(kv.key).second) continue;
    if (distinct < k) {
      reservoir.push_back(kv.values);
    } else {
      const std::uint64_t j = rng.uniform_index(distinct + 1);
      if (j < k) reservoir[j] = kv.values;
    }
    ++distinct;
  }
  if (distinct < k) {
    throw InitializationError("need " + std::to_string(k) + " distinct vectors, found " +
                              std::to_string(distinct));
  }
  return reservoir;
}

std::size_t assign(std::span<const double> point, const Centroids& centroids, Metric metric) {
  if (centroids.empty()) throw DomainError("no centroids");
  std::size_t best = 0;
  double best_d = distance(metric, point, centroids[0]);
  for (std::size_t j = 1; j < centroids.size(); ++j) {
    const double d = distance(metric, point, centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace {

struct SumAccumulator {
  std::vector<double> sum;
  std::size_t count = 0;

  void add(std::span<const double> v) {
    if (sum.empty()) sum.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
    ++count;
  }
  std::vector<double> mean() const {
    std::vector<double> m(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) m[i] = sum[i] / static_cast<double>(count);
    return m;
  }
};

std::string cluster_key(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", c);
  return buf;
}

std::string values_text(const std::vector<double>& v) {
  std::string s;
  text::append_csv_doubles(s, v);
  return s;
}

}  // namespace

CentroidUpdate update_centroids(std::span<const KeyedVector> data, std::span<const std::size_t> assignments,
                                const Centroids& previous) {
  if (assignments.size() != data.size()) {
    throw DomainError("assignment count " + std::to_string(assignments.size()) + " != data count " +
                      std::to_string(data.size()));
  }
  const std::size_t k = previous.size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (assignments[i] >= k) throw DomainError("cluster index out of range");
    members[assignments[i]].push_back(i);
  }
  CentroidUpdate out;
  out.centroids.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& m = members[j];
    if (m.empty()) {
      out.centroids[j] = previous[j];
      ++out.empty_clusters;
      continue;
    }
    std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      if (data[a].key != data[b].key) return data[a].key < data[b].key;
      return values_text(data[a].values) < values_text(data[b].values);
    });
    SumAccumulator acc;
    for (std::size_t i : m) acc.add(data[i].values);
    out.centroids[j] = acc.mean();
  }
  return out;
}

void KMeansParams::validate() const {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (max_iter == 0) throw ConfigError("max_iter must be >= 1");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and >= 0");
}

namespace {

// Parses the vector line handed to a mapper; dimension must match.
KeyedVector parse_for_map(std::string_view record, std::size_t dim) {
  auto kv = parse_vector_line(record);
  if (!kv) throw DomainError("malformed vector line");
  if (kv->values.size() != dim) {
    throw DomainError("expected " + std::to_string(dim) + " components, got " + std::to_string(kv->values.size()));
  }
  return std::move(*kv);
}

std::vector<std::string> read_all_parts(const std::vector<fs::path>& parts) {
  std::vector<std::string> lines;
  for (const auto& p : parts) {
    auto part = io::read_lines(p);
    lines.insert(lines.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return lines;
}

}  // namespace

KMeansResult run_kmeans_from(const fs::path& vectors, Centroids initial, const KMeansParams& params,
                             const EngineParams& engine) {
  params.validate();
  if (initial.size() != params.k) throw InitializationError("initial centroid count != k");
  const std::size_t dim = initial.front().size();
  gridrun::ScratchDir work(engine.scratch_dir, "kmeans");

  KMeansResult result;
  ClusterModel& model = result.model;
  model.k = params.k;
  model.metric = params.metric;
  model.centroids = std::move(initial);

  for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
    const Centroids current = model.centroids;
    gridrun::JobSpec job;
    job.name = "kmeans-iter";
    job.inputs = {vectors};
    job.partitions = engine.partitions;
    job.workers = engine.workers;
    job.scratch_dir = work.path();
    job.output_dir = work.path() / ("iter-" + std::to_string(iter));
    job.mapper = [&current, &params, dim](const gridrun::MapContext&, std::string_view record, gridrun::Emitter& out) {
      const auto kv = parse_for_map(record, dim);
      const std::size_t c = assign(kv.values, current, params.metric);
      const double d = distance(params.metric, kv.values, current[c]);
      const auto tab = record.find('\t');
      std::string value = kv.key;
      value.push_back('\t');
      value.append(record.substr(tab + 1));
      value.push_back('\t');
      text::append_double(value, d);
      out.emit(cluster_key(c), value);
    };
    job.reducer = [dim](std::string_view key, std::span<const std::string> values, gridrun::ReduceOutput& out) {
      SumAccumulator acc;
      double cost = 0.0;
      for (const auto& v : values) {
        const auto fields = text::split(v, '\t');
        auto point = text::parse_csv_doubles(fields.at(1));
        auto d = text::parse_double(fields.at(2));
        if (!point || point->size() != dim || !d) throw DomainError("corrupt shuffle value");
        acc.add(*point);
        cost += *d;
      }
      std::string line(key);
      line += '\t';
      line += std::to_string(acc.count);
      line += '\t';
      text::append_double(line, cost);
      line += '\t';
      text::append_csv_doubles(line, acc.mean());
      out.write(line);
    };
    const auto job_result = gridrun::run_job(job);

    std::vector<double> cluster_cost(params.k, 0.0);
    Centroids next = current;
    std::vector<bool> filled(params.k, false);
    for (const auto& line : read_all_parts(job_result.outputs)) {
      const auto f = text::split(line, '\t');
      const auto c = text::parse_int<std::size_t>(f.at(0));
      const auto cost = text::parse_double(f.at(2));
      auto mean = text::parse_csv_doubles(f.at(3));
      if (!c || *c >= params.k || !cost || !mean) throw IoError("corrupt kmeans reducer output");
      next[*c] = std::move(*mean);
      cluster_cost[*c] = *cost;
      filled[*c] = true;
    }
    double total = 0.0;
    for (double c : cluster_cost) total += c;
    for (bool f : filled) model.empty_clusters += f ? 0 : 1;
    model.cost_trace.push_back(total);
    model.iterations_run = iter + 1;

    bool moved = false;
    for (std::size_t j = 0; j < params.k; ++j) {
      if (!(distance(params.metric, current[j], next[j]) < params.epsilon)) moved = true;
    }
    model.centroids = std::move(next);
    std::error_code ec;
    fs::remove_all(job.output_dir, ec);
    if (!moved) {
      model.converged = true;
      break;
    }
  }

  // Final classification against the final centroids.
  gridrun::JobSpec job;
  job.name = "kmeans-assign";
  job.inputs = {vectors};
  job.partitions = engine.partitions;
  job.workers = engine.workers;
  job.scratch_dir = work.path();
  job.output_dir = work.path() / "assign";
  const Centroids& final_centroids = model.centroids;
  job.mapper = [&final_centroids, &params, dim](const gridrun::MapContext&, std::string_view record,
                                               gridrun::Emitter& out) {
    const auto kv = parse_for_map(record, dim);
    out.emit(cluster_key(assign(kv.values, final_centroids, params.metric)), kv.key);
  };
  job.reducer = [](std::string_view key, std::span<const std::string> values, gridrun::ReduceOutput& out) {
    std::string line;
    for (const auto& v : values) {
      line.assign(key);
      line += '\t';
      line += v;
      out.write(line);
    }
  };
  const auto job_result = gridrun::run_job(job);
  for (const auto& line : read_all_parts(job_result.outputs)) {
    const auto tab = line.find('\t');
    const auto c = text::parse_int<std::size_t>(std::string_view(line).substr(0, tab));
    if (tab == std::string::npos || !c) throw IoError("corrupt kmeans assignment output");
    result.assignments.push_back({line.substr(tab + 1), *c});
  }
  std::sort(result.assignments.begin(), result.assignments.end(), [](const Assignment& a, const Assignment& b) {
    return a.cluster != b.cluster ? a.cluster < b.cluster : a.key < b.key;
  });
  return result;
}

KMeansResult run_kmeans(const fs::path& vectors, const KMeansParams& params, const EngineParams& engine) {
  params.validate();
  const auto data = read_vectors(vectors);
  return run_kmeans_from(vectors, init_centroids(data, params.k, params.seed), params, engine);
}

KMeansResult run_kmeans(std::span<const KeyedVector> data, const KMeansParams& params, const EngineParams& engine) {
  params.validate();
  gridrun::ScratchDir staging(engine.scratch_dir, "kmeans-input");
  const fs::path file = staging.path() / "vectors.tsv";
  write_vectors(file, data);
  return run_kmeans_from(file, init_centroids(data, params.k, params.seed), params, engine);
}

// ---------------------------------------------------------------------------
// Files

void write_centroids(const fs::path& path, const Centroids& centroids) {
  io::LineWriter out(path);
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    out.write(std::to_string(j) + "\t" + values_text(centroids[j]));
  }
  out.close();
}

Centroids read_centroids(const fs::path& path) {
  io::LineReader in(path);
  Centroids out;
  std::string line;
  while (in.next(line)) {
    const auto tab = line.find('\t');
    const auto id = tab == std::string::npos ? std::nullopt
                                              : text::parse_int<std::size_t>(std::string_view(line).substr(0, tab));
    auto values = tab == std::string::npos ? std::nullopt
                                           : text::parse_csv_doubles(std::string_view(line).substr(tab + 1));
    if (!id || !values || *id != out.size()) throw ParseError(in.name(), in.line_number(), "malformed centroid line");
    out.push_back(std::move(*values));
  }
  return out;
}

void write_assignments(const fs::path& path, std::span<const Assignment> assignments) {
  io::LineWriter out(path);
  for (const auto& a : assignments) out.write(std::to_string(a.cluster) + "\t" + a.key);
  out.close();
}

std::vector<Assignment> read_assignments(const fs::path& path) {
  io::LineReader in(path);
  std::vector<Assignment> out;
  std::string line;
  while (in.next(line)) {
    const auto tab = line.find('\t');
    const auto id = tab == std::string::npos ? std::nullopt
                                              : text::parse_int<std::size_t>(std::string_view(line).substr(0, tab));
    if (!id || tab + 1 >= line.size()) throw ParseError(in.name(), in.line_number(), "malformed assignment line");
    out.push_back({line.substr(tab + 1), *id});
  }
  return out;
}

}  // namespace emopipe
