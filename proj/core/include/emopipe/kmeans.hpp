#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emopipe/vecstore.hpp"

namespace emopipe {

enum class Metric { Euclidean, SquaredEuclidean, Manhattan, Cosine, Tanimoto };

inline constexpr Metric kAllMetrics[] = {Metric::Euclidean, Metric::SquaredEuclidean, Metric::Manhattan,
                                         Metric::Cosine, Metric::Tanimoto};

std::string_view to_string(Metric m);
// Accepts "euclidean", "squared-euclidean", "manhattan", "cosine", "tanimoto".
// Throws ConfigError otherwise.
Metric parse_metric(std::string_view name);

// Throws DomainError on dimension mismatch, a zero-norm operand under Cosine,
// or two zero vectors under Tanimoto.
double distance(Metric metric, std::span<const double> x, std::span<const double> y);

using Centroids = std::vector<std::vector<double>>;

// k distinct input vectors (distinct by canonical key) chosen by seeded
// reservoir sampling. Throws InitializationError if fewer than k exist.
Centroids init_centroids(std::span<const KeyedVector> data, std::size_t k, std::uint64_t seed);

// argmin distance; ties go to the lowest index.
std::size_t assign(std::span<const double> point, const Centroids& centroids, Metric metric);

struct CentroidUpdate {
  Centroids centroids;
  std::size_t empty_clusters = 0;
};

// Componentwise mean per cluster, summed in ascending key order (then by
// value text) so the result does not depend on input order. Empty clusters
// keep their previous centroid.
CentroidUpdate update_centroids(std::span<const KeyedVector> data, std::span<const std::size_t> assignments,
                                const Centroids& previous);

struct Assignment {
  std::string key;
  std::size_t cluster = 0;

  bool operator==(const Assignment&) const = default;
};

struct KMeansParams {
  std::size_t k = 8;
  Metric metric = Metric::Euclidean;
  std::size_t max_iter = 10;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EngineParams {
  std::size_t workers = 1;
  std::size_t partitions = 1;
  std::filesystem::path scratch_dir;  // empty: gridrun default
};

struct ClusterModel {
  std::size_t k = 0;
  Metric metric = Metric::Euclidean;
  Centroids centroids;
  std::vector<double> cost_trace;  // cost against the centroids used in each iteration
  std::size_t iterations_run = 0;
  bool converged = false;
  std::size_t empty_clusters = 0;  // summed over iterations
};

struct KMeansResult {
  ClusterModel model;
  // One entry per input line, grouped by cluster then ordered by key.
  std::vector<Assignment> assignments;
};

// Lloyd iterations executed as gridrun jobs over a vector file. Stops when
// every centroid moves less than epsilon under the metric, or at max_iter.
// The final assignment is made against the final centroids.
KMeansResult run_kmeans(const std::filesystem::path& vectors, const KMeansParams& params,
                        const EngineParams& engine);

// Convenience overload: writes `data` to a scratch vector file first.
KMeansResult run_kmeans(std::span<const KeyedVector> data, const KMeansParams& params,
                        const EngineParams& engine);

// Centroids file: `clusterId<TAB>v1,...,vC`. Clustered points: `clusterId<TAB>key`.
void write_centroids(const std::filesystem::path& path, const Centroids& centroids);
Centroids read_centroids(const std::filesystem::path& path);
void write_assignments(const std::filesystem::path& path, std::span<const Assignment> assignments);
std::vector<Assignment> read_assignments(const std::filesystem::path& path);

// Runs a Lloyd loop starting from explicit centroids. Shared by run_kmeans.
KMeansResult run_kmeans_from(const std::filesystem::path& vectors, Centroids initial,
                             const KMeansParams& params, const EngineParams& engine);

}  // namespace emopipe
