#pragma once

// Stage orchestration: block-diagram order gen -> normalize -> vectorize ->
// kmeans -> labels -> join -> train -> evaluate -> report. Every stage reads
// and writes fixed file names under the configured output directory.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emopipe/dataset.hpp"
#include "emopipe/error.hpp"
#include "emopipe/forest.hpp"
#include "emopipe/joiner.hpp"
#include "emopipe/kmeans.hpp"

namespace emopipe::pipeline {

enum class Stage { Gen, Normalize, Vectorize, KMeans, Labels, Join, Train, Evaluate, Report, All };

inline constexpr Stage kChain[] = {Stage::Gen,   Stage::Normalize, Stage::Vectorize, Stage::KMeans, Stage::Labels,
                                   Stage::Join,  Stage::Train,     Stage::Evaluate,  Stage::Report};

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

namespace artifact {
inline constexpr const char* kRawSignals = "raw_signals.csv";
inline constexpr const char* kRatings = "ratings.csv";
inline constexpr const char* kNormalized = "normalized.csv";
inline constexpr const char* kVectors = "vectors.tsv";
inline constexpr const char* kClusteredPoints = "clustered_points.tsv";
inline constexpr const char* kCentroids = "centroids.tsv";
inline constexpr const char* kKMeansReport = "kmeans.kv";
inline constexpr const char* kLabels = "labels.tsv";
inline constexpr const char* kJoined = "joined.tsv";
inline constexpr const char* kJoinReport = "join_report.kv";
inline constexpr const char* kModel = "forest.model";
inline constexpr const char* kMetrics = "metrics.kv";
inline constexpr const char* kConfusion = "confusion.csv";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kReportKv = "report.kv";
inline constexpr const char* kTimings = "timings.kv";
}  // namespace artifact

struct PipelineConfig {
  // Synthetic generation unless both raw paths are set.
  DatasetConfig dataset;
  std::filesystem::path signals_path;
  std::filesystem::path ratings_path;

  KMeansParams kmeans;
  ForestParams forest;
  FeatureMode feature_mode = FeatureMode::ClusterAndRaw;
  EngineParams engine;
  std::filesystem::path output_dir = "emopipe-out";
  std::uint64_t join_max_product = 10000;

  bool synthetic() const { return signals_path.empty() && ratings_path.empty(); }
  void validate() const;
  // `section.key=value` lines describing every effective setting.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

// INI-style: [dataset], [kmeans], [forest], [engine], [pipeline] sections of
// `key = value`. Relative paths resolve against `base_dir`. Unknown keys are
// a ConfigError.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;  // sets dataset, kmeans and forest seeds
  std::optional<Metric> metric;
  std::optional<std::size_t> k;
  std::optional<std::size_t> max_iter;
  std::optional<double> epsilon;
  std::optional<std::size_t> trees;
  std::optional<FeatureMode> feature_mode;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> scratch_dir;
};

void apply_overrides(PipelineConfig& config, const Overrides& overrides);

// A failure inside a stage. what() is "[stage] message"; cause() holds the
// original exception.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& message, std::exception_ptr cause);

  Stage stage() const noexcept { return stage_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  Stage stage_;
  std::exception_ptr cause_;
};

// Runs one stage (or the whole chain for Stage::All) and records its wall
// clock time in timings.kv. Throws StageError.
void run_stage(Stage stage, const PipelineConfig& config);

struct KMeansSummary {
  std::size_t k = 0;
  std::string metric;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t empty_clusters = 0;
  std::vector<double> cost_trace;
};

struct RunReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::optional<KMeansSummary> kmeans;
  std::optional<JoinReport> join;
  Metrics metrics;
  std::optional<ConfusionMatrix> confusion;
  std::size_t oob_evaluated = 0;
  std::size_t oob_skipped = 0;
  std::vector<std::pair<std::string, double>> timings;  // stage -> seconds, chain order
};

struct RenderedReport {
  std::string text;  // human-readable
  std::string kv;    // one `name=value` per line; timing lines start with "time."
};

// Throws DomainError when metrics carry no per-class accuracies (evaluate has
// not run).
RenderedReport emit_report(const RunReport& report);

// Reads every available artifact under config.output_dir.
RunReport collect_report(const PipelineConfig& config);

// Rows for training/evaluation, rebuilt from joined.tsv (and vectors.tsv for
// raw features) in file order.
std::vector<TrainRow> load_training_rows(const std::filesystem::path& output_dir, FeatureMode mode);

// Parses `name=value` lines; blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_kv(std::string_view text);

}  // namespace emopipe::pipeline
