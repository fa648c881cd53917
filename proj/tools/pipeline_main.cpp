// pipeline <stage> --config <path> [overrides]
//
// Runs one stage of the emotion-recognition pipeline, or the whole chain with
// `all`. Exit status is 0 on success and 1 with a stage-tagged message on
// failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "emopipe/io.hpp"
#include "emopipe/pipeline.hpp"

namespace pl = emopipe::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Biosignal emotion-recognition pipeline: normalize, cluster, join, classify"};

  std::string stage_name;
  std::string config_path;
  std::optional<std::size_t> workers, k, trees, max_iter;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> metric, feature_mode, output_dir, scratch_dir;

  app.add_option("stage", stage_name, "gen|normalize|vectorize|kmeans|labels|join|train|evaluate|report|all")
      ->required()
      ->check(CLI::IsMember({"gen", "normalize", "vectorize", "kmeans", "labels", "join", "train", "evaluate",
                             "report", "all"}));
  app.add_option("--config", config_path, "Pipeline config file (INI sections)")->required();
  app.add_option("--workers", workers, "Worker threads for map-reduce jobs and tree building")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for the generator, K-means and the forest");
  app.add_option("--metric", metric, "K-means distance")
      ->check(CLI::IsMember({"euclidean", "squared-euclidean", "manhattan", "cosine", "tanimoto"}));
  app.add_option("--k", k, "Cluster count")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", max_iter, "K-means iteration cap")->check(CLI::PositiveNumber);
  app.add_option("--epsilon", epsilon, "K-means convergence threshold")->check(CLI::NonNegativeNumber);
  app.add_option("--trees", trees, "Trees in the forest")->check(CLI::PositiveNumber);
  app.add_option("--feature-mode", feature_mode, "Classifier inputs")
      ->check(CLI::IsMember({"cluster", "raw", "cluster+raw"}));
  app.add_option("--output-dir", output_dir, "Override pipeline.output_dir");
  app.add_option("--scratch-dir", scratch_dir, "Override engine.scratch_dir (default: $EMOPIPE_SCRATCH or /tmp)");

  CLI11_PARSE(app, argc, argv);

  const pl::Stage stage = pl::parse_stage(stage_name);
  try {
    pl::PipelineConfig config;
    try {
      config = pl::load_config(config_path);
      pl::Overrides o;
      o.workers = workers;
      o.seed = seed;
      o.k = k;
      o.max_iter = max_iter;
      o.epsilon = epsilon;
      o.trees = trees;
      if (metric) o.metric = emopipe::parse_metric(*metric);
      if (feature_mode) o.feature_mode = emopipe::parse_feature_mode(*feature_mode);
      if (output_dir) o.output_dir = *output_dir;
      if (scratch_dir) o.scratch_dir = *scratch_dir;
      pl::apply_overrides(config, o);
    } catch (const emopipe::Error& e) {
      throw pl::StageError(stage, e.what(), std::current_exception());
    }

    const auto start = std::chrono::steady_clock::now();
    pl::run_stage(stage, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[%s] ok (%.3f s) -> %s\n", stage_name.c_str(), seconds, config.output_dir.c_str());
    if (stage == pl::Stage::Report || stage == pl::Stage::All) {
      std::cout << emopipe::io::read_file(config.output_dir / pl::artifact::kReportText);
    }
  } catch (const pl::StageError& e) {
    std::cerr << "pipeline: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pipeline: [" << stage_name << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
