#include "emopipe/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/text.hpp"
#include "emopipe/vecstore.hpp"

namespace emopipe::pipeline {

namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Gen: return "gen";
    case Stage::Normalize: return "normalize";
    case Stage::Vectorize: return "vectorize";
    case Stage::KMeans: return "kmeans";
    case Stage::Labels: return "labels";
    case Stage::Join: return "join";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
    case Stage::All: return "all";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kChain) {
    if (to_string(s) == name) return s;
  }
  if (name == "all") return Stage::All;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

StageError::StageError(Stage stage, const std::string& message, std::exception_ptr cause)
    : Error("[" + std::string(to_string(stage)) + "] " + message), stage_(stage), cause_(std::move(cause)) {}

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  if (synthetic()) {
    dataset.validate();
  } else if (signals_path.empty() || ratings_path.empty()) {
    throw ConfigError("dataset.signals and dataset.ratings must be given together");
  }
  kmeans.validate();
  if (forest.trees == 0) throw ConfigError("forest.trees must be >= 1");
  if (forest.min_node_size == 0) throw ConfigError("forest.min_node_size must be >= 1");
  if (engine.workers == 0) throw ConfigError("engine.workers must be >= 1");
  if (engine.partitions == 0) throw ConfigError("engine.partitions must be >= 1");
  if (output_dir.empty()) throw ConfigError("pipeline.output_dir must be set");
  if (join_max_product == 0) throw ConfigError("pipeline.join_max_product must be >= 1");
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  auto num = [](auto v) { return std::to_string(v); };
  if (synthetic()) {
    e.emplace_back("dataset.subjects", num(dataset.subjects));
    e.emplace_back("dataset.videos", num(dataset.videos));
    e.emplace_back("dataset.samples_per_video", num(dataset.samples_per_video));
    e.emplace_back("dataset.channels", num(dataset.channels));
    e.emplace_back("dataset.class_separation", text::format_double(dataset.class_separation));
    e.emplace_back("dataset.noise_sigma", text::format_double(dataset.noise_sigma));
    e.emplace_back("dataset.seed", num(dataset.seed));
  } else {
    e.emplace_back("dataset.signals", signals_path.string());
    e.emplace_back("dataset.ratings", ratings_path.string());
  }
  e.emplace_back("kmeans.k", num(kmeans.k));
  e.emplace_back("kmeans.metric", std::string(to_string(kmeans.metric)));
  e.emplace_back("kmeans.max_iter", num(kmeans.max_iter));
  e.emplace_back("kmeans.epsilon", text::format_double(kmeans.epsilon));
  e.emplace_back("kmeans.seed", num(kmeans.seed));
  e.emplace_back("forest.trees", num(forest.trees));
  e.emplace_back("forest.features_per_split", num(forest.features_per_split));
  e.emplace_back("forest.min_node_size", num(forest.min_node_size));
  e.emplace_back("forest.max_depth", num(forest.max_depth));
  e.emplace_back("forest.seed", num(forest.seed));
  e.emplace_back("forest.feature_mode", std::string(to_string(feature_mode)));
  e.emplace_back("engine.workers", num(engine.workers));
  e.emplace_back("engine.partitions", num(engine.partitions));
  e.emplace_back("engine.scratch_dir", engine.scratch_dir.string());
  e.emplace_back("pipeline.output_dir", output_dir.string());
  e.emplace_back("pipeline.join_max_product", num(join_max_product));
  return e;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::optional<T> v;
  if constexpr (std::is_floating_point_v<T>) {
    v = text::parse_double(value);
  } else {
    v = text::parse_int<T>(value);
  }
  if (!v) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return *v;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

PipelineConfig parse_config(std::string_view text_in, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text_in)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must be inside a section");
    }
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const std::string value(text::trim(node.data()));
      if (name == "dataset.subjects") c.dataset.subjects = parse_number<int>(name, value);
      else if (name == "dataset.videos") c.dataset.videos = parse_number<int>(name, value);
      else if (name == "dataset.samples_per_video") c.dataset.samples_per_video = parse_number<int>(name, value);
      else if (name == "dataset.channels") c.dataset.channels = parse_number<int>(name, value);
      else if (name == "dataset.class_separation") c.dataset.class_separation = parse_number<double>(name, value);
      else if (name == "dataset.noise_sigma") c.dataset.noise_sigma = parse_number<double>(name, value);
      else if (name == "dataset.seed") c.dataset.seed = parse_number<std::uint64_t>(name, value);
      else if (name == "dataset.signals") c.signals_path = resolve(base_dir, value);
      else if (name == "dataset.ratings") c.ratings_path = resolve(base_dir, value);
      else if (name == "kmeans.k") c.kmeans.k = parse_number<std::size_t>(name, value);
      else if (name == "kmeans.metric") c.kmeans.metric = parse_metric(value);
      else if (name == "kmeans.max_iter") c.kmeans.max_iter = parse_number<std::size_t>(name, value);
      else if (name == "kmeans.epsilon") c.kmeans.epsilon = parse_number<double>(name, value);
      else if (name == "kmeans.seed") c.kmeans.seed = parse_number<std::uint64_t>(name, value);
      else if (name == "forest.trees") c.forest.trees = parse_number<std::size_t>(name, value);
      else if (name == "forest.features_per_split") c.forest.features_per_split = parse_number<std::size_t>(name, value);
      else if (name == "forest.min_node_size") c.forest.min_node_size = parse_number<std::size_t>(name, value);
      else if (name == "forest.max_depth") c.forest.max_depth = parse_number<std::size_t>(name, value);
      else if (name == "forest.seed") c.forest.seed = parse_number<std::uint64_t>(name, value);
      else if (name == "forest.feature_mode") c.feature_mode = parse_feature_mode(value);
      else if (name == "engine.workers") c.engine.workers = parse_number<std::size_t>(name, value);
      else if (name == "engine.partitions") c.engine.partitions = parse_number<std::size_t>(name, value);
      else if (name == "engine.scratch_dir") c.engine.scratch_dir = resolve(base_dir, value);
      else if (name == "pipeline.output_dir") c.output_dir = resolve(base_dir, value);
      else if (name == "pipeline.join_max_product") c.join_max_product = parse_number<std::uint64_t>(name, value);
      else throw ConfigError("unknown config key '" + name + "'");
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(io::read_file(path), path.parent_path());
}

void apply_overrides(PipelineConfig& c, const Overrides& o) {
  if (o.workers) c.engine.workers = *o.workers;
  if (o.seed) {
    c.dataset.seed = *o.seed;
    c.kmeans.seed = *o.seed;
    c.forest.seed = *o.seed;
  }
  if (o.metric) c.kmeans.metric = *o.metric;
  if (o.k) c.kmeans.k = *o.k;
  if (o.max_iter) c.kmeans.max_iter = *o.max_iter;
  if (o.epsilon) c.kmeans.epsilon = *o.epsilon;
  if (o.trees) c.forest.trees = *o.trees;
  if (o.feature_mode) c.feature_mode = *o.feature_mode;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.scratch_dir) c.engine.scratch_dir = *o.scratch_dir;
}

std::vector<std::pair<std::string, std::string>> parse_kv(std::string_view text_in) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto line : text::split(text_in, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("kv", out.size() + 1, "expected name=value");
    out.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

class Stages {
 public:
  explicit Stages(const PipelineConfig& c) : c_(c), dir_(c.output_dir) {}

  fs::path out(const char* name) const { return dir_ / name; }

  // Throws MissingPrerequisiteError when `name` is absent.
  fs::path need(const char* name, Stage producer) const {
    const fs::path p = out(name);
    if (!fs::exists(p)) throw MissingPrerequisiteError(p.string(), std::string(to_string(producer)));
    return p;
  }

  fs::path signals() const {
    if (c_.synthetic()) return need(artifact::kRawSignals, Stage::Gen);
    if (!fs::exists(c_.signals_path)) throw MissingPrerequisiteError(c_.signals_path.string(), "dataset.signals");
    return c_.signals_path;
  }
  fs::path ratings() const {
    if (c_.synthetic()) return need(artifact::kRatings, Stage::Gen);
    if (!fs::exists(c_.ratings_path)) throw MissingPrerequisiteError(c_.ratings_path.string(), "dataset.ratings");
    return c_.ratings_path;
  }

  void gen() const {
    if (!c_.synthetic()) throw ConfigError("the dataset section names raw files; there is nothing to generate");
    const Dataset ds = generate_synthetic(c_.dataset);
    write_signals(out(artifact::kRawSignals), ds.records, ds.channels);
    write_ratings(out(artifact::kRatings), ds.ratings);
  }

  void normalize_stage() const {
    const Dataset ds = load_raw(signals(), ratings());
    write_signals(out(artifact::kNormalized), normalize(ds.records), ds.channels);
  }

  void vectorize_stage() const {
    const auto records = read_signals(need(artifact::kNormalized, Stage::Normalize));
    write_vectors(out(artifact::kVectors), vectorize(records));
  }

  void kmeans_stage() const {
    const auto result = run_kmeans(need(artifact::kVectors, Stage::Vectorize), c_.kmeans, c_.engine);
    write_assignments(out(artifact::kClusteredPoints), result.assignments);
    write_centroids(out(artifact::kCentroids), result.model.centroids);
    const auto& m = result.model;
    std::string kv;
    kv += "k=" + std::to_string(m.k) + "\n";
    kv += "metric=" + std::string(to_string(m.metric)) + "\n";
    kv += "iterations=" + std::to_string(m.iterations_run) + "\n";
    kv += std::string("converged=") + (m.converged ? "true" : "false") + "\n";
    kv += "empty_clusters=" + std::to_string(m.empty_clusters) + "\n";
    std::string trace;
    text::append_csv_doubles(trace, m.cost_trace);
    kv += "cost_trace=" + trace + "\n";
    io::write_file(out(artifact::kKMeansReport), kv);
  }

  void labels_stage() const {
    const auto records = read_signals(need(artifact::kNormalized, Stage::Normalize));
    const auto table = read_ratings(ratings());
    std::vector<std::pair<std::string, ClassId>> labels;
    labels.reserve(records.size());
    for (const auto& rec : records) {
      const auto it = table.find({rec.subject, rec.video});
      if (it == table.end()) {
        throw ReferentialError("no rating for subject " + std::to_string(rec.subject) + ", video " +
                               std::to_string(rec.video));
      }
      labels.emplace_back(canonical_key(rec.channels), encode_label(it->second));
    }
    write_labels(out(artifact::kLabels), labels);
  }

  void join_stage() const {
    const fs::path left = need(artifact::kClusteredPoints, Stage::KMeans);
    const fs::path right = need(artifact::kLabels, Stage::Labels);
    gridrun::ScratchDir parts(c_.engine.scratch_dir, "join-output");
    JoinOptions options;
    options.engine = c_.engine;
    options.max_product = c_.join_max_product;
    const auto result = mr_join(left, right, parts.path(), options);
    gridrun::concat_files(result.shards, out(artifact::kJoined));
    io::write_file(out(artifact::kJoinReport), result.report.to_kv());
  }

  void train_stage() const {
    const auto rows = load_training_rows(dir_, c_.feature_mode);
    if (rows.empty()) throw DomainError("joined file is empty; nothing to train on");
    ForestParams params = c_.forest;
    params.workers = c_.engine.workers;
    write_model(out(artifact::kModel), train_forest(make_features(rows), params));
  }

  void evaluate_stage() const {
    const auto model = read_model(need(artifact::kModel, Stage::Train));
    const auto rows = load_training_rows(dir_, c_.feature_mode);
    const auto ev = oob_evaluate(model, make_features(rows));
    std::string kv;
    kv += "accuracy=" + text::format_double(ev.metrics.accuracy) + "\n";
    kv += "reliability=" + text::format_double(ev.metrics.reliability) + "\n";
    kv += "reliability_sd=" + text::format_double(ev.metrics.reliability_sd) + "\n";
    kv += "oob_error=" + text::format_double(ev.metrics.oob_error) + "\n";
    for (std::size_t c = 0; c < ev.metrics.per_class_accuracy.size(); ++c) {
      const auto& a = ev.metrics.per_class_accuracy[c];
      kv += "class." + std::to_string(c + 1) + ".accuracy=" + (a ? text::format_double(*a) : "absent") + "\n";
    }
    kv += "oob_evaluated=" + std::to_string(ev.evaluated) + "\n";
    kv += "oob_skipped=" + std::to_string(ev.skipped) + "\n";
    io::write_file(out(artifact::kMetrics), kv);
    io::write_file(out(artifact::kConfusion), ev.confusion.to_csv());
  }

  void report_stage() const {
    need(artifact::kMetrics, Stage::Evaluate);
    const auto rendered = emit_report(collect_report(c_));
    io::write_file(out(artifact::kReportText), rendered.text);
    io::write_file(out(artifact::kReportKv), rendered.kv);
  }

  void run(Stage s) const {
    switch (s) {
      case Stage::Gen: gen(); break;
      case Stage::Normalize: normalize_stage(); break;
      case Stage::Vectorize: vectorize_stage(); break;
      case Stage::KMeans: kmeans_stage(); break;
      case Stage::Labels: labels_stage(); break;
      case Stage::Join: join_stage(); break;
      case Stage::Train: train_stage(); break;
      case Stage::Evaluate: evaluate_stage(); break;
      case Stage::Report: report_stage(); break;
      case Stage::All: break;
    }
  }

 private:
  const PipelineConfig& c_;
  fs::path dir_;
};

std::map<std::string, double> read_timings(const fs::path& path) {
  std::map<std::string, double> t;
  if (!fs::exists(path)) return t;
  for (const auto& [name, value] : parse_kv(io::read_file(path))) {
    if (auto v = text::parse_double(value)) t[name] = *v;
  }
  return t;
}

void record_timing(const fs::path& dir, Stage stage, double seconds) {
  const fs::path path = dir / artifact::kTimings;
  auto t = read_timings(path);
  t[std::string(to_string(stage))] = seconds;
  std::string kv;
  for (Stage s : kChain) {
    const auto it = t.find(std::string(to_string(s)));
    if (it != t.end()) kv += it->first + "=" + text::format_double(it->second) + "\n";
  }
  io::write_file(path, kv);
}

void run_one(const Stages& stages, Stage stage, const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  try {
    stages.run(stage);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what(), std::current_exception());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  record_timing(config.output_dir, stage, seconds);
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& config) {
  try {
    config.validate();
    fs::create_directories(config.output_dir);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what(), std::current_exception());
  }
  const Stages stages(config);
  if (stage != Stage::All) {
    run_one(stages, stage, config);
    return;
  }
  std::error_code ec;
  fs::remove(config.output_dir / artifact::kTimings, ec);
  for (Stage s : kChain) {
    if (s == Stage::Gen && !config.synthetic()) continue;
    run_one(stages, s, config);
  }
}

std::vector<TrainRow> load_training_rows(const fs::path& output_dir, FeatureMode mode) {
  const fs::path joined = output_dir / artifact::kJoined;
  if (!fs::exists(joined)) throw MissingPrerequisiteError(joined.string(), "join");
  const auto records = read_joined({joined});

  std::unordered_map<std::string, std::vector<double>> raw;
  if (mode != FeatureMode::ClusterOnly) {
    const fs::path vectors = output_dir / artifact::kVectors;
    if (!fs::exists(vectors)) throw MissingPrerequisiteError(vectors.string(), "vectorize");
    for (auto& kv : read_vectors(vectors)) raw.try_emplace(kv.key, std::move(kv.values));
  }

  std::vector<TrainRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    TrainRow row;
    row.label = r.label;
    if (mode != FeatureMode::RawOnly) row.cluster = r.cluster;
    if (mode != FeatureMode::ClusterOnly) {
      const auto it = raw.find(r.key);
      if (it == raw.end()) throw ReferentialError("joined key not found in the vector file: " + r.key);
      row.raw = it->second;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

RunReport collect_report(const PipelineConfig& config) {
  const fs::path dir = config.output_dir;
  RunReport r;
  r.config = config.echo();

  if (fs::exists(dir / artifact::kKMeansReport)) {
    KMeansSummary k;
    for (const auto& [name, value] : parse_kv(io::read_file(dir / artifact::kKMeansReport))) {
      if (name == "k") k.k = text::parse_int<std::size_t>(value).value_or(0);
      else if (name == "metric") k.metric = value;
      else if (name == "iterations") k.iterations = text::parse_int<std::size_t>(value).value_or(0);
      else if (name == "converged") k.converged = value == "true";
      else if (name == "empty_clusters") k.empty_clusters = text::parse_int<std::size_t>(value).value_or(0);
      else if (name == "cost_trace") k.cost_trace = text::parse_csv_doubles(value).value_or(std::vector<double>{});
    }
    r.kmeans = k;
  }
  if (fs::exists(dir / artifact::kJoinReport)) {
    JoinReport j;
    for (const auto& [name, value] : parse_kv(io::read_file(dir / artifact::kJoinReport))) {
      const auto v = text::parse_int<std::uint64_t>(value).value_or(0);
      if (name == "matched") j.matched = v;
      else if (name == "unmatched_left") j.unmatched_left = v;
      else if (name == "unmatched_right") j.unmatched_right = v;
      else if (name == "collision_keys") j.collision_keys = v;
    }
    r.join = j;
  }
  if (fs::exists(dir / artifact::kMetrics)) {
    r.metrics.per_class_accuracy.assign(kClassCount, std::nullopt);
    for (const auto& [name, value] : parse_kv(io::read_file(dir / artifact::kMetrics))) {
      const double v = text::parse_double(value).value_or(0.0);
      if (name == "accuracy") r.metrics.accuracy = v;
      else if (name == "reliability") r.metrics.reliability = v;
      else if (name == "reliability_sd") r.metrics.reliability_sd = v;
      else if (name == "oob_error") r.metrics.oob_error = v;
      else if (name == "oob_evaluated") r.oob_evaluated = static_cast<std::size_t>(v);
      else if (name == "oob_skipped") r.oob_skipped = static_cast<std::size_t>(v);
      else if (name.rfind("class.", 0) == 0) {
        const auto c = text::parse_int<std::size_t>(text::split(name, '.')[1]);
        if (c && *c >= 1 && *c <= kClassCount && value != "absent") r.metrics.per_class_accuracy[*c - 1] = v;
      }
    }
  }
  if (fs::exists(dir / artifact::kConfusion)) {
    std::vector<std::vector<std::uint64_t>> rows;
    const auto lines = io::read_lines(dir / artifact::kConfusion);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = text::split(lines[i], ',');
      std::vector<std::uint64_t> row;
      for (std::size_t j = 1; j < f.size(); ++j) row.push_back(text::parse_int<std::uint64_t>(f[j]).value_or(0));
      rows.push_back(std::move(row));
    }
    if (!rows.empty()) r.confusion = ConfusionMatrix::from_rows(rows);
  }
  const auto timings = read_timings(dir / artifact::kTimings);
  for (Stage s : kChain) {
    const auto it = timings.find(std::string(to_string(s)));
    if (it != timings.end()) r.timings.emplace_back(it->first, it->second);
  }
  return r;
}

namespace {

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * fraction);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

RenderedReport emit_report(const RunReport& r) {
  if (r.metrics.per_class_accuracy.empty()) {
    throw DomainError("no per-class accuracies; the evaluate stage must run before report");
  }
  RenderedReport out;
  std::string& kv = out.kv;
  std::string& tx = out.text;

  kv += "accuracy=" + text::format_double(r.metrics.accuracy) + "\n";
  kv += "reliability=" + text::format_double(r.metrics.reliability) + "\n";
  kv += "reliability_sd=" + text::format_double(r.metrics.reliability_sd) + "\n";
  kv += "oob_error=" + text::format_double(r.metrics.oob_error) + "\n";
  kv += "oob_evaluated=" + std::to_string(r.oob_evaluated) + "\n";
  kv += "oob_skipped=" + std::to_string(r.oob_skipped) + "\n";

  tx += "Random forest classifier (out-of-bag)\n";
  tx += "  Accuracy               " + percent(r.metrics.accuracy) + "\n";
  tx += "  Reliability            " + percent(r.metrics.reliability) + "\n";
  tx += "  Std. Dev. (Reliab.)    " + fixed(r.metrics.reliability_sd, 3) + "\n";
  tx += "  OOB rows evaluated     " + std::to_string(r.oob_evaluated) + "\n";
  tx += "  OOB rows skipped       " + std::to_string(r.oob_skipped) + "\n\n";
  tx += "Individual class accuracies\n";
  for (std::size_t c = 0; c < r.metrics.per_class_accuracy.size(); ++c) {
    const auto& a = r.metrics.per_class_accuracy[c];
    const auto bits = decode_label(ClassId(static_cast<int>(c) + 1));
    kv += "class." + std::to_string(c + 1) + ".accuracy=" + (a ? text::format_double(*a) : "absent") + "\n";
    char label[64];
    std::snprintf(label, sizeof(label), "  Class %zu {%d,%d,%d}      ", c + 1, int(bits.valence), int(bits.arousal),
                  int(bits.dominance));
    tx += label + (a ? percent(*a) : std::string("absent")) + "\n";
  }
  if (r.confusion) {
    tx += "\nConfusion matrix (rows: true class, columns: predicted)\n";
    for (std::size_t i = 0; i < r.confusion->classes(); ++i) {
      std::string row;
      tx += "  ";
      for (std::size_t j = 0; j < r.confusion->classes(); ++j) {
        if (j) row += ',';
        row += std::to_string(r.confusion->at(i, j));
        char cell[32];
        std::snprintf(cell, sizeof(cell), "%7llu", static_cast<unsigned long long>(r.confusion->at(i, j)));
        tx += cell;
      }
      tx += "\n";
      kv += "confusion." + std::to_string(i + 1) + "=" + row + "\n";
    }
  }
  if (r.kmeans) {
    const auto& k = *r.kmeans;
    std::string trace;
    text::append_csv_doubles(trace, k.cost_trace);
    kv += "kmeans.k=" + std::to_string(k.k) + "\n";
    kv += "kmeans.metric=" + k.metric + "\n";
    kv += "kmeans.iterations=" + std::to_string(k.iterations) + "\n";
    kv += std::string("kmeans.converged=") + (k.converged ? "true" : "false") + "\n";
    kv += "kmeans.empty_clusters=" + std::to_string(k.empty_clusters) + "\n";
    kv += "kmeans.cost_trace=" + trace + "\n";
    tx += "\nK-means\n";
    tx += "  k=" + std::to_string(k.k) + " metric=" + k.metric + " iterations=" + std::to_string(k.iterations) +
          " converged=" + (k.converged ? "yes" : "no") + " empty_clusters=" + std::to_string(k.empty_clusters) + "\n";
    tx += "  cost per iteration:";
    for (double c : k.cost_trace) tx += " " + fixed(c, 3);
    tx += "\n";
  }
  if (r.join) {
    kv += "join.matched=" + std::to_string(r.join->matched) + "\n";
    kv += "join.unmatched_left=" + std::to_string(r.join->unmatched_left) + "\n";
    kv += "join.unmatched_right=" + std::to_string(r.join->unmatched_right) + "\n";
    kv += "join.collision_keys=" + std::to_string(r.join->collision_keys) + "\n";
    tx += "\nJoin\n  " + r.join->summary() + "\n";
  }
  if (!r.timings.empty()) tx += "\nStage timings\n";
  for (const auto& [stage, seconds] : r.timings) {
    kv += "time." + stage + "=" + text::format_double(seconds) + "\n";
    tx += "  " + stage + std::string(12 - std::min<std::size_t>(11, stage.size()), ' ') + fixed(seconds, 3) + " s\n";
  }
  tx += "\nConfiguration\n";
  for (const auto& [name, value] : r.config) {
    kv += "config." + name + "=" + value + "\n";
    tx += "  " + name + " = " + value + "\n";
  }
  return out;
}

}  // namespace emopipe::pipeline
