#include "emopipe/forest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "emopipe/error.hpp"
#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/parallel.hpp"
#include "emopipe/random.hpp"
#include "emopipe/text.hpp"

namespace emopipe {

namespace fs = std::filesystem;

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::ClusterOnly: return "cluster";
    case FeatureMode::RawOnly: return "raw";
    case FeatureMode::ClusterAndRaw: return "cluster+raw";
  }
  return "unknown";
}

FeatureMode parse_feature_mode(std::string_view name) {
  for (FeatureMode m : {FeatureMode::ClusterOnly, FeatureMode::RawOnly, FeatureMode::ClusterAndRaw}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown feature mode '" + std::string(name) + "' (expected cluster, raw or cluster+raw)");
}

std::vector<double> row_features(const TrainRow& row) {
  std::vector<double> f;
  f.reserve(row.raw.size() + 1);
  if (row.cluster) f.push_back(static_cast<double>(*row.cluster));
  f.insert(f.end(), row.raw.begin(), row.raw.end());
  return f;
}

FeatureMatrix make_features(std::span<const TrainRow> rows) {
  FeatureMatrix m;
  if (rows.empty()) return m;
  const bool has_cluster = rows.front().cluster.has_value();
  const std::size_t raw = rows.front().raw.size();
  if (has_cluster) m.kinds.push_back(FeatureKind::Categorical);
  m.kinds.insert(m.kinds.end(), raw, FeatureKind::Numeric);
  if (m.kinds.empty()) throw DomainError("training rows have no features");
  m.values.reserve(rows.size() * m.kinds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].cluster.has_value() != has_cluster || rows[i].raw.size() != raw) {
      throw DomainError("training row " + std::to_string(i) + " has a different feature layout");
    }
    const auto f = row_features(rows[i]);
    m.values.insert(m.values.end(), f.begin(), f.end());
    m.labels.push_back(rows[i].label);
  }
  return m;
}

std::size_t ForestParams::resolved_mtry(std::size_t features) const {
  if (features_per_split == 0) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(features)))));
  }
  if (features_per_split > features) {
    throw ConfigError("features_per_split " + std::to_string(features_per_split) + " exceeds feature count " +
                      std::to_string(features));
  }
  return features_per_split;
}

// ---------------------------------------------------------------------------
// Trees

ClassId DecisionTree::predict(std::span<const double> features) const {
  std::uint32_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    const double x = features[static_cast<std::size_t>(n.feature)];
    const bool go_left = n.kind == FeatureKind::Numeric ? x <= n.threshold : x == n.threshold;
    i = go_left ? n.left : n.right;
  }
  return ClassId(nodes[i].prediction);
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.push_back({nodes[i].left, d + 1});
      stack.push_back({nodes[i].right, d + 1});
    }
  }
  return deepest;
}

BootstrapSample bootstrap_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  BootstrapSample s;
  s.in_bag.resize(n);
  std::vector<bool> drawn(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    s.in_bag[i] = static_cast<std::size_t>(rng.uniform_index(n));
    drawn[s.in_bag[i]] = true;
  }
  std::sort(s.in_bag.begin(), s.in_bag.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (!drawn[i]) s.oob.push_back(i);
  }
  return s;
}

namespace {

using ClassCounts = std::array<std::uint32_t, kClassCount>;

int majority_class(const ClassCounts& counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<int>(best) + 1;
}

// Σ count² / n for a node: larger means purer. Gini = 1 - score / n.
double purity_score(const ClassCounts& counts, std::size_t n) {
  double s = 0.0;
  for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return s / static_cast<double>(n);
}

struct Split {
  bool found = false;
  int feature = -1;
  FeatureKind kind = FeatureKind::Numeric;
  double threshold = 0.0;
  double score = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), mtry_(params.resolved_mtry(data.features())), rng_(seed + 1) {}

  DecisionTree build(std::span<const std::size_t> in_bag) {
    if (in_bag.empty()) throw DomainError("empty in-bag sample");
    samples_.assign(in_bag.begin(), in_bag.end());
    feature_order_.resize(data_.features());
    struct Work {
      std::size_t begin, end, depth;
      std::uint32_t parent;
      bool left;
    };
    std::vector<Work> stack{{0, samples_.size(), 0, 0, false}};
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      const auto index = static_cast<std::uint32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      if (index != 0) (w.left ? tree_.nodes[w.parent].left : tree_.nodes[w.parent].right) = index;

      ClassCounts counts{};
      for (std::size_t i = w.begin; i < w.end; ++i) ++counts[data_.labels[samples_[i]].index()];
      const std::size_t n = w.end - w.begin;
      const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
      const bool too_small = n < 2 * params_.min_node_size;
      const bool too_deep = params_.max_depth != 0 && w.depth >= params_.max_depth;
      tree_.nodes[index].prediction = majority_class(counts);
      if (pure || too_small || too_deep) continue;

      const Split split = best_split(w.begin, w.end, counts);
      if (!split.found) continue;

      TreeNode& node = tree_.nodes[index];
      node.feature = split.feature;
      node.kind = split.kind;
      node.threshold = split.threshold;
      const auto mid = std::stable_partition(
          samples_.begin() + static_cast<std::ptrdiff_t>(w.begin), samples_.begin() + static_cast<std::ptrdiff_t>(w.end),
          [&](std::size_t s) {
            const double x = value(s, static_cast<std::size_t>(split.feature));
            return split.kind == FeatureKind::Numeric ? x <= split.threshold : x == split.threshold;
          });
      const auto boundary = static_cast<std::size_t>(mid - samples_.begin());
      // Right pushed first so the left subtree is laid out first (preorder).
      stack.push_back({boundary, w.end, w.depth + 1, index, false});
      stack.push_back({w.begin, boundary, w.depth + 1, index, true});
    }
    return std::move(tree_);
  }

 private:
  double value(std::size_t sample, std::size_t feature) const {
    return data_.values[sample * data_.features() + feature];
  }

  Split best_split(std::size_t begin, std::size_t end, const ClassCounts& counts) {
    const std::size_t n = end - begin;
    const double parent = purity_score(counts, n);
    Split best;
    best.score = parent;

    // Partial Fisher-Yates: the first mtry_ entries are the sampled features.
    std::iota(feature_order_.begin(), feature_order_.end(), 0);
    for (std::size_t i = 0; i < mtry_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.uniform_index(feature_order_.size() - i));
      std::swap(feature_order_[i], feature_order_[j]);
    }

    for (std::size_t f = 0; f < mtry_; ++f) {
      const std::size_t feature = feature_order_[f];
      column_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t s = samples_[i];
        column_.push_back({value(s, feature), static_cast<std::uint8_t>(data_.labels[s].index())});
      }
      std::sort(column_.begin(), column_.end());
      if (data_.kinds[feature] == FeatureKind::Numeric) {
        scan_numeric(feature, counts, n, best);
      } else {
        scan_categorical(feature, counts, n, best);
      }
    }
    // Reject splits whose gain is only rounding noise.
    best.found = best.found && best.score > parent + 1e-9;
    return best;
  }

  void consider(Split& best, std::size_t feature, FeatureKind kind, double threshold, double score) {
    if (score > best.score) {
      best = Split{true, static_cast<int>(feature), kind, threshold, score};
    }
  }

  void scan_numeric(std::size_t feature, const ClassCounts& counts, std::size_t n, Split& best) {
    ClassCounts left{};
    ClassCounts right = counts;
    double sq_left = 0.0;
    double sq_right = 0.0;
    for (auto c : right) sq_right += static_cast<double>(c) * c;
    const std::size_t min_node = params_.min_node_size;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto y = column_[i].second;
      sq_left += 2.0 * left[y] + 1.0;
      ++left[y];
      sq_right -= 2.0 * right[y] - 1.0;
      --right[y];
      const double lo = column_[i].first;
      const double hi = column_[i + 1].first;
      if (!(lo < hi)) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < min_node || nr < min_node) continue;
      const double score = sq_left / static_cast<double>(nl) + sq_right / static_cast<double>(nr);
      double threshold = lo + (hi - lo) / 2.0;
      if (!(threshold < hi)) threshold = lo;
      consider(best, feature, FeatureKind::Numeric, threshold, score);
    }
  }

  void scan_categorical(std::size_t feature, const ClassCounts& counts, std::size_t n, Split& best) {
    const std::size_t min_node = params_.min_node_size;
    std::size_t i = 0;
    while (i < n) {
      const double category = column_[i].first;
      ClassCounts in{};
      std::size_t j = i;
      while (j < n && column_[j].first == category) ++in[column_[j++].second];
      const std::size_t nl = j - i;
      const std::size_t nr = n - nl;
      i = j;
      if (nr == 0) continue;
      if (nl < min_node || nr < min_node) continue;
      double sq_in = 0.0, sq_out = 0.0;
      for (std::size_t c = 0; c < kClassCount; ++c) {
        sq_in += static_cast<double>(in[c]) * in[c];
        const double out = static_cast<double>(counts[c] - in[c]);
        sq_out += out * out;
      }
      const double score = sq_in / static_cast<double>(nl) + sq_out / static_cast<double>(nr);
      consider(best, feature, FeatureKind::Categorical, category, score);
    }
  }

  const FeatureMatrix& data_;
  const ForestParams& params_;
  std::size_t mtry_;
  Rng rng_;
  DecisionTree tree_;
  std::vector<std::size_t> samples_;
  std::vector<std::size_t> feature_order_;
  std::vector<std::pair<double, std::uint8_t>> column_;
};

void check_layout(const std::vector<FeatureKind>& kinds, std::span<const double> features) {
  if (features.size() != kinds.size()) {
    throw DomainError("row has " + std::to_string(features.size()) + " features, model expects " +
                      std::to_string(kinds.size()));
  }
  for (std::size_t f = 0; f < kinds.size(); ++f) {
    const double x = features[f];
    if (!std::isfinite(x)) throw DomainError("non-finite feature " + std::to_string(f));
    if (kinds[f] == FeatureKind::Categorical && (x < 0 || x != std::floor(x))) {
      throw DomainError("categorical feature " + std::to_string(f) + " is not a cluster id");
    }
  }
}

}  // namespace

DecisionTree build_tree(const FeatureMatrix& data, std::span<const std::size_t> in_bag, const ForestParams& params,
                        std::uint64_t seed) {
  return TreeBuilder(data, params, seed).build(in_bag);
}

std::uint64_t tree_seed(std::uint64_t master_seed, std::uint64_t tree_index) {
  char bytes[16];
  for (int b = 0; b < 8; ++b) {
    bytes[b] = static_cast<char>((master_seed >> (8 * b)) & 0xff);
    bytes[8 + b] = static_cast<char>((tree_index >> (8 * b)) & 0xff);
  }
  return gridrun::stable_hash(std::string_view(bytes, sizeof(bytes)));
}

ForestModel train_forest(const FeatureMatrix& data, const ForestParams& params) {
  if (data.rows() == 0) throw DomainError("no training rows");
  if (params.trees == 0) throw ConfigError("trees must be >= 1");
  if (params.min_node_size == 0) throw ConfigError("min_node_size must be >= 1");
  params.resolved_mtry(data.features());
  for (std::size_t i = 0; i < data.rows(); ++i) check_layout(data.kinds, data.row(i));

  ForestModel model;
  model.kinds = data.kinds;
  model.rows = data.rows();
  model.trees.resize(params.trees);
  model.tree_seeds.resize(params.trees);
  model.in_bag_counts.resize(params.trees);
  parallel_for(params.trees, std::max<std::size_t>(1, params.workers), [&](std::size_t t) {
    const std::uint64_t seed = tree_seed(params.seed, t);
    const BootstrapSample sample = bootstrap_sample(data.rows(), seed);
    std::vector<std::uint32_t> counts(data.rows(), 0);
    for (std::size_t i : sample.in_bag) ++counts[i];
    model.trees[t] = build_tree(data, sample.in_bag, params, seed);
    model.tree_seeds[t] = seed;
    model.in_bag_counts[t] = std::move(counts);
  });
  return model;
}

namespace {

ClassId vote(const ClassCounts& votes) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < votes.size(); ++c) {
    if (votes[c] > votes[best]) best = c;
  }
  return ClassId(static_cast<int>(best) + 1);
}

}  // namespace

ClassId predict(const ForestModel& model, std::span<const double> features) {
  check_layout(model.kinds, features);
  if (model.trees.empty()) throw DomainError("model has no trees");
  ClassCounts votes{};
  for (const auto& tree : model.trees) ++votes[tree.predict(features).index()];
  return vote(votes);
}

ClassId predict(const ForestModel& model, const TrainRow& row) { return predict(model, row_features(row)); }

// ---------------------------------------------------------------------------
// Evaluation

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw DomainError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= classes_ || predicted >= classes_) throw DomainError("class index out of range");
  counts_[truth * classes_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * classes_ + predicted);
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) s += at(truth, j);
  return s;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw DomainError("confusion matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) cm.add(i, j, rows[i][j]);
  }
  return cm;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "true\\pred";
  for (std::size_t j = 0; j < classes_; ++j) out += "," + std::to_string(j + 1);
  out += '\n';
  for (std::size_t i = 0; i < classes_; ++i) {
    out += std::to_string(i + 1);
    for (std::size_t j = 0; j < classes_; ++j) out += "," + std::to_string(at(i, j));
    out += '\n';
  }
  return out;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw DomainError("empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  m.oob_error = 1.0 - m.accuracy;
  std::vector<double> defined;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const std::uint64_t row = cm.row_sum(c);
    if (row == 0) {
      m.per_class_accuracy.push_back(std::nullopt);
      continue;
    }
    const double acc = static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
    m.per_class_accuracy.push_back(acc);
    defined.push_back(acc);
  }
  const double count = static_cast<double>(defined.size());
  m.reliability = std::accumulate(defined.begin(), defined.end(), 0.0) / count;
  double ss = 0.0;
  for (double a : defined) ss += (a - m.reliability) * (a - m.reliability);
  m.reliability_sd = std::sqrt(ss / count);
  return m;
}

OobEvaluation oob_evaluate(const ForestModel& model, const FeatureMatrix& data) {
  if (data.rows() != model.rows) {
    throw DomainError("model was trained on " + std::to_string(model.rows) + " rows, got " +
                      std::to_string(data.rows()));
  }
  if (data.kinds != model.kinds) throw DomainError("feature layout differs from the model's");
  OobEvaluation ev{ConfusionMatrix(kClassCount), {}, 0, 0};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto features = data.row(i);
    ClassCounts votes{};
    std::size_t voters = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      if (model.in_bag_counts[t][i] != 0) continue;
      ++votes[model.trees[t].predict(features).index()];
      ++voters;
    }
    if (voters == 0) {
      ++ev.skipped;
      continue;
    }
    ev.confusion.add(data.labels[i].index(), vote(votes).index());
    ++ev.evaluated;
  }
  if (ev.evaluated == 0) throw DomainError("no row is out-of-bag for any tree");
  ev.metrics = compute_metrics(ev.confusion);
  return ev;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::string_view kModelMagic = "emopipe-forest 1";

void write_preorder(const DecisionTree& tree, std::uint32_t i, io::LineWriter& out) {
  const TreeNode& n = tree.nodes[i];
  if (n.is_leaf()) {
    out.write("L " + std::to_string(n.prediction));
    return;
  }
  out.write(std::string(n.kind == FeatureKind::Numeric ? "N " : "C ") + std::to_string(n.feature) + " " +
            text::format_double(n.threshold) + " " + std::to_string(n.prediction));
  write_preorder(tree, n.left, out);
  write_preorder(tree, n.right, out);
}

class ModelReader {
 public:
  explicit ModelReader(const fs::path& path) : in_(path) {}

  // Valid until the next call.
  const std::string& line() {
    if (!in_.next(line_)) fail("unexpected end of file");
    return line_;
  }
  [[noreturn]] void fail(const std::string& what) { throw ParseError(in_.name(), in_.line_number(), what); }

  std::string_view expect_field(const std::string& l, std::string_view name) {
    const auto parts = text::split(l, ' ');
    if (parts.size() != 2 || parts[0] != name) fail("expected '" + std::string(name) + " <value>'");
    return parts[1];
  }

  std::uint32_t read_node(DecisionTree& tree, std::size_t features, std::size_t depth) {
    if (depth > 100000) fail("tree too deep");
    const std::string l = line();
    const auto parts = text::split(l, ' ');
    const auto index = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (parts.size() == 2 && parts[0] == "L") {
      auto cls = text::parse_int<int>(parts[1]);
      if (!cls || *cls < 1 || *cls > kClassCount) fail("bad leaf class");
      tree.nodes[index].prediction = *cls;
      return index;
    }
    if (parts.size() != 4 || (parts[0] != "N" && parts[0] != "C")) fail("expected node line");
    auto feature = text::parse_int<int>(parts[1]);
    auto threshold = text::parse_double(parts[2]);
    auto majority = text::parse_int<int>(parts[3]);
    if (!feature || *feature < 0 || static_cast<std::size_t>(*feature) >= features || !threshold || !majority ||
        *majority < 1 || *majority > kClassCount) {
      fail("bad split");
    }
    tree.nodes[index].prediction = *majority;
    tree.nodes[index].feature = *feature;
    tree.nodes[index].kind = parts[0] == "N" ? FeatureKind::Numeric : FeatureKind::Categorical;
    tree.nodes[index].threshold = *threshold;
    const auto left = read_node(tree, features, depth + 1);
    const auto right = read_node(tree, features, depth + 1);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
    return index;
  }

 private:
  io::LineReader in_;
  std::string line_;
};

}  // namespace

void write_model(const fs::path& path, const ForestModel& model) {
  io::LineWriter out(path);
  out.write(kModelMagic);
  out.write("rows " + std::to_string(model.rows));
  std::string kinds;
  for (auto k : model.kinds) kinds.push_back(k == FeatureKind::Numeric ? 'N' : 'C');
  out.write("kinds " + kinds);
  out.write("trees " + std::to_string(model.trees.size()));
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    out.write("tree " + std::to_string(t) + " seed " + std::to_string(model.tree_seeds[t]));
    write_preorder(model.trees[t], 0, out);
    std::string inbag = "inbag ";
    for (std::size_t i = 0; i < model.in_bag_counts[t].size(); ++i) {
      if (i) inbag.push_back(',');
      inbag += std::to_string(model.in_bag_counts[t][i]);
    }
    out.write(inbag);
  }
  out.write("end");
  out.close();
}

ForestModel read_model(const fs::path& path) {
  ModelReader r(path);
  if (r.line() != kModelMagic) r.fail("not an emopipe forest model (or unsupported version)");
  ForestModel model;
  auto rows = text::parse_int<std::size_t>(r.expect_field(r.line(), "rows"));
  if (!rows) r.fail("bad row count");
  model.rows = *rows;
  for (char c : r.expect_field(r.line(), "kinds")) {
    if (c != 'N' && c != 'C') r.fail("bad feature kind");
    model.kinds.push_back(c == 'N' ? FeatureKind::Numeric : FeatureKind::Categorical);
  }
  auto trees = text::parse_int<std::size_t>(r.expect_field(r.line(), "trees"));
  if (!trees) r.fail("bad tree count");
  for (std::size_t t = 0; t < *trees; ++t) {
    const auto header = text::split(r.line(), ' ');
    auto seed = header.size() == 4 ? text::parse_int<std::uint64_t>(header[3]) : std::nullopt;
    if (header.size() != 4 || header[0] != "tree" || header[1] != std::to_string(t) || header[2] != "seed" || !seed) {
      r.fail("expected 'tree " + std::to_string(t) + " seed <seed>'");
    }
    model.tree_seeds.push_back(*seed);
    DecisionTree tree;
    r.read_node(tree, model.kinds.size(), 0);
    model.trees.push_back(std::move(tree));
    const std::string inbag_line = r.line();
    if (inbag_line.rfind("inbag ", 0) != 0) r.fail("expected inbag line");
    std::vector<std::uint32_t> counts;
    for (auto tok : text::split(std::string_view(inbag_line).substr(6), ',')) {
      auto c = text::parse_int<std::uint32_t>(tok);
      if (!c) r.fail("bad in-bag count");
      counts.push_back(*c);
    }
    if (counts.size() != model.rows) r.fail("in-bag count list has the wrong length");
    model.in_bag_counts.push_back(std::move(counts));
  }
  if (r.line() != "end") r.fail("expected 'end'");
  return model;
}

}  // namespace emopipe
