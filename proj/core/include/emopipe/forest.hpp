#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emopipe/dataset.hpp"

namespace emopipe {

enum class FeatureKind { Numeric, Categorical };

// Which inputs the classifier sees: the cluster id alone, the raw channels
// alone, or both.
enum class FeatureMode { ClusterOnly, RawOnly, ClusterAndRaw };

std::string_view to_string(FeatureMode mode);
// "cluster", "raw" or "cluster+raw".
FeatureMode parse_feature_mode(std::string_view name);

struct TrainRow {
  std::optional<std::size_t> cluster;  // categorical feature 0 when present
  std::vector<double> raw;
  ClassId label{1};
};

// Row-major feature table with a uniform layout.
struct FeatureMatrix {
  std::vector<FeatureKind> kinds;
  std::vector<double> values;  // rows x kinds.size()
  std::vector<ClassId> labels;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t features() const noexcept { return kinds.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * kinds.size(), kinds.size());
  }
};

// Throws DomainError if rows disagree on layout.
FeatureMatrix make_features(std::span<const TrainRow> rows);
std::vector<double> row_features(const TrainRow& row);

struct ForestParams {
  std::size_t trees = 100;
  std::size_t features_per_split = 0;  // 0: floor(sqrt(M)), at least 1
  std::size_t min_node_size = 1;
  std::size_t max_depth = 0;           // 0: unlimited
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::size_t resolved_mtry(std::size_t features) const;
};

struct TreeNode {
  // Leaf when feature < 0.
  int feature = -1;
  FeatureKind kind = FeatureKind::Numeric;
  // Numeric: go left when x <= threshold. Categorical: go left when x == threshold.
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  int prediction = 1;  // majority class of the node's training rows

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  ClassId predict(std::span<const double> features) const;
  std::size_t depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct BootstrapSample {
  std::vector<std::size_t> in_bag;  // n draws with replacement, ascending
  std::vector<std::size_t> oob;     // indices never drawn, ascending
};

BootstrapSample bootstrap_sample(std::size_t n, std::uint64_t tree_seed);

// Grows an unpruned CART tree on the in-bag multiset using Gini impurity.
DecisionTree build_tree(const FeatureMatrix& data, std::span<const std::size_t> in_bag,
                        const ForestParams& params, std::uint64_t tree_seed);

struct ForestModel {
  std::vector<FeatureKind> kinds;
  std::size_t rows = 0;
  std::vector<DecisionTree> trees;
  std::vector<std::uint64_t> tree_seeds;
  // Per tree, how often each training row was drawn.
  std::vector<std::vector<std::uint32_t>> in_bag_counts;

  bool operator==(const ForestModel&) const = default;
};

// Tree i's seed: FNV-1a over the little-endian bytes of (master_seed, i).
std::uint64_t tree_seed(std::uint64_t master_seed, std::uint64_t tree_index);

ForestModel train_forest(const FeatureMatrix& data, const ForestParams& params);

// Majority vote over all trees; ties go to the lowest class id. Throws
// DomainError on a feature layout mismatch.
ClassId predict(const ForestModel& model, std::span<const double> features);
ClassId predict(const ForestModel& model, const TrainRow& row);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kClassCount);

  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  // Header `true\pred,1,...,N`, then one row per true class.
  std::string to_csv() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  double accuracy = 0.0;
  double reliability = 0.0;     // macro average of defined per-class accuracies
  double reliability_sd = 0.0;  // population sd of the same
  std::vector<std::optional<double>> per_class_accuracy;  // nullopt: class absent
  double oob_error = 0.0;

  bool operator==(const Metrics&) const = default;
};

// Throws DomainError on an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& cm);

struct OobEvaluation {
  ConfusionMatrix confusion;
  Metrics metrics;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // rows that were in-bag for every tree
};

// Each row is voted on only by the trees that never drew it.
OobEvaluation oob_evaluate(const ForestModel& model, const FeatureMatrix& data);

// Versioned text model: header, then one section per tree with its preorder
// node list and in-bag counts.
void write_model(const std::filesystem::path& path, const ForestModel& model);
ForestModel read_model(const std::filesystem::path& path);

}  // namespace emopipe
