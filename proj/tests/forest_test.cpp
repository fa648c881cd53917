#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "emopipe/dataset.hpp"
#include "emopipe/error.hpp"
#include "emopipe/forest.hpp"
#include "emopipe/gridrun.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace emopipe {
namespace {

using testing::TempDir;

TrainRow numeric_row(std::vector<double> x, int label) {
  TrainRow r;
  r.raw = std::move(x);
  r.label = ClassId(label);
  return r;
}

FeatureMatrix features(const std::vector<TrainRow>& rows) { return make_features(rows); }

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Two Gaussian blobs per class in `dim` dimensions with the given class
// sizes; `shift` separates the class means along every axis.
std::vector<TrainRow> blobs(const std::vector<std::size_t>& sizes, std::size_t dim, double shift,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainRow> rows;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      std::vector<double> x(dim);
      for (auto& v : x) v = shift * static_cast<double>(c) + rng.normal();
      rows.push_back(numeric_row(x, static_cast<int>(c) + 1));
    }
  }
  return rows;
}

// Synthetic generator output flattened into raw-feature training rows.
std::vector<TrainRow> generated_rows(double noise, std::uint64_t seed, double separation = 10) {
  DatasetConfig cfg{.subjects = 1, .videos = 16, .samples_per_video = 16, .channels = 4,
                    .class_separation = separation, .noise_sigma = noise, .seed = seed};
  const Dataset d = generate_synthetic(cfg);
  std::vector<TrainRow> rows;
  for (const auto& r : d.records)
    rows.push_back(numeric_row(r.channels, encode_label(d.ratings.at({r.subject, r.video})).value()));
  return rows;
}

TEST(Bootstrap, SingleRow) {
  const auto s = bootstrap_sample(1, 5);
  EXPECT_EQ(s.in_bag, (std::vector<std::size_t>{0}));
  EXPECT_TRUE(s.oob.empty());
}

TEST(Bootstrap, DeterministicSizedAndPartitioned) {
  const auto a = bootstrap_sample(300, 9);
  const auto b = bootstrap_sample(300, 9);
  EXPECT_EQ(a.in_bag, b.in_bag);
  EXPECT_EQ(a.oob, b.oob);
  EXPECT_EQ(a.in_bag.size(), 300u);
  EXPECT_TRUE(std::is_sorted(a.in_bag.begin(), a.in_bag.end()));
  std::vector<bool> drawn(300, false);
  for (auto i : a.in_bag) drawn[i] = true;
  for (std::size_t i = 0; i < 300; ++i) {
    EXPECT_EQ(!drawn[i], std::binary_search(a.oob.begin(), a.oob.end(), i));
  }
  EXPECT_NE(bootstrap_sample(300, 10).in_bag, a.in_bag);
}

TEST(Bootstrap, OobFractionNearInverseE) {
  double sum = 0;
  for (std::uint64_t t = 0; t < 200; ++t) sum += bootstrap_sample(1000, tree_seed(1, t)).oob.size() / 1000.0;
  EXPECT_NEAR(sum / 200, std::exp(-1.0), 0.02);
}

TEST(TreeSeed, LittleEndianPairHash) {
  // Frozen from an independent FNV-1a over struct.pack('<QQ', seed, index).
  EXPECT_EQ(tree_seed(7, 3), 8947270751909630337ull);
  EXPECT_EQ(tree_seed(0, 0), 9808874869469701221ull);
  EXPECT_EQ(tree_seed(0, 0), gridrun::stable_hash(std::string(16, '\0')));
}

TEST(BuildTree, PureNodeIsLeaf) {
  const auto data = features({numeric_row({1}, 3), numeric_row({2}, 3), numeric_row({5}, 3)});
  const auto tree = build_tree(data, all_rows(3), ForestParams{}, 1);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_TRUE(tree.nodes[0].is_leaf());
  EXPECT_EQ(tree.predict(std::vector<double>{100}).value(), 3);
}

TEST(BuildTree, OneFeatureSplitsAtMidpoint) {
  const auto data = features({numeric_row({0}, 1), numeric_row({1}, 2)});
  const auto tree = build_tree(data, all_rows(2), ForestParams{}, 1);
  ASSERT_EQ(tree.nodes.size(), 3u);
  EXPECT_EQ(tree.nodes[0].feature, 0);
  EXPECT_EQ(tree.nodes[0].threshold, 0.5);
  EXPECT_EQ(tree.predict(std::vector<double>{0}).value(), 1);
  EXPECT_EQ(tree.predict(std::vector<double>{1}).value(), 2);
  EXPECT_EQ(tree.nodes[tree.nodes[0].left].prediction, 1);
  EXPECT_EQ(tree.nodes[tree.nodes[0].right].prediction, 2);
}

double split_gain(const FeatureMatrix& data, std::span<const std::size_t> rows, const TreeNode& node) {
  auto gini = [](const std::map<int, double>& c, double n) {
    double g = 1.0;
    for (const auto& [k, v] : c) g -= (v / n) * (v / n);
    return g;
  };
  std::map<int, double> all, l, r;
  double nl = 0, nr = 0;
  for (auto i : rows) {
    const int y = data.labels[i].value();
    all[y] += 1;
    if (data.row(i)[static_cast<std::size_t>(node.feature)] <= node.threshold) {
      l[y] += 1;
      nl += 1;
    } else {
      r[y] += 1;
      nr += 1;
    }
  }
  const double n = nl + nr;
  return gini(all, n) - (nl / n) * gini(l, nl) - (nr / n) * gini(r, nr);
}

TEST(BuildTree, SeparableTwoFeatureSetFitsAndRootIsOptimal) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto rows = blobs({10, 10}, 2, 4.0, seed);
    const auto data = features(rows);
    const auto bag = bootstrap_sample(20, seed);
    std::vector<std::vector<double>> bx;
    std::vector<int> by;
    for (auto i : bag.in_bag) {
      const auto r = data.row(i);
      bx.emplace_back(r.begin(), r.end());
      by.push_back(data.labels[i].value());
    }
    ASSERT_TRUE(oracle::exactly_fittable(bx, by));
    ForestParams params;
    params.features_per_split = 2;
    const auto tree = build_tree(data, bag.in_bag, params, seed);
    for (auto i : bag.in_bag) EXPECT_EQ(tree.predict(data.row(i)), data.labels[i]);
    if (!tree.nodes[0].is_leaf()) {
      EXPECT_NEAR(split_gain(data, bag.in_bag, tree.nodes[0]), oracle::best_single_split_gain(bx, by), 1e-12);
    }
  }
}

TEST(BuildTree, CategoricalOneVsRest) {
  std::vector<TrainRow> rows;
  for (std::size_t c = 0; c < 8; ++c) {
    for (int rep = 0; rep < 3; ++rep) {
      TrainRow r;
      r.cluster = c;
      r.label = ClassId(static_cast<int>((c + 3) % 8) + 1);
      rows.push_back(r);
    }
  }
  const auto data = features(rows);
  EXPECT_EQ(data.kinds, (std::vector<FeatureKind>{FeatureKind::Categorical}));
  const auto tree = build_tree(data, all_rows(rows.size()), ForestParams{}, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(tree.predict(data.row(i)), rows[i].label);
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf()) EXPECT_EQ(n.kind, FeatureKind::Categorical);
  }
}

TEST(BuildTree, DepthAndNodeSizeLimits) {
  const auto rows = blobs({40, 40, 40}, 3, 0.5, 3);
  const auto data = features(rows);
  ForestParams shallow;
  shallow.max_depth = 2;
  EXPECT_LE(build_tree(data, all_rows(rows.size()), shallow, 1).depth(), 2u);

  ForestParams coarse;
  coarse.min_node_size = 10;
  const auto tree = build_tree(data, all_rows(rows.size()), coarse, 1);
  // Count the training rows reaching each leaf.
  std::map<const TreeNode*, int> reach;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::uint32_t n = 0;
    while (!tree.nodes[n].is_leaf()) {
      const auto& node = tree.nodes[n];
      n = data.row(i)[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    ++reach[&tree.nodes[n]];
  }
  for (const auto& [leaf, count] : reach) EXPECT_GE(count, 10);
}

TEST(BuildTree, LeafTieGoesToLowestClass) {
  // Identical features cannot be split, so the leaf sees one of each label.
  const auto data = features({numeric_row({1}, 6), numeric_row({1}, 2)});
  const auto tree = build_tree(data, all_rows(2), ForestParams{}, 1);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].prediction, 2);
}

ForestModel voting_model(const std::vector<int>& votes) {
  ForestModel m;
  m.kinds = {FeatureKind::Numeric};
  m.rows = 1;
  for (int v : votes) {
    DecisionTree t;
    t.nodes.push_back(TreeNode{.prediction = v});
    m.trees.push_back(t);
    m.tree_seeds.push_back(0);
    m.in_bag_counts.push_back({1});
  }
  return m;
}

TEST(Predict, MajorityVoteAndTieBreak) {
  const std::vector<double> x{0.0};
  EXPECT_EQ(predict(voting_model({4}), x).value(), 4);
  EXPECT_EQ(predict(voting_model({2, 2, 5}), x).value(), 2);
  EXPECT_EQ(predict(voting_model({2, 5}), x).value(), 2);
  EXPECT_EQ(predict(voting_model({5, 2}), x).value(), 2);
  EXPECT_EQ(predict(voting_model({7, 3, 7, 3, 1}), x).value(), 3);
  EXPECT_THROW(predict(voting_model({1}), std::vector<double>{0.0, 1.0}), DomainError);
}

TEST(Features, LayoutAndModes) {
  TrainRow a;
  a.cluster = 3;
  a.raw = {1.5, -2};
  a.label = ClassId(2);
  EXPECT_EQ(row_features(a), (std::vector<double>{3, 1.5, -2}));
  const auto m = make_features(std::vector<TrainRow>{a, a});
  EXPECT_EQ(m.kinds, (std::vector<FeatureKind>{FeatureKind::Categorical, FeatureKind::Numeric, FeatureKind::Numeric}));
  TrainRow b = a;
  b.cluster.reset();
  EXPECT_THROW(make_features(std::vector<TrainRow>{a, b}), DomainError);
  for (auto mode : {FeatureMode::ClusterOnly, FeatureMode::RawOnly, FeatureMode::ClusterAndRaw})
    EXPECT_EQ(parse_feature_mode(to_string(mode)), mode);
  EXPECT_THROW(parse_feature_mode("both"), ConfigError);
  ForestParams p;
  EXPECT_EQ(p.resolved_mtry(41), 6u);
  EXPECT_EQ(p.resolved_mtry(1), 1u);
}

TEST(TrainForest, SingleTree) {
  const auto data = features(blobs({20, 20}, 2, 3, 1));
  ForestParams p;
  p.trees = 1;
  const auto m = train_forest(data, p);
  ASSERT_EQ(m.trees.size(), 1u);
  for (std::size_t i = 0; i < data.rows(); ++i) EXPECT_EQ(predict(m, data.row(i)), m.trees[0].predict(data.row(i)));
  const auto oob = oob_evaluate(m, data);
  EXPECT_EQ(oob.evaluated, bootstrap_sample(data.rows(), m.tree_seeds[0]).oob.size());
  EXPECT_EQ(oob.evaluated + oob.skipped, data.rows());
}

TEST(TrainForest, DeterministicAcrossWorkers) {
  const auto data = features(generated_rows(2.0, 4));
  ForestParams p;
  p.trees = 30;
  p.seed = 17;
  p.workers = 1;
  const auto base = train_forest(data, p);
  const auto base_oob = oob_evaluate(base, data);
  for (std::size_t w : {2u, 4u, 7u}) {
    p.workers = w;
    const auto m = train_forest(data, p);
    EXPECT_EQ(m, base) << "workers=" << w;
    const auto oob = oob_evaluate(m, data);
    EXPECT_EQ(oob.confusion, base_oob.confusion);
    EXPECT_EQ(oob.metrics, base_oob.metrics);
  }
  for (std::size_t t = 0; t < base.trees.size(); ++t) EXPECT_EQ(base.tree_seeds[t], tree_seed(17, t));
}

TEST(Oob, PurityByConstruction) {
  const auto rows = blobs({70, 70, 60}, 3, 1.0, 5);
  const auto data = features(rows);
  ForestParams p;
  p.trees = 20;
  p.seed = 2;
  const auto model = train_forest(data, p);
  ASSERT_EQ(data.rows(), 200u);

  // Recompute the OOB confusion using only trees whose bootstrap never drew
  // the row.
  ConfusionMatrix expected;
  std::size_t skipped = 0;
  std::vector<std::vector<bool>> in_bag(p.trees, std::vector<bool>(200, false));
  for (std::size_t t = 0; t < p.trees; ++t) {
    const auto bag = bootstrap_sample(200, model.tree_seeds[t]);
    std::vector<std::uint32_t> counts(200, 0);
    for (auto i : bag.in_bag) {
      in_bag[t][i] = true;
      ++counts[i];
    }
    EXPECT_EQ(model.in_bag_counts[t], counts);
  }
  for (std::size_t i = 0; i < 200; ++i) {
    std::array<int, kClassCount> votes{};
    int voters = 0;
    for (std::size_t t = 0; t < p.trees; ++t) {
      if (in_bag[t][i]) continue;
      ++votes[model.trees[t].predict(data.row(i)).index()];
      ++voters;
    }
    if (voters == 0) {
      ++skipped;
      continue;
    }
    const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
    expected.add(data.labels[i].index(), static_cast<std::size_t>(best));
  }
  const auto oob = oob_evaluate(model, data);
  EXPECT_EQ(oob.confusion, expected);
  EXPECT_EQ(oob.skipped, skipped);
  EXPECT_EQ(oob.confusion.total(), oob.evaluated);
}

TEST(Oob, NoSkippedRowsWithManyTrees) {
  const auto data = features(blobs({50, 50}, 2, 2, 6));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ForestParams p;
    p.trees = 50;
    p.seed = seed;
    EXPECT_EQ(oob_evaluate(train_forest(data, p), data).skipped, 0u);
  }
}

TEST(Oob, SeparableEightClassData) {
  const auto data = features(generated_rows(0.5, 1));
  ForestParams p;
  p.trees = 100;
  const auto oob = oob_evaluate(train_forest(data, p), data);
  EXPECT_GE(oob.metrics.accuracy, 0.9);
  EXPECT_NEAR(oob.metrics.oob_error, 1 - oob.metrics.accuracy, 1e-15);
}

TEST(Oob, MajorityClassFavoured) {
  int favoured = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = features(blobs({450, 50}, 2, 1.0, 100 + seed));
    ForestParams p;
    p.trees = 50;
    p.seed = seed;
    const auto m = oob_evaluate(train_forest(data, p), data).metrics;
    if (*m.per_class_accuracy[0] > *m.per_class_accuracy[1]) ++favoured;
  }
  EXPECT_GE(favoured, 8);
}

TEST(Oob, AccuracyDegradesWithNoise) {
  double previous = 2.0;
  for (double noise : {1.0, 4.0, 8.0}) {
    std::vector<double> acc;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto data = features(generated_rows(noise, seed, 2.0));
      ForestParams p;
      p.trees = 40;
      p.seed = seed;
      acc.push_back(oob_evaluate(train_forest(data, p), data).metrics.accuracy);
    }
    std::sort(acc.begin(), acc.end());
    EXPECT_LE(acc[2], previous) << "noise " << noise;
    previous = acc[2];
  }
  EXPECT_LT(previous, 0.9);
}

TEST(Metrics, TwoClassExample) {
  const auto m = compute_metrics(ConfusionMatrix::from_rows({{90, 10}, {2, 8}}));
  EXPECT_NEAR(m.accuracy, 98.0 / 110.0, 1e-15);
  EXPECT_NEAR(*m.per_class_accuracy[0], 0.9, 1e-15);
  EXPECT_NEAR(*m.per_class_accuracy[1], 0.8, 1e-15);
  EXPECT_NEAR(m.reliability, 0.85, 1e-15);
  EXPECT_NEAR(m.reliability_sd, 0.05, 1e-15);
  EXPECT_NEAR(m.oob_error, 12.0 / 110.0, 1e-15);
}

TEST(Metrics, DiagonalAndAbsentClass) {
  const auto d = compute_metrics(ConfusionMatrix::from_rows({{3, 0, 0}, {0, 5, 0}, {0, 0, 1}}));
  EXPECT_EQ(d.accuracy, 1.0);
  EXPECT_EQ(d.reliability, 1.0);
  EXPECT_EQ(d.reliability_sd, 0.0);
  const auto a = compute_metrics(ConfusionMatrix::from_rows({{3, 1, 0}, {0, 0, 0}, {1, 0, 1}}));
  EXPECT_FALSE(a.per_class_accuracy[1].has_value());
  EXPECT_NEAR(a.reliability, (0.75 + 0.5) / 2, 1e-15);
  EXPECT_THROW(compute_metrics(ConfusionMatrix(8)), DomainError);
}

TEST(Metrics, InvariantUnderClassRelabelling) {
  Rng rng(8);
  for (int round = 0; round < 50; ++round) {
    std::vector<std::vector<std::uint64_t>> rows(8, std::vector<std::uint64_t>(8));
    for (auto& r : rows)
      for (auto& c : r) c = rng.uniform_index(4) == 0 ? 0 : rng.uniform_index(30);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 8; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    std::vector<std::vector<std::uint64_t>> permuted(8, std::vector<std::uint64_t>(8));
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) permuted[perm[i]][perm[j]] = rows[i][j];
    const auto a = compute_metrics(ConfusionMatrix::from_rows(rows));
    const auto b = compute_metrics(ConfusionMatrix::from_rows(permuted));
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_NEAR(a.reliability, b.reliability, 1e-12);
    EXPECT_NEAR(a.reliability_sd, b.reliability_sd, 1e-12);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.per_class_accuracy[i], b.per_class_accuracy[perm[i]]);
  }
}

TEST(Confusion, CsvAndTotals) {
  auto cm = ConfusionMatrix::from_rows({{1, 2}, {0, 4}});
  EXPECT_EQ(cm.total(), 7u);
  EXPECT_EQ(cm.trace(), 5u);
  EXPECT_EQ(cm.row_sum(0), 3u);
  EXPECT_EQ(cm.to_csv(), "true\\pred,1,2\n1,1,2\n2,0,4\n");
}

TEST(ModelFile, RoundTrip) {
  TempDir tmp;
  std::vector<TrainRow> rows = generated_rows(3.0, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].cluster = i % 8;
  const auto data = features(rows);
  ForestParams p;
  p.trees = 12;
  p.seed = 99;
  const auto m = train_forest(data, p);
  write_model(tmp / "f.model", m);
  const auto back = read_model(tmp / "f.model");
  EXPECT_EQ(back, m);
  for (std::size_t i = 0; i < data.rows(); ++i) EXPECT_EQ(predict(back, data.row(i)), predict(m, data.row(i)));
  write_model(tmp / "g.model", back);
  EXPECT_EQ(io::read_file(tmp / "f.model"), io::read_file(tmp / "g.model"));
  io::write_file(tmp / "bad.model", "emopipe-forest 2\n");
  EXPECT_THROW(read_model(tmp / "bad.model"), ParseError);
}

}  // namespace
}  // namespace emopipe
