#include <gtest/gtest.h>

#include <set>

#include "msxai/forest.hpp"
#include "msxai/random.hpp"

using namespace msxai;
using namespace msxai::forest;

namespace {

struct Data {
  Matrix X;
  std::vector<Label> y;
};

Data labeled_cloud(std::size_t n, std::size_t F, Rng& rng, const std::function<Label(const Row&, Rng&)>& label) {
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    Row r(F);
    for (auto& v : r) v = uniform_open01(rng);
    d.y.push_back(label(r, rng));
    d.X.push_back(std::move(r));
  }
  return d;
}

Label noise_label(const Row&, Rng& rng) { return uniform_open01(rng) < 0.5 ? Label::Positive : Label::Negative; }

DecisionTree constant_leaf(Label l) {
  Node n;
  n.counts = l == Label::Positive ? ClassCounts{0, 3} : ClassCounts{3, 0};
  return DecisionTree{{n}};
}

RandomForestModel voting_forest(std::size_t positive, std::size_t total) {
  RandomForestModel m;
  m.feature_names = {"x"};
  for (std::size_t t = 0; t < total; ++t) m.trees.push_back(constant_leaf(t < positive ? Label::Positive : Label::Negative));
  return m;
}

// Recursively checks the structural tree invariants against the rows
// reaching each node.
void check_tree(const DecisionTree& t, int id, const Hyperparameters& hp) {
  const auto& n = t.nodes[id];
  if (n.is_leaf()) {
    EXPECT_GE(n.n_samples(), static_cast<double>(hp.min_samples_leaf));
    return;
  }
  const auto& l = t.nodes[n.left];
  const auto& r = t.nodes[n.right];
  EXPECT_EQ(l.counts[0] + r.counts[0], n.counts[0]);
  EXPECT_EQ(l.counts[1] + r.counts[1], n.counts[1]);
  const double weighted = (l.n_samples() * gini(l.counts) + r.n_samples() * gini(r.counts)) / n.n_samples();
  EXPECT_LT(weighted, gini(n.counts));
  check_tree(t, n.left, hp);
  check_tree(t, n.right, hp);
}

}  // namespace

TEST(Gini, Examples) {
  EXPECT_EQ(gini(ClassCounts{10, 0}), 0.0);
  EXPECT_EQ(gini(ClassCounts{5, 5}), 0.5);
  EXPECT_DOUBLE_EQ(gini(ClassCounts{3, 1}), 0.375);
  try {
    gini(ClassCounts{0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyNode);
  }
}

TEST(Hyperparameters, DefaultsMatchTable) {
  const Hyperparameters hp;
  EXPECT_EQ(hp.n_estimators, 100u);
  EXPECT_TRUE(hp.bootstrap);
  EXPECT_EQ(hp.criterion, "gini");
  EXPECT_EQ(hp.max_depth, 3u);
  EXPECT_EQ(hp.min_samples_split, 2u);
  EXPECT_EQ(hp.min_samples_leaf, 1u);
  EXPECT_EQ(hp.features_per_split, FeaturesPerSplit::Sqrt);
  EXPECT_EQ(detail::candidate_count(10, FeaturesPerSplit::Sqrt), 3u);
}

TEST(FitForest, StumpsOnSeparatingFeature) {
  Rng rng(1);
  Matrix X;
  std::vector<Label> y;
  for (int i = 0; i < 40; ++i) {
    const bool pos = i % 2;
    X.push_back({uniform_open01(rng), pos ? 100.0 + i : static_cast<double>(i)});
    y.push_back(pos ? Label::Positive : Label::Negative);
  }
  Hyperparameters hp;
  hp.max_depth = 1;
  hp.features_per_split = FeaturesPerSplit::All;
  hp.seed = 3;
  const auto m = fit_forest(X, y, hp);
  ASSERT_EQ(m.trees.size(), 100u);
  for (const auto& t : m.trees) {
    ASSERT_EQ(t.depth(), 1u);
    EXPECT_EQ(t.nodes[0].feature, 1);
  }
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_EQ(predict(m, X[i]), y[i]);
  EXPECT_EQ(predict_proba(m, Row{0.5, 1000.0}), 1.0);
  EXPECT_EQ(predict_proba(m, Row{0.5, -1000.0}), 0.0);
}

TEST(FitForest, DeterministicSerialization) {
  Rng rng(2);
  const auto d = labeled_cloud(80, 5, rng, [](const Row& r, Rng&) { return r[0] + r[2] > 1 ? Label::Positive : Label::Negative; });
  Hyperparameters hp;
  hp.seed = 99;
  EXPECT_EQ(to_json(fit_forest(d.X, d.y, hp)).dump(), to_json(fit_forest(d.X, d.y, hp)).dump());
}

TEST(FitForest, NoiseLabelsGiveChanceCvAccuracy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, 31));
    const auto d = labeled_cloud(200, 10, rng, noise_label);
    Hyperparameters hp;
    hp.seed = seed;
    hp.n_estimators = 50;
    const double acc = cross_val_accuracy(d.X, d.y, hp, stratified_kfold(d.y, 5, seed));
    EXPECT_GE(acc, 0.35) << seed;
    EXPECT_LE(acc, 0.65) << seed;
  }
}

TEST(FitForest, TreeInvariants) {
  Rng rng(3);
  const auto d = labeled_cloud(150, 6, rng, [](const Row& r, Rng& g) {
    return r[1] * r[3] + 0.2 * uniform_open01(g) > 0.35 ? Label::Positive : Label::Negative;
  });
  for (std::size_t depth : {1u, 3u, 5u, 0u})
    for (std::size_t leaf : {1u, 4u}) {
      Hyperparameters hp;
      hp.max_depth = depth;
      hp.min_samples_leaf = leaf;
      hp.n_estimators = 20;
      hp.seed = depth * 10 + leaf;
      const auto m = fit_forest(d.X, d.y, hp);
      EXPECT_EQ(m.trees.size(), 20u);
      for (const auto& t : m.trees) {
        if (depth) EXPECT_LE(t.depth(), depth);
        check_tree(t, 0, hp);
      }
    }
}

TEST(FitForest, ThresholdsAreMidpointsOfDistinctValues) {
  Rng rng(4);
  Matrix X;
  std::vector<Label> y;
  for (int i = 0; i < 30; ++i) {
    X.push_back({static_cast<double>(uniform_index(rng, 10)), static_cast<double>(uniform_index(rng, 7))});
    y.push_back(X.back()[0] + X.back()[1] > 7 ? Label::Positive : Label::Negative);
  }
  Hyperparameters hp;
  hp.max_depth = 0;
  const auto m = fit_forest(X, y, hp);
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) EXPECT_EQ(n.threshold, std::floor(n.threshold) + 0.5 * (n.threshold != std::floor(n.threshold)));
}

TEST(FitForest, SplitTieBreaksToLowerFeature) {
  // Two identical separating columns: the first must win every split.
  Matrix X;
  std::vector<Label> y;
  for (int i = 0; i < 20; ++i) {
    X.push_back({static_cast<double>(i), static_cast<double>(i)});
    y.push_back(i < 10 ? Label::Negative : Label::Positive);
  }
  Hyperparameters hp;
  hp.features_per_split = FeaturesPerSplit::All;
  hp.bootstrap = false;
  hp.n_estimators = 3;
  for (const auto& t : fit_forest(X, y, hp).trees) {
    EXPECT_EQ(t.nodes[0].feature, 0);
    EXPECT_EQ(t.nodes[0].threshold, 9.5);
  }
}

TEST(FitForest, Errors) {
  try {
    fit_forest(Matrix{{1.0}, {2.0}}, std::vector<Label>{Label::Positive, Label::Positive}, Hyperparameters{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingleClassTraining);
  }
  EXPECT_THROW(fit_forest(Matrix{{1.0}, {2.0}}, std::vector<Label>{Label::Positive}, Hyperparameters{}), Error);
  const auto m = voting_forest(1, 2);
  try {
    predict_proba(m, Row{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ArityMismatch);
  }
}

TEST(PredictProba, CountsVotes) {
  EXPECT_DOUBLE_EQ(predict_proba(voting_forest(73, 100), Row{0.0}), 0.73);
  Node tied;
  tied.counts = {2, 2};
  EXPECT_EQ(tied.vote(), Label::Negative);
}

TEST(PredictProba, SingleTreeIsZeroOrOne) {
  Rng rng(5);
  const auto d = labeled_cloud(60, 3, rng, noise_label);
  Hyperparameters hp;
  hp.n_estimators = 1;
  const auto m = fit_forest(d.X, d.y, hp);
  for (int i = 0; i < 100; ++i) {
    const double p = predict_proba(m, Row{uniform_open01(rng), uniform_open01(rng), uniform_open01(rng)});
    EXPECT_TRUE(p == 0.0 || p == 1.0);
  }
}

TEST(PredictProba, EqualsMeanOfTreeVotes) {
  Rng rng(6);
  const auto d = labeled_cloud(100, 4, rng, [](const Row& r, Rng&) { return r[0] > r[1] ? Label::Positive : Label::Negative; });
  const auto m = fit_forest(d.X, d.y, Hyperparameters{});
  for (int i = 0; i < 50; ++i) {
    const Row x{uniform_open01(rng), uniform_open01(rng), uniform_open01(rng), uniform_open01(rng)};
    double votes = 0.0;
    for (const auto& t : m.trees) {
      // Independent walk of the node array.
      int id = 0;
      while (t.nodes[id].feature >= 0) id = x[t.nodes[id].feature] <= t.nodes[id].threshold ? t.nodes[id].left : t.nodes[id].right;
      votes += t.nodes[id].counts[1] > t.nodes[id].counts[0];
    }
    EXPECT_DOUBLE_EQ(predict_proba(m, x), votes / m.trees.size());
  }
}

TEST(Predict, StrictHalfThreshold) {
  EXPECT_EQ(label_from_probability(0.51), Label::Positive);
  EXPECT_EQ(label_from_probability(0.50), Label::Negative);
  EXPECT_EQ(label_from_probability(0.49), Label::Negative);
  EXPECT_EQ(predict(voting_forest(50, 100), Row{0.0}), Label::Negative);
  EXPECT_EQ(predict(voting_forest(51, 100), Row{0.0}), Label::Positive);
}

TEST(FitForest, MonotoneTransformKeepsTrainingPaths) {
  Rng rng(7);
  auto d = labeled_cloud(120, 3, rng, [](const Row& r, Rng&) { return r[0] + 0.5 * r[2] > 0.7 ? Label::Positive : Label::Negative; });
  Hyperparameters hp;
  hp.max_depth = 0;
  hp.seed = 12;
  hp.bootstrap = false;  // every tree sees every training row
  const auto base = fit_forest(d.X, d.y, hp);
  auto T = d.X;
  for (auto& r : T) r[0] = std::exp(5.0 * r[0]) + r[0] * r[0] * r[0];
  const auto mapped = fit_forest(T, d.y, hp);
  for (std::size_t i = 0; i < d.X.size(); ++i) EXPECT_EQ(predict_proba(base, d.X[i]), predict_proba(mapped, T[i]));

  // Positive affine maps carry the midpoints along, so fresh queries agree too.
  auto A = d.X;
  for (auto& r : A) r[2] = 4.0 * r[2] - 1.0;
  const auto affine = fit_forest(A, d.y, hp);
  for (int i = 0; i < 200; ++i) {
    Row q{uniform_open01(rng), uniform_open01(rng), uniform_open01(rng)};
    Row qa = q;
    qa[2] = 4.0 * q[2] - 1.0;
    EXPECT_EQ(predict_proba(base, q), predict_proba(affine, qa));
  }
}

TEST(FitForest, SingleFullTreeFitsConsistentData) {
  Rng rng(8);
  const auto d = labeled_cloud(100, 4, rng, noise_label);
  Hyperparameters hp;
  hp.n_estimators = 1;
  hp.bootstrap = false;
  hp.features_per_split = FeaturesPerSplit::All;
  hp.max_depth = 0;
  const auto m = fit_forest(d.X, d.y, hp);
  for (std::size_t i = 0; i < d.X.size(); ++i) EXPECT_EQ(predict(m, d.X[i]), d.y[i]);
}

TEST(StratifiedKFold, Examples) {
  std::vector<Label> y(10, Label::Positive);
  y.insert(y.end(), 10, Label::Negative);
  for (const auto& f : stratified_kfold(y, 5, 1)) {
    EXPECT_EQ(f.size(), 4u);
    std::size_t pos = 0;
    for (auto i : f) pos += y[i] == Label::Positive;
    EXPECT_EQ(pos, 2u);
  }

  std::vector<Label> z(41, Label::Positive);
  z.insert(z.end(), 65, Label::Negative);
  std::multiset<std::size_t> sizes;
  for (const auto& f : stratified_kfold(z, 5, 2)) {
    sizes.insert(f.size());
    std::size_t pos = 0;
    for (auto i : f) pos += z[i] == Label::Positive;
    EXPECT_TRUE(pos == 8 || pos == 9) << pos;
  }
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{21, 21, 21, 21, 22}));
}

TEST(StratifiedKFold, PartitionAndBalanceProperty) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + uniform_index(rng, 200);
    const std::size_t k = 2 + uniform_index(rng, 8);
    std::vector<Label> y(n);
    for (auto& v : y) v = uniform_open01(rng) < 0.4 ? Label::Positive : Label::Negative;
    const std::size_t npos = count_label(y, Label::Positive);
    if (npos < k || n - npos < k) continue;
    const auto folds = stratified_kfold(y, k, trial);
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
      std::size_t pos = 0;
      for (auto i : f) {
        ++seen[i];
        pos += y[i] == Label::Positive;
      }
      const double expect_pos = static_cast<double>(npos) * f.size() / n;
      EXPECT_LT(std::abs(pos - expect_pos), 1.0 + 1e-9);
      const double expect_neg = static_cast<double>(n - npos) * f.size() / n;
      EXPECT_LT(std::abs((f.size() - pos) - expect_neg), 1.0 + 1e-9);
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(StratifiedKFold, TooFewPerClass) {
  std::vector<Label> y{Label::Positive, Label::Positive, Label::Negative, Label::Negative, Label::Negative};
  try {
    stratified_kfold(y, 3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewPerClass);
  }
}

TEST(TrainTestSplit, StratifiedSeventyThirty) {
  std::vector<Label> y(60, Label::Positive);
  y.insert(y.end(), 92, Label::Negative);
  const auto s = stratified_train_test_split(y, 0.3, 5);
  EXPECT_EQ(s.test.size(), 46u);
  EXPECT_EQ(s.train.size(), 106u);
  std::size_t pos = 0;
  for (auto i : s.test) pos += y[i] == Label::Positive;
  EXPECT_EQ(pos, 18u);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  const auto again = stratified_train_test_split(y, 0.3, 5);
  EXPECT_EQ(again.test, s.test);
}

TEST(GridSearch, SingleConfigurationAndTableSize) {
  Rng rng(10);
  const auto d = labeled_cloud(60, 3, rng, [](const Row& r, Rng&) { return r[0] > 0.5 ? Label::Positive : Label::Negative; });
  Hyperparameters hp;
  hp.n_estimators = 10;
  const auto one = grid_search_cv(d.X, d.y, {hp}, 5, 1);
  EXPECT_EQ(one.best, hp);
  EXPECT_EQ(one.table.size(), 1u);
  EXPECT_EQ(one.table[0].fold_accuracy.size(), 5u);

  GridSpec spec;
  const auto grid = spec.expand(4);
  EXPECT_EQ(grid.size(), 18u);
  EXPECT_EQ(grid.front().n_estimators, 50u);
  EXPECT_EQ(grid.back().n_estimators, 200u);
  for (const auto& g : grid) EXPECT_EQ(g.seed, 4u);
}

TEST(GridSearch, XorNeedsDepth) {
  Rng rng(11);
  const auto d = labeled_cloud(200, 2, rng, [](const Row& r, Rng&) {
    return (r[0] > 0.5) != (r[1] > 0.5) ? Label::Positive : Label::Negative;
  });
  Hyperparameters shallow, deep;
  shallow.max_depth = 1;
  deep.max_depth = 3;
  shallow.features_per_split = deep.features_per_split = FeaturesPerSplit::All;
  shallow.n_estimators = deep.n_estimators = 30;
  const auto r = grid_search_cv(d.X, d.y, {shallow, deep}, 5, 3);
  EXPECT_EQ(r.best_index, 1u);
  EXPECT_GT(r.table[1].mean_accuracy, r.table[0].mean_accuracy + 0.2);
  EXPECT_EQ(r.table.size(), 2u);
}

TEST(GridSearch, TiesKeepGridOrder) {
  Rng rng(12);
  const auto d = labeled_cloud(60, 2, rng, [](const Row& r, Rng&) { return r[0] > 0.5 ? Label::Positive : Label::Negative; });
  Hyperparameters a;
  a.n_estimators = 5;
  auto b = a;
  b.criterion = "gini";
  b.min_samples_split = 2;
  const auto r = grid_search_cv(d.X, d.y, {a, b}, 5, 1);
  EXPECT_EQ(r.table[0].mean_accuracy, r.table[1].mean_accuracy);
  EXPECT_EQ(r.best_index, 0u);
}

TEST(ForestJson, RoundTripAndVersion) {
  Rng rng(13);
  const auto d = labeled_cloud(80, 3, rng, [](const Row& r, Rng&) { return r[1] > 0.3 ? Label::Positive : Label::Negative; });
  Hyperparameters hp;
  hp.n_estimators = 7;
  hp.seed = 4;
  const auto m = fit_forest(d.X, d.y, hp, {"a", "b", "c"});
  const auto j = nlohmann::json::parse(to_json(m).dump());
  EXPECT_EQ(forest_from_json(j), m);
  auto bad = j;
  bad["format_version"] = 2;
  try {
    forest_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedVersion);
  }
}
