#include <gtest/gtest.h>

#include <functional>
#include <numeric>

#include "msxai/isoforest.hpp"
#include "msxai/random.hpp"

using namespace msxai;
using namespace msxai::isoforest;

namespace {

Matrix uniform_cloud(std::size_t n, std::size_t F, Rng& rng) {
  Matrix X(n, Row(F));
  for (auto& r : X)
    for (auto& v : r) v = uniform_open01(rng);
  return X;
}

std::size_t tree_depth(const Tree& t, int id = 0) {
  const auto& n = t.nodes[id];
  if (n.is_leaf()) return 0;
  return 1 + std::max(tree_depth(t, n.left), tree_depth(t, n.right));
}

// Walks every internal node and checks its split lies inside the observed
// range of the rows that reached it.
void check_split_ranges(const Tree& t, const Matrix& X, const std::vector<std::size_t>& rows, int id) {
  const auto& n = t.nodes[id];
  EXPECT_EQ(n.count, rows.size());
  if (n.is_leaf()) return;
  double lo = X[rows[0]][n.feature], hi = lo;
  std::vector<std::size_t> l, r;
  for (auto i : rows) {
    lo = std::min(lo, X[i][n.feature]);
    hi = std::max(hi, X[i][n.feature]);
    (X[i][n.feature] < n.split ? l : r).push_back(i);
  }
  EXPECT_GT(n.split, lo);
  EXPECT_LE(n.split, hi);
  check_split_ranges(t, X, l, n.left);
  check_split_ranges(t, X, r, n.right);
}

// Harmonic-number form of c(n), summed exactly.
double c_exact(std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 1; i < n; ++i) h += 1.0 / static_cast<double>(i);
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

}  // namespace

TEST(AveragePathLength, ClosedForms) {
  EXPECT_EQ(average_path_length(2), 1.0);
  EXPECT_EQ(average_path_length(1), 0.0);
  for (std::size_t n : {3u, 10u, 64u, 256u, 4096u})
    EXPECT_NEAR(average_path_length(n), c_exact(n), 1.0 / static_cast<double>(n - 1)) << n;  // H(m) - ln m - gamma < 1/(2m)
  const double c256 = 2.0 * (std::log(255.0) + 0.5772156649015329) - 2.0 * 255.0 / 256.0;
  EXPECT_NEAR(average_path_length(256), c256, 1e-12);
}

TEST(AnomalyScore, DepthOneIsolationAt256) {
  // Every tree isolates x at depth 1: left leaf holds x alone, right leaf the rest.
  Model m;
  m.subsample_size = 256;
  m.n_features = 1;
  m.n_trees = 10;
  for (int t = 0; t < 10; ++t) m.trees.push_back(Tree{{Node{0, 0.5, 1, 2, 256}, Node{-1, 0, -1, -1, 1}, Node{-1, 0, -1, -1, 255}}});
  const double oracle = std::exp2(-1.0 / (2.0 * (std::log(255.0) + 0.5772156649015329) - 2.0 * 255.0 / 256.0));
  const double x[1] = {0.0};
  EXPECT_NEAR(anomaly_score(m, x), oracle, 1e-12);
  EXPECT_NEAR(oracle, 0.9346, 5e-4);
}

TEST(AnomalyScore, FarOutlierBeatsMedianPoint) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, 77));
    auto X = uniform_cloud(1000, 2, rng);
    X.push_back({10.0, 10.0});
    const auto m = fit(X, 100, 256, seed);
    const double center[2] = {0.5, 0.5};
    wins += anomaly_score(m, X.back()) > anomaly_score(m, center);
  }
  EXPECT_GE(wins, 99);
}

TEST(AnomalyScore, BoundsAndArity) {
  Rng rng(1);
  const auto X = uniform_cloud(200, 3, rng);
  const auto m = fit(X, 50, 64, 9);
  for (int i = 0; i < 200; ++i) {
    const double q[3] = {uniform(rng, -100, 100), uniform(rng, -1, 2), uniform(rng, 0, 1)};
    const double s = anomaly_score(m, q);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  const double bad[2] = {0, 0};
  try {
    anomaly_score(m, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ArityMismatch);
  }
}

TEST(Fit, ShapeDepthAndSplitRanges) {
  Rng rng(2);
  const auto X = uniform_cloud(150, 4, rng);
  const auto m = fit(X, 100, 64, 5);
  ASSERT_EQ(m.trees.size(), 100u);
  EXPECT_EQ(max_depth_for(64), 6u);
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    EXPECT_LE(tree_depth(m.trees[t]), 6u);
    // Recreate the subsample the tree was grown on.
    Rng sub(derive_seed(5, t));
    const auto idx = sample_without_replacement(X.size(), 64, sub);
    check_split_ranges(m.trees[t], X, idx, 0);
  }
}

TEST(Fit, DeterministicForSeed) {
  Rng rng(3);
  const auto X = uniform_cloud(150, 4, rng);
  EXPECT_EQ(fit(X, 100, 64, 17), fit(X, 100, 64, 17));
  EXPECT_NE(fit(X, 100, 64, 17), fit(X, 100, 64, 18));
  const auto a = filter_outliers(X, 0.1, 100, 64, 4), b = filter_outliers(X, 0.1, 100, 64, 4);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_EQ(a.removed, b.removed);
}

TEST(Fit, Errors) {
  try {
    fit({{1.0, 2.0}, {1.0, 2.0}}, 10, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateData);
  }
  EXPECT_THROW(fit({{1.0}}, 10, 1, 0), Error);
  EXPECT_THROW(fit({{1.0}, {2.0}}, 10, 3, 0), Error);
}

TEST(FilterOutliers, RemovalCounts) {
  Rng rng(4);
  const auto X = uniform_cloud(152, 3, rng);
  const auto r = filter_outliers(X, 20.0 / 152.0, 100, 64, 1);
  EXPECT_EQ(r.removed.size(), 20u);
  EXPECT_EQ(r.kept.size(), 132u);
  const auto none = filter_outliers(X, 0.0, 100, 64, 1);
  EXPECT_EQ(none.kept.size(), 152u);
  EXPECT_TRUE(none.removed.empty());
  EXPECT_THROW(filter_outliers(X, 0.5, 100, 64, 1), Error);
  EXPECT_THROW(filter_outliers(X, -0.1, 100, 64, 1), Error);
}

TEST(FilterOutliers, RemovesHighestScoresWithIndexTieBreak) {
  Rng rng(12);
  const auto X = uniform_cloud(60, 2, rng);
  const auto r = filter_outliers(X, 0.2, 100, 32, 3);
  double min_removed = 1.0, max_kept = 0.0;
  for (auto i : r.removed) min_removed = std::min(min_removed, r.scores[i]);
  for (auto i : r.kept) max_kept = std::max(max_kept, r.scores[i]);
  EXPECT_GE(min_removed, max_kept);
  // With duplicated rows the scores tie and the lower index goes first.
  Matrix dup(10, Row{0.0, 0.0});
  for (int i = 0; i < 10; ++i) dup.push_back({static_cast<double>(i % 2) * 1e-3 + 5.0, 5.0});
  const auto d = filter_outliers(dup, 0.25, 50, 20, 1);
  ASSERT_EQ(d.removed.size(), 5u);
  std::vector<std::size_t> order(dup.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d.scores[a] > d.scores[b]; });
  std::vector<std::size_t> expect(order.begin(), order.begin() + 5);
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(d.removed, expect);
}

TEST(FilterOutliers, PlantedOutliersRemoved) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(seed, 5));
    Matrix X;
    for (int i = 0; i < 100; ++i) X.push_back({standard_normal(rng), standard_normal(rng), standard_normal(rng)});
    for (int i = 0; i < 5; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / 5.0;
      X.push_back({40.0 * std::cos(angle), 40.0 * std::sin(angle), 30.0 + 5.0 * i});
    }
    const auto r = filter_outliers(X, 5.0 / 105.0, 100, 64, seed);
    EXPECT_EQ(r.removed, (std::vector<std::size_t>{100, 101, 102, 103, 104})) << "seed " << seed;
  }
}

TEST(AnomalyScore, RankingSurvivesAffineMaps) {
  Rng rng(6);
  const auto X = uniform_cloud(128, 3, rng);
  const double a[3] = {3.0, 0.25, 7.0}, b[3] = {-2.0, 10.0, 0.5};
  auto map = [&](const Row& r) {
    Row out(3);
    for (int f = 0; f < 3; ++f) out[f] = a[f] * r[f] + b[f];
    return out;
  };
  Matrix Y;
  for (const auto& r : X) Y.push_back(map(r));
  const auto mx = fit(X, 100, 64, 21), my = fit(Y, 100, 64, 21);
  int checked = 0, agree = 0;
  for (int i = 0; i < 200; ++i) {
    const Row p = {uniform(rng, -0.5, 1.5), uniform(rng, -0.5, 1.5), uniform(rng, -0.5, 1.5)};
    const Row q = {uniform(rng, -0.5, 1.5), uniform(rng, -0.5, 1.5), uniform(rng, -0.5, 1.5)};
    const double dx = anomaly_score(mx, p) - anomaly_score(mx, q);
    if (std::abs(dx) < 1e-6) continue;
    ++checked;
    agree += (dx > 0) == (anomaly_score(my, map(p)) > anomaly_score(my, map(q)));
  }
  EXPECT_GT(checked, 150);
  EXPECT_EQ(agree, checked);
}
