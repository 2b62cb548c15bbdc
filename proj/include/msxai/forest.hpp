#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/label.hpp"
#include "msxai/random.hpp"

namespace msxai::forest {

enum class FeaturesPerSplit { Sqrt, All };

struct Hyperparameters {
  std::size_t n_estimators = 100;
  bool bootstrap = true;
  std::string criterion = "gini";
  std::size_t max_depth = 3;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  FeaturesPerSplit features_per_split = FeaturesPerSplit::Sqrt;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators == 0) throw Error(Errc::InvalidConfig, "n_estimators");
    if (criterion != "gini") throw Error(Errc::InvalidConfig, "criterion");
    if (min_samples_split < 2) throw Error(Errc::InvalidConfig, "min_samples_split");
    if (min_samples_leaf < 1) throw Error(Errc::InvalidConfig, "min_samples_leaf");
  }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

using ClassCounts = std::array<double, 2>;  // indexed by Label

/// Gini impurity 1 - sum p_k^2.
inline double gini(std::span<const double> counts) {
  double total = 0.0, sq = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) throw Error(Errc::EmptyNode, "gini");
  for (double c : counts) sq += (c / total) * (c / total);
  return 1.0 - sq;
}

inline double gini(const ClassCounts& c) { return gini(std::span<const double>(c)); }

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // x[feature] <= threshold
  int right = -1;  // x[feature] >  threshold
  ClassCounts counts{};

  bool is_leaf() const { return feature < 0; }
  double n_samples() const { return counts[0] + counts[1]; }
  // Tied leaves vote Negative.
  Label vote() const { return counts[1] > counts[0] ? Label::Positive : Label::Negative; }
  friend bool operator==(const Node&, const Node&) = default;
};

struct DecisionTree {
  std::vector<Node> nodes;  // nodes[0] is the root

  const Node& leaf_for(std::span<const double> x) const {
    int id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& n = nodes[id];
      id = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[id];
  }

  Label vote(std::span<const double> x) const { return leaf_for(x).vote(); }

  std::size_t depth() const { return depth_from(0); }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::size_t depth_from(int id) const {
    const auto& n = nodes[id];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  Hyperparameters hyperparameters;
  std::vector<std::string> feature_names;
  ClassCounts class_counts{};

  std::size_t n_features() const { return feature_names.size(); }
  friend bool operator==(const RandomForestModel&, const RandomForestModel&) = default;
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline std::size_t candidate_count(std::size_t F, FeaturesPerSplit mode) {
  if (mode == FeaturesPerSplit::All) return F;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(F)))));
}

// Best split over the candidate features. Ties keep the lowest feature index
// and then the lowest threshold, because candidates are scanned in that order
// and only a strictly larger gain replaces the incumbent.
inline SplitChoice best_split(const Matrix& X, std::span<const Label> y, std::span<const std::size_t> rows,
                              const ClassCounts& parent, std::span<const std::size_t> features,
                              std::size_t min_leaf) {
  constexpr double kTieTolerance = 1e-12;
  const double n = parent[0] + parent[1];
  const double parent_gini = gini(parent);
  SplitChoice best;
  std::vector<std::pair<double, int>> column(rows.size());
  for (std::size_t f : features) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      column[i] = {X[rows[i]][f], static_cast<int>(y[rows[i]])};
    std::sort(column.begin(), column.end());
    ClassCounts left{};
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      left[static_cast<std::size_t>(column[i].second)] += 1.0;
      const double a = column[i].first, b = column[i + 1].first;
      if (!(a < b)) continue;
      const double nl = left[0] + left[1];
      const double nr = n - nl;
      if (nl < static_cast<double>(min_leaf) || nr < static_cast<double>(min_leaf)) continue;
      const ClassCounts right{parent[0] - left[0], parent[1] - left[1]};
      const double gain = parent_gini - (nl / n) * gini(left) - (nr / n) * gini(right);
      if (gain > best.gain + kTieTolerance) {
        double mid = 0.5 * (a + b);
        if (!(mid < b)) mid = a;
        best = {static_cast<int>(f), mid, gain};
      }
    }
  }
  return best;
}

inline int grow(DecisionTree& tree, const Matrix& X, std::span<const Label> y, std::vector<std::size_t> rows,
                std::size_t depth, const Hyperparameters& hp, Rng& rng) {
  ClassCounts counts{};
  for (auto r : rows) counts[static_cast<std::size_t>(y[r])] += 1.0;
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(Node{-1, 0.0, -1, -1, counts});

  const double n = counts[0] + counts[1];
  const bool depth_capped = hp.max_depth != 0 && depth >= hp.max_depth;
  if (depth_capped || counts[0] == 0.0 || counts[1] == 0.0 || n < static_cast<double>(hp.min_samples_split) ||
      n < 2.0 * static_cast<double>(hp.min_samples_leaf))
    return id;

  const std::size_t F = X[rows.front()].size();
  std::vector<std::size_t> features;
  if (hp.features_per_split == FeaturesPerSplit::All) {
    features = iota_indices(F);
  } else {
    features = sample_without_replacement(F, candidate_count(F, hp.features_per_split), rng);
    std::sort(features.begin(), features.end());
  }
  const auto split = best_split(X, y, rows, counts, features, hp.min_samples_leaf);
  if (split.feature < 0) return id;

  std::vector<std::size_t> left, right;
  for (auto r : rows) (X[r][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(r);
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  const int l = grow(tree, X, y, std::move(left), depth + 1, hp, rng);
  const int r = grow(tree, X, y, std::move(right), depth + 1, hp, rng);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

}  // namespace detail

/// Trains a random forest. Tree t draws its bootstrap sample and its
/// per-split feature subsets from a seed derived from (hp.seed, t).
inline RandomForestModel fit_forest(const Matrix& X, std::span<const Label> y, const Hyperparameters& hp,
                                    std::vector<std::string> feature_names = {}) {
  hp.validate();
  if (X.size() != y.size()) throw Error(Errc::LengthMismatch, "X/y");
  if (X.size() < 2) throw Error(Errc::InvalidArgument, "need at least 2 rows");
  const std::size_t F = X.front().size();
  for (const auto& r : X)
    if (r.size() != F) throw Error(Errc::ArityMismatch, "row width");
  if (F == 0) throw Error(Errc::InvalidArgument, "no features");
  if (count_label(y, Label::Positive) == 0 || count_label(y, Label::Negative) == 0)
    throw Error(Errc::SingleClassTraining, "fit_forest");
  if (feature_names.empty())
    for (std::size_t f = 0; f < F; ++f) feature_names.push_back("f" + std::to_string(f));
  if (feature_names.size() != F) throw Error(Errc::ArityMismatch, "feature_names");

  RandomForestModel m;
  m.hyperparameters = hp;
  m.feature_names = std::move(feature_names);
  m.class_counts = {static_cast<double>(count_label(y, Label::Negative)),
                    static_cast<double>(count_label(y, Label::Positive))};
  m.trees.reserve(hp.n_estimators);
  for (std::size_t t = 0; t < hp.n_estimators; ++t) {
    Rng rng(derive_seed(hp.seed, t));
    std::vector<std::size_t> rows;
    if (hp.bootstrap) {
      rows.reserve(X.size());
      for (std::size_t i = 0; i < X.size(); ++i) rows.push_back(uniform_index(rng, X.size()));
    } else {
      rows = iota_indices(X.size());
    }
    DecisionTree tree;
    detail::grow(tree, X, y, std::move(rows), 0, hp, rng);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

inline RandomForestModel fit_forest(const Dataset& d, const Hyperparameters& hp) {
  d.validate();
  return fit_forest(d.rows, d.labels, hp, d.feature_names);
}

/// Fraction of trees whose leaf votes Positive.
inline double predict_proba(const RandomForestModel& m, std::span<const double> x) {
  if (x.size() != m.n_features()) throw Error(Errc::ArityMismatch, "forest");
  if (m.trees.empty()) throw Error(Errc::UntrainedModel, "forest");
  std::size_t votes = 0;
  for (const auto& t : m.trees) votes += t.vote(x) == Label::Positive;
  return static_cast<double>(votes) / static_cast<double>(m.trees.size());
}

inline Label label_from_probability(double p) { return p > 0.5 ? Label::Positive : Label::Negative; }

inline Label predict(const RandomForestModel& m, std::span<const double> x) {
  return label_from_probability(predict_proba(m, x));
}

inline double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw Error(Errc::LengthMismatch, "accuracy");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

using Folds = std::vector<std::vector<std::size_t>>;

/// Stratified k folds: each class is shuffled with the seed and dealt
/// round-robin, continuing the deal position across classes so fold sizes
/// differ by at most one.
inline Folds stratified_kfold(std::span<const Label> y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidArgument, "k must be >= 2");
  Folds folds(k);
  std::size_t next = 0;
  for (Label cls : {Label::Negative, Label::Positive}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) members.push_back(i);
    if (members.size() < k)
      throw Error(Errc::TooFewPerClass, std::string(to_string(cls)) + " has " + std::to_string(members.size()));
    Rng rng(derive_seed(seed, static_cast<int>(cls)));
    shuffle(members, rng);
    for (auto i : members) folds[next++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified hold-out split. The test size is ceil(test_fraction * n),
/// allocated across classes by largest remainder.
inline TrainTestSplit stratified_train_test_split(std::span<const Label> y, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error(Errc::InvalidArgument, "test_fraction");
  const std::size_t n = y.size();
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(y[i])].push_back(i);
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  for (std::size_t c = 0; c < 2; ++c) {
    const double exact = static_cast<double>(members[c].size()) * static_cast<double>(n_test) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
  }
  std::size_t left = n_test - quota[0] - quota[1];
  while (left > 0) {
    const std::size_t c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
    --left;
  }
  TrainTestSplit s;
  for (std::size_t c = 0; c < 2; ++c) {
    Rng rng(derive_seed(seed, c, 0x5917));
    shuffle(members[c], rng);
    for (std::size_t i = 0; i < members[c].size(); ++i) (i < quota[c] ? s.test : s.train).push_back(members[c][i]);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct GridRow {
  Hyperparameters hyperparameters;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridResult {
  Hyperparameters best;
  std::size_t best_index = 0;
  std::vector<GridRow> table;
};

inline double cross_val_accuracy(const Matrix& X, std::span<const Label> y, const Hyperparameters& hp,
                                 const Folds& folds, std::vector<double>* per_fold = nullptr) {
  double total = 0.0;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    Matrix Xtr;
    std::vector<Label> ytr;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j == k) continue;
      for (auto i : folds[j]) {
        Xtr.push_back(X[i]);
        ytr.push_back(y[i]);
      }
    }
    const auto model = fit_forest(Xtr, ytr, hp);
    std::vector<Label> pred, truth;
    for (auto i : folds[k]) {
      pred.push_back(predict(model, X[i]));
      truth.push_back(y[i]);
    }
    const double acc = accuracy(pred, truth);
    if (per_fold) per_fold->push_back(acc);
    total += acc;
  }
  return total / static_cast<double>(folds.size());
}

/// Exhaustive search scored by mean stratified k-fold accuracy. Equal scores
/// keep the earlier grid entry.
inline GridResult grid_search_cv(const Matrix& X, std::span<const Label> y, const std::vector<Hyperparameters>& grid,
                                 std::size_t k, std::uint64_t seed) {
  if (grid.empty()) throw Error(Errc::InvalidArgument, "empty grid");
  const auto folds = stratified_kfold(y, k, seed);
  GridResult result;
  double best = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    GridRow row{grid[g], {}, 0.0};
    row.mean_accuracy = cross_val_accuracy(X, y, grid[g], folds, &row.fold_accuracy);
    if (row.mean_accuracy > best) {
      best = row.mean_accuracy;
      result.best = grid[g];
      result.best_index = g;
    }
    result.table.push_back(std::move(row));
  }
  return result;
}

/// Hyperparameter lattice; expanded as a cartesian product with
/// n_estimators varying slowest.
struct GridSpec {
  std::vector<std::size_t> n_estimators{50, 100, 200};
  std::vector<std::size_t> max_depth{2, 3, 5};
  std::vector<std::size_t> min_samples_leaf{1, 2};
  std::vector<std::size_t> min_samples_split{2};
  std::vector<bool> bootstrap{true};
  std::vector<FeaturesPerSplit> features_per_split{FeaturesPerSplit::Sqrt};

  std::vector<Hyperparameters> expand(std::uint64_t seed) const {
    std::vector<Hyperparameters> out;
    for (auto ne : n_estimators)
      for (auto md : max_depth)
        for (auto leaf : min_samples_leaf)
          for (auto split : min_samples_split)
            for (bool bs : bootstrap)
              for (auto fps : features_per_split) {
                Hyperparameters hp;
                hp.n_estimators = ne;
                hp.max_depth = md;
                hp.min_samples_leaf = leaf;
                hp.min_samples_split = split;
                hp.bootstrap = bs;
                hp.features_per_split = fps;
                hp.seed = seed;
                out.push_back(hp);
              }
    return out;
  }
};

// ---- persistence ----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline std::string to_string(FeaturesPerSplit f) { return f == FeaturesPerSplit::All ? "all" : "sqrt"; }

inline FeaturesPerSplit parse_features_per_split(const std::string& s) {
  if (s == "sqrt") return FeaturesPerSplit::Sqrt;
  if (s == "all") return FeaturesPerSplit::All;
  throw Error(Errc::ConfigParse, "features_per_split");
}

inline nlohmann::ordered_json to_json(const Hyperparameters& hp) {
  return {{"n_estimators", hp.n_estimators},
          {"bootstrap", hp.bootstrap},
          {"criterion", hp.criterion},
          {"max_depth", hp.max_depth},
          {"min_samples_split", hp.min_samples_split},
          {"min_samples_leaf", hp.min_samples_leaf},
          {"features_per_split", to_string(hp.features_per_split)},
          {"seed", hp.seed}};
}

inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters hp = {}) {
  try {
    if (j.contains("n_estimators")) hp.n_estimators = j.at("n_estimators").get<std::size_t>();
    if (j.contains("bootstrap")) hp.bootstrap = j.at("bootstrap").get<bool>();
    if (j.contains("criterion")) hp.criterion = j.at("criterion").get<std::string>();
    if (j.contains("max_depth")) hp.max_depth = j.at("max_depth").get<std::size_t>();
    if (j.contains("min_samples_split")) hp.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    if (j.contains("min_samples_leaf")) hp.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    if (j.contains("features_per_split"))
      hp.features_per_split = parse_features_per_split(j.at("features_per_split").get<std::string>());
    if (j.contains("seed")) hp.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigParse, std::string("hyperparameters: ") + e.what());
  }
  hp.validate();
  return hp;
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  try {
    if (j.contains("n_estimators")) g.n_estimators = j.at("n_estimators").get<std::vector<std::size_t>>();
    if (j.contains("max_depth")) g.max_depth = j.at("max_depth").get<std::vector<std::size_t>>();
    if (j.contains("min_samples_leaf")) g.min_samples_leaf = j.at("min_samples_leaf").get<std::vector<std::size_t>>();
    if (j.contains("min_samples_split"))
      g.min_samples_split = j.at("min_samples_split").get<std::vector<std::size_t>>();
    if (j.contains("bootstrap")) g.bootstrap = j.at("bootstrap").get<std::vector<bool>>();
    if (j.contains("features_per_split")) {
      g.features_per_split.clear();
      for (const auto& s : j.at("features_per_split")) g.features_per_split.push_back(parse_features_per_split(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigParse, std::string("grid: ") + e.what());
  }
  return g;
}

inline nlohmann::ordered_json to_json(const RandomForestModel& m) {
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts[0], n.counts[1]});
    trees.push_back(std::move(nodes));
  }
  return {{"format_version", kModelFormatVersion},
          {"hyperparameters", to_json(m.hyperparameters)},
          {"feature_names", m.feature_names},
          {"class_counts", {m.class_counts[0], m.class_counts[1]}},
          {"trees", std::move(trees)}};
}

inline RandomForestModel forest_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) throw Error(Errc::UnsupportedVersion, std::to_string(version));
    RandomForestModel m;
    m.hyperparameters = hyperparameters_from_json(j.at("hyperparameters"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.class_counts = {j.at("class_counts").at(0).get<double>(), j.at("class_counts").at(1).get<double>()};
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      for (const auto& jn : jt)
        t.nodes.push_back(Node{jn.at(0).get<int>(), jn.at(1).get<double>(), jn.at(2).get<int>(), jn.at(3).get<int>(),
                               {jn.at(4).get<double>(), jn.at(5).get<double>()}});
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigParse, std::string("model: ") + e.what());
  }
}

}  // namespace msxai::forest
