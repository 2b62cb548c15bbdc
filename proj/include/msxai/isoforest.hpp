#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/random.hpp"

namespace msxai::isoforest {

struct Node {
  int feature = -1;  // -1 marks a leaf
  double split = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count = 0;  // training points that reached this node
  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Model {
  std::vector<Tree> trees;
  std::size_t subsample_size = 0;
  std::size_t n_trees = 0;
  std::size_t n_features = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const Model&, const Model&) = default;
};

inline constexpr double kEulerGamma = std::numbers::egamma;

/// Average path length of an unsuccessful BST search over n points.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n);
  return 2.0 * (std::log(m - 1.0) + kEulerGamma) - 2.0 * (m - 1.0) / m;
}

inline std::size_t max_depth_for(std::size_t subsample) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(subsample)))));
}

namespace detail {

inline int grow(Tree& tree, const Matrix& X, std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                std::size_t depth, std::size_t max_depth, Rng& rng) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(Node{-1, 0.0, -1, -1, end - begin});
  if (end - begin <= 1 || depth >= max_depth) return id;

  const std::size_t F = X[idx[begin]].size();
  std::vector<std::size_t> candidates;
  std::vector<std::pair<double, double>> bounds(F);
  for (std::size_t f = 0; f < F; ++f) {
    double lo = X[idx[begin]][f], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = std::min(lo, X[idx[i]][f]);
      hi = std::max(hi, X[idx[i]][f]);
    }
    bounds[f] = {lo, hi};
    if (lo < hi) candidates.push_back(f);
  }
  if (candidates.empty()) return id;  // all points identical

  const std::size_t f = candidates[uniform_index(rng, candidates.size())];
  const auto [lo, hi] = bounds[f];
  double split = uniform(rng, lo, hi);
  if (!(split > lo)) split = std::nextafter(lo, hi);

  const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                  idx.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](std::size_t i) { return X[i][f] < split; });
  const std::size_t m = static_cast<std::size_t>(mid - idx.begin());
  tree.nodes[id].feature = static_cast<int>(f);
  tree.nodes[id].split = split;
  const int l = grow(tree, X, idx, begin, m, depth + 1, max_depth, rng);
  const int r = grow(tree, X, idx, m, end, depth + 1, max_depth, rng);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

}  // namespace detail

/// Fits n_trees isolation trees, each on its own seeded subsample drawn
/// without replacement and grown to depth ceil(log2(subsample_size)).
inline Model fit(const Matrix& X, std::size_t n_trees, std::size_t subsample_size, std::uint64_t seed) {
  if (X.size() < 2) throw Error(Errc::InvalidArgument, "isolation forest needs at least 2 rows");
  if (subsample_size < 2 || subsample_size > X.size())
    throw Error(Errc::InvalidArgument, "subsample_size must be in [2, rows]");
  if (n_trees == 0) throw Error(Errc::InvalidArgument, "n_trees must be positive");
  const std::size_t F = X.front().size();
  for (const auto& r : X)
    if (r.size() != F) throw Error(Errc::ArityMismatch, "row width");
  if (std::all_of(X.begin(), X.end(), [&](const Row& r) { return r == X.front(); }))
    throw Error(Errc::DegenerateData, "all rows identical");

  Model m{{}, subsample_size, n_trees, F, seed};
  const std::size_t max_depth = max_depth_for(subsample_size);
  m.trees.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, t));
    auto idx = sample_without_replacement(X.size(), subsample_size, rng);
    Tree tree;
    detail::grow(tree, X, idx, 0, idx.size(), 0, max_depth, rng);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

/// Depth of the leaf reached by x plus the expected remaining depth of the
/// unbuilt subtree at that leaf.
inline double path_length(const Tree& tree, std::span<const double> x) {
  int id = 0;
  double depth = 0.0;
  while (!tree.nodes[id].is_leaf()) {
    const auto& n = tree.nodes[id];
    id = x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
    depth += 1.0;
  }
  return depth + average_path_length(tree.nodes[id].count);
}

inline double score_from_mean_path(double mean_path, std::size_t subsample_size) {
  return std::exp2(-mean_path / average_path_length(subsample_size));
}

/// Anomaly score s(x) = 2^(-E[h(x)] / c(subsample_size)).
inline double anomaly_score(const Model& m, std::span<const double> x) {
  if (x.size() != m.n_features) throw Error(Errc::ArityMismatch, "isolation forest");
  if (m.trees.empty()) throw Error(Errc::UntrainedModel, "isolation forest");
  double total = 0.0;
  for (const auto& t : m.trees) total += path_length(t, x);
  return score_from_mean_path(total / static_cast<double>(m.trees.size()), m.subsample_size);
}

struct OutlierSplit {
  std::vector<std::size_t> kept;     // ascending
  std::vector<std::size_t> removed;  // ascending
  std::vector<double> scores;        // per input row
};

inline std::size_t removal_count(double contamination, std::size_t n) {
  return static_cast<std::size_t>(std::floor(contamination * static_cast<double>(n) + 1e-9));
}

/// Removes the floor(contamination * |X|) highest-scoring rows; equal scores
/// remove the lower index first.
inline OutlierSplit filter_outliers(const Matrix& X, double contamination, std::size_t n_trees,
                                    std::size_t subsample_size, std::uint64_t seed) {
  if (!(contamination >= 0.0 && contamination < 0.5))
    throw Error(Errc::InvalidArgument, "contamination must be in [0, 0.5)");
  OutlierSplit out;
  const std::size_t k = removal_count(contamination, X.size());
  if (k == 0) {
    out.kept = iota_indices(X.size());
    return out;
  }
  const auto model = fit(X, n_trees, subsample_size, seed);
  out.scores.reserve(X.size());
  for (const auto& r : X) out.scores.push_back(anomaly_score(model, r));
  auto order = iota_indices(X.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.scores[a] > out.scores[b]; });
  out.removed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.removed.begin(), out.removed.end());
  for (std::size_t i = 0, r = 0; i < X.size(); ++i) {
    if (r < out.removed.size() && out.removed[r] == i) ++r;
    else out.kept.push_back(i);
  }
  return out;
}

}  // namespace msxai::isoforest
