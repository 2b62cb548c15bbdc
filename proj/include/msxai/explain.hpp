#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/forest.hpp"
#include "msxai/random.hpp"

namespace msxai::explain {

enum class Method { IFI, PFI, SHAP };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::IFI: return "IFI";
    case Method::PFI: return "PFI";
    case Method::SHAP: return "SHAP";
  }
  return "SHAP";
}

struct GlobalImportance {
  Method method = Method::SHAP;
  std::vector<std::string> feature_names;
  std::vector<double> scores;
  std::vector<std::string> ranking;  // descending score, ties by feature index

  std::size_t rank_of(std::string_view name) const {
    for (std::size_t i = 0; i < ranking.size(); ++i)
      if (ranking[i] == name) return i;
    throw Error(Errc::NameMismatch, std::string(name));
  }
};

inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  auto order = iota_indices(scores.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline GlobalImportance make_importance(Method method, std::vector<std::string> names, std::vector<double> scores) {
  if (names.size() != scores.size()) throw Error(Errc::LengthMismatch, "importance names/scores");
  GlobalImportance g{method, std::move(names), std::move(scores), {}};
  for (auto i : descending_order(g.scores)) g.ranking.push_back(g.feature_names[i]);
  return g;
}

// ---- impurity importance ---------------------------------------------------

/// Impurity decrease of one split, weighted by the node's share of the
/// tree's root samples.
inline double split_gain(const forest::Node& node, const forest::Node& left, const forest::Node& right,
                         double root_samples) {
  const double n = node.n_samples();
  return n / root_samples *
         (forest::gini(node.counts) - left.n_samples() / n * forest::gini(left.counts) -
          right.n_samples() / n * forest::gini(right.counts));
}

/// Mean decrease in Gini impurity: per-feature gains summed within each tree,
/// averaged over trees, then normalized to sum to 1.
inline GlobalImportance impurity_importance(const forest::RandomForestModel& m) {
  if (m.trees.empty()) throw Error(Errc::UntrainedModel, "impurity_importance");
  std::vector<double> scores(m.n_features(), 0.0);
  for (const auto& t : m.trees) {
    const double root = t.nodes.front().n_samples();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) continue;
      scores[static_cast<std::size_t>(n.feature)] += split_gain(n, t.nodes[n.left], t.nodes[n.right], root);
    }
  }
  double total = 0.0;
  for (auto& s : scores) {
    s /= static_cast<double>(m.trees.size());
    total += s;
  }
  if (total > 0.0)
    for (auto& s : scores) s /= total;
  return make_importance(Method::IFI, m.feature_names, std::move(scores));
}

// ---- permutation importance -------------------------------------------------

/// Accuracy drop when one column is shuffled, averaged over n_repeats
/// permutations. Permutation (f, r) is seeded from derive_seed(seed, f, r).
template <typename PredictLabel>
GlobalImportance permutation_importance(const PredictLabel& predict, const Matrix& X, std::span<const Label> y,
                                        std::vector<std::string> names, std::size_t n_repeats, std::uint64_t seed) {
  if (X.size() != y.size()) throw Error(Errc::LengthMismatch, "X/y");
  if (X.size() < 2) throw Error(Errc::InvalidArgument, "permutation importance needs >= 2 rows");
  if (n_repeats == 0) throw Error(Errc::InvalidArgument, "n_repeats");
  const std::size_t F = names.size();
  for (const auto& r : X)
    if (r.size() != F) throw Error(Errc::ArityMismatch, "permutation_importance");

  // Integer tallies keep an unchanged column at exactly zero.
  auto correct = [&](const Matrix& data) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) ok += predict(std::span<const double>(data[i])) == y[i];
    return ok;
  };
  const std::size_t baseline = correct(X);
  std::vector<double> scores(F, 0.0);
  Matrix work = X;
  for (std::size_t f = 0; f < F; ++f) {
    long long diff = 0;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      Rng rng(derive_seed(seed, f, r));
      auto perm = iota_indices(X.size());
      shuffle(perm, rng);
      for (std::size_t i = 0; i < X.size(); ++i) work[i][f] = X[perm[i]][f];
      diff += static_cast<long long>(baseline) - static_cast<long long>(correct(work));
    }
    for (std::size_t i = 0; i < X.size(); ++i) work[i][f] = X[i][f];
    scores[f] = static_cast<double>(diff) / (static_cast<double>(n_repeats) * static_cast<double>(X.size()));
  }
  return make_importance(Method::PFI, std::move(names), std::move(scores));
}

// ---- Shapley values -----------------------------------------------------------

inline constexpr std::size_t kMaxExactFeatures = 16;

/// Coalition weight |S|! (F - |S| - 1)! / F!.
inline double shapley_weight(std::size_t subset_size, std::size_t n_features) {
  if (n_features == 0 || subset_size >= n_features) throw Error(Errc::InvalidArgument, "shapley_weight");
  // 1 / (F * C(F-1, s)), with the binomial built incrementally.
  const double w = 1.0 / static_cast<double>(n_features);
  double binom = 1.0;
  const std::size_t k = std::min(subset_size, n_features - 1 - subset_size);
  for (std::size_t i = 1; i <= k; ++i)
    binom = binom * static_cast<double>(n_features - 1 - k + i) / static_cast<double>(i);
  return w / binom;
}

struct ShapExplanation {
  std::string sample_id;
  std::vector<std::string> feature_names;
  double base_value = 0.0;
  std::vector<double> phi;
  std::vector<double> feature_values;
  double model_output = 0.0;

  double additivity_gap() const {
    return std::abs(base_value + std::accumulate(phi.begin(), phi.end(), 0.0) - model_output);
  }
};

/// Coalition values v(S) for every subset S (bit i set = feature i taken from
/// x). v(S) is the mean model output over background rows with the features
/// outside S taken from the background row.
template <typename Model>
std::vector<double> coalition_values(const Model& f, std::span<const double> x, const Matrix& background) {
  const std::size_t F = x.size();
  const std::size_t n_masks = std::size_t{1} << F;
  std::vector<double> v(n_masks, 0.0);
  std::vector<double> z(F);
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (const auto& b : background) {
      for (std::size_t i = 0; i < F; ++i) z[i] = (mask >> i) & 1U ? x[i] : b[i];
      sum += f(std::span<const double>(z));
    }
    v[mask] = sum / static_cast<double>(background.size());
  }
  return v;
}

/// Exact interventional Shapley values by enumerating every coalition.
template <typename Model>
ShapExplanation shap_values(const Model& f, std::span<const double> x, const Matrix& background,
                            std::vector<std::string> names = {}, std::string sample_id = {}) {
  const std::size_t F = x.size();
  if (F == 0) throw Error(Errc::InvalidArgument, "no features");
  if (F > kMaxExactFeatures) throw Error(Errc::TooManyFeatures, std::to_string(F));
  if (background.empty()) throw Error(Errc::EmptyBackground, sample_id);
  for (const auto& b : background)
    if (b.size() != F) throw Error(Errc::ArityMismatch, "background row");
  if (names.empty())
    for (std::size_t i = 0; i < F; ++i) names.push_back("f" + std::to_string(i));
  if (names.size() != F) throw Error(Errc::ArityMismatch, "feature names");

  const auto v = coalition_values(f, x, background);
  std::vector<double> weight(F);
  for (std::size_t s = 0; s < F; ++s) weight[s] = shapley_weight(s, F);

  ShapExplanation e;
  e.sample_id = std::move(sample_id);
  e.feature_names = std::move(names);
  e.feature_values.assign(x.begin(), x.end());
  e.phi.assign(F, 0.0);
  e.base_value = v.front();
  e.model_output = f(x);
  for (std::size_t i = 0; i < F; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double phi = 0.0;
    for (std::size_t mask = 0; mask < v.size(); ++mask) {
      if (mask & bit) continue;
      phi += weight[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
    }
    e.phi[i] = phi;
  }
  return e;
}

/// Seeded subsample of at most `cap` rows, kept in original order.
inline Matrix select_background(const Matrix& rows, std::size_t cap, std::uint64_t seed) {
  if (rows.size() <= cap) return rows;
  Rng rng(derive_seed(seed, 0xBAC6));
  auto idx = sample_without_replacement(rows.size(), cap, rng);
  std::sort(idx.begin(), idx.end());
  Matrix out;
  for (auto i : idx) out.push_back(rows[i]);
  return out;
}

// ---- quantiles ----------------------------------------------------------------

/// Linear-interpolation quantile of a sorted sample (q in [0, 1]).
inline double sample_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(Errc::InvalidArgument, "empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Position of v within a sorted population on [0, 1]: tied values get
/// their mean rank, values between order statistics interpolate linearly,
/// values outside the population clamp to 0 or 1.
inline double value_quantile(std::span<const double> sorted, double v) {
  const std::size_t n = sorted.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "empty population");
  if (n == 1) return 0.5;
  const double denom = static_cast<double>(n - 1);
  if (v < sorted.front()) return 0.0;
  if (v > sorted.back()) return 1.0;
  const auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
  const auto hi = std::upper_bound(sorted.begin(), sorted.end(), v);
  if (lo != hi) {
    const double first = static_cast<double>(lo - sorted.begin());
    const double last = static_cast<double>(hi - sorted.begin()) - 1.0;
    return 0.5 * (first + last) / denom;
  }
  const std::size_t k = static_cast<std::size_t>(lo - sorted.begin());  // sorted[k-1] < v < sorted[k]
  const double t = (v - sorted[k - 1]) / (sorted[k] - sorted[k - 1]);
  return (static_cast<double>(k - 1) + t) / denom;
}

// ---- SHAP matrix and aggregations -------------------------------------------

struct ShapMatrix {
  std::vector<std::string> feature_names;
  std::vector<ShapExplanation> rows;

  std::vector<double> column_phi(std::size_t f) const {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r.phi[f]);
    return c;
  }
  std::vector<double> column_values(std::size_t f) const {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r.feature_values[f]);
    return c;
  }
};

template <typename Model>
ShapMatrix shap_matrix(const Model& f, const Dataset& data, const Matrix& background) {
  ShapMatrix m{data.feature_names, {}};
  m.rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    m.rows.push_back(shap_values(f, data.rows[i], background, data.feature_names, data.sample_ids[i]));
  return m;
}

/// Mean |phi| per feature.
inline GlobalImportance global_shap_importance(const ShapMatrix& m) {
  if (m.rows.empty()) throw Error(Errc::EmptySummary, "global_shap_importance");
  std::vector<double> scores(m.feature_names.size(), 0.0);
  for (const auto& r : m.rows)
    for (std::size_t f = 0; f < scores.size(); ++f) scores[f] += std::abs(r.phi[f]);
  for (auto& s : scores) s /= static_cast<double>(m.rows.size());
  return make_importance(Method::SHAP, m.feature_names, std::move(scores));
}

struct SummaryRow {
  std::string feature;
  std::string sample_id;
  double phi = 0.0;
  double value = 0.0;
  double quantile = 0.0;  // feature value's position within the matrix population
};

/// Long-format rows for a violin/beeswarm plot, grouped by feature.
inline std::vector<SummaryRow> shap_summary(const ShapMatrix& m) {
  if (m.rows.empty()) throw Error(Errc::EmptySummary, "shap_summary");
  std::vector<SummaryRow> out;
  out.reserve(m.rows.size() * m.feature_names.size());
  for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
    auto values = m.column_values(f);
    std::sort(values.begin(), values.end());
    for (const auto& r : m.rows)
      out.push_back({m.feature_names[f], r.sample_id, r.phi[f], r.feature_values[f],
                     value_quantile(values, r.feature_values[f])});
  }
  return out;
}

}  // namespace msxai::explain
