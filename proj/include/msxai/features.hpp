#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/label.hpp"
#include "msxai/spectra.hpp"

namespace msxai {

/// Five named biomarker windows B0..B4.
struct BiomarkerPanel {
  std::array<MzRange, 5> ranges;

  static BiomarkerPanel defaults() {
    return BiomarkerPanel{{MzRange(27900, 29400, "B0"), MzRange(55500, 59000, "B1"), MzRange(66400, 68100, "B2"),
                           MzRange(78600, 80500, "B3"), MzRange(111500, 115500, "B4")}};
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& r : ranges) {
      r.require_instrument_range();
      if (!names.insert(r.name).second) throw Error(Errc::InvalidArgument, "duplicate biomarker name " + r.name);
    }
  }
};

enum class SchemeKind { Raw, Binned, Statistical, Auc, Ratio };

struct FeatureScheme {
  SchemeKind kind = SchemeKind::Ratio;
  std::size_t bin_width = 0;  // Binned only

  friend bool operator==(const FeatureScheme&, const FeatureScheme&) = default;
};

inline std::string to_string(const FeatureScheme& s) {
  switch (s.kind) {
    case SchemeKind::Raw: return "raw";
    case SchemeKind::Binned: return "binned";
    case SchemeKind::Statistical: return "statistical";
    case SchemeKind::Auc: return "auc";
    case SchemeKind::Ratio: return "ratio";
  }
  return "ratio";
}

inline FeatureScheme parse_scheme(std::string_view name, std::size_t bin_width = 0) {
  if (name == "raw") return {SchemeKind::Raw, 0};
  if (name == "binned") {
    if (bin_width == 0) throw Error(Errc::InvalidArgument, "binned scheme needs bin_width >= 1");
    return {SchemeKind::Binned, bin_width};
  }
  if (name == "statistical") return {SchemeKind::Statistical, 0};
  if (name == "auc") return {SchemeKind::Auc, 0};
  if (name == "ratio") return {SchemeKind::Ratio, 0};
  throw Error(Errc::InvalidArgument, "unknown scheme '" + std::string(name) + "'");
}

/// Named feature values for one sample.
struct FeatureVector {
  std::string sample_id;
  FeatureScheme scheme;
  std::vector<std::string> names;
  std::vector<double> values;
  std::optional<Label> label;

  double operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw Error(Errc::NameMismatch, std::string(name));
  }
};

/// Trapezoidal area under the intensity curve using the points that fall
/// inside the closed window r.
inline double auc(const MassSpectrum& s, const MzRange& r) {
  const auto [first, last] = points_in(s, r);
  if (last - first < 2) throw Error(Errc::EmptyRange, r.name);
  const auto pts = s.points();
  double area = 0.0;
  for (std::size_t i = first + 1; i < last; ++i)
    area += 0.5 * (pts[i].intensity + pts[i - 1].intensity) * (pts[i].mz - pts[i - 1].mz);
  return area;
}

struct RatioDef {
  int numerator;
  int denominator;
};

// R0..R9: every ordered biomarker pair (i < j), numerator first.
inline constexpr std::array<RatioDef, 10> kRatioDefs{{{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2},
                                                      {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}};

inline std::vector<std::string> ratio_feature_names() {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < kRatioDefs.size(); ++i) names.push_back("R" + std::to_string(i));
  return names;
}

inline FeatureVector auc_features(const MassSpectrum& s, const BiomarkerPanel& panel) {
  FeatureVector fv{s.sample_id(), {SchemeKind::Auc, 0}, {}, {}, std::nullopt};
  for (const auto& r : panel.ranges) {
    fv.names.push_back(r.name);
    fv.values.push_back(auc(s, r));
  }
  return fv;
}

inline FeatureVector ratio_features(const MassSpectrum& s, const BiomarkerPanel& panel) {
  std::array<double, 5> areas{};
  for (std::size_t i = 0; i < 5; ++i) areas[i] = auc(s, panel.ranges[i]);
  FeatureVector fv{s.sample_id(), {SchemeKind::Ratio, 0}, ratio_feature_names(), {}, std::nullopt};
  for (const auto& d : kRatioDefs) {
    if (!(areas[d.denominator] > 0.0)) throw Error(Errc::ZeroDenominatorAuc, panel.ranges[d.denominator].name);
    fv.values.push_back(areas[d.numerator] / areas[d.denominator]);
  }
  return fv;
}

inline constexpr std::array<const char*, 7> kStatisticNames{"min", "max", "std", "var", "skew", "kurt", "peaks"};

/// Seven statistics per biomarker window (min, max, std, variance, skewness,
/// excess kurtosis, peak count); moments use population normalization.
inline FeatureVector statistical_features(const MassSpectrum& s, const BiomarkerPanel& panel) {
  FeatureVector fv{s.sample_id(), {SchemeKind::Statistical, 0}, {}, {}, std::nullopt};
  const auto pts = s.points();
  for (const auto& r : panel.ranges) {
    const auto [first, last] = points_in(s, r);
    if (last - first < 3) throw Error(Errc::EmptyRange, r.name);

    // Single-pass central moments (Pebay's update).
    double n = 0, mean = 0, m2 = 0, m3 = 0, m4 = 0;
    double lo = pts[first].intensity, hi = lo;
    for (std::size_t i = first; i < last; ++i) {
      const double x = pts[i].intensity;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      const double n1 = n;
      n += 1;
      const double delta = x - mean;
      const double dn = delta / n;
      const double dn2 = dn * dn;
      const double t = delta * dn * n1;
      mean += dn;
      m4 += t * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * m2 - 4 * dn * m3;
      m3 += t * dn * (n - 2) - 3 * dn * m2;
      m2 += t;
    }
    const double var = m2 / n;
    double skew = 0.0, kurt = 0.0;
    if (var > 0.0) {
      skew = (m3 / n) / std::pow(var, 1.5);
      kurt = (m4 / n) / (var * var) - 3.0;
    }

    std::vector<double> ys;
    for (std::size_t i = first; i < last; ++i) ys.push_back(pts[i].intensity);
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    double peaks = 0;
    for (std::size_t i = 1; i + 1 < ys.size(); ++i)
      if (ys[i] > ys[i - 1] && ys[i] > ys[i + 1] && ys[i] > median) peaks += 1;

    for (double v : {lo, hi, std::sqrt(var), var, skew, kurt, peaks}) fv.values.push_back(v);
    for (const char* stat : kStatisticNames) fv.names.push_back(r.name + "_" + stat);
  }
  return fv;
}

/// Concatenated window intensities, optionally averaged over consecutive
/// groups of `bin_width` points (a trailing partial group is averaged too).
inline FeatureVector raw_features(const MassSpectrum& s, const BiomarkerPanel& panel,
                                  std::optional<std::size_t> bin_width = std::nullopt) {
  const auto pts = s.points();
  std::optional<double> step;
  FeatureVector fv{s.sample_id(), {bin_width ? SchemeKind::Binned : SchemeKind::Raw, bin_width.value_or(0)}, {}, {},
                   std::nullopt};
  if (bin_width && *bin_width == 0) throw Error(Errc::InvalidArgument, "bin_width must be >= 1");
  for (const auto& r : panel.ranges) {
    const auto [first, last] = points_in(s, r);
    if (first == last) throw Error(Errc::EmptyRange, r.name);
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = pts[i].mz - pts[i - 1].mz;
      if (!step) step = d;
      else if (std::abs(d - *step) > 1e-6 * *step) throw Error(Errc::NonuniformGrid, r.name);
    }
    const std::size_t count = last - first;
    const std::size_t width = bin_width.value_or(1);
    if (width > count) throw Error(Errc::BinTooWide, r.name);
    for (std::size_t g = 0; g * width < count; ++g) {
      const std::size_t a = first + g * width;
      const std::size_t b = std::min(last, a + width);
      double sum = 0.0;
      for (std::size_t i = a; i < b; ++i) sum += pts[i].intensity;
      fv.values.push_back(sum / static_cast<double>(b - a));
      fv.names.push_back(r.name + "_" + std::to_string(g));
    }
  }
  return fv;
}

inline FeatureVector extract_features(const MassSpectrum& s, const BiomarkerPanel& panel, const FeatureScheme& scheme) {
  switch (scheme.kind) {
    case SchemeKind::Raw: return raw_features(s, panel);
    case SchemeKind::Binned: return raw_features(s, panel, scheme.bin_width);
    case SchemeKind::Statistical: return statistical_features(s, panel);
    case SchemeKind::Auc: return auc_features(s, panel);
    case SchemeKind::Ratio: return ratio_features(s, panel);
  }
  throw Error(Errc::InvalidArgument, "scheme");
}

/// Stacks labeled feature vectors into a Dataset. All vectors must share the
/// same column names and carry a label.
inline Dataset to_dataset(const std::vector<FeatureVector>& fvs) {
  Dataset d;
  if (fvs.empty()) return d;
  d.feature_names = fvs.front().names;
  for (const auto& fv : fvs) {
    if (fv.names != d.feature_names) throw Error(Errc::NameMismatch, fv.sample_id);
    if (!fv.label) throw Error(Errc::InvalidArgument, "unlabeled sample " + fv.sample_id);
    d.sample_ids.push_back(fv.sample_id);
    d.rows.push_back(fv.values);
    d.labels.push_back(*fv.label);
  }
  return d;
}

/// CSV with header `sample_id,label,<feature names>`; 17 significant digits
/// so values survive a round trip.
inline std::string features_to_csv(const std::vector<FeatureVector>& fvs) {
  std::string out = "sample_id,label";
  if (!fvs.empty())
    for (const auto& n : fvs.front().names) out += "," + n;
  out += "\n";
  char buf[40];
  for (const auto& fv : fvs) {
    out += fv.sample_id + "," + label_or_empty(fv.label);
    for (double v : fv.values) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace msxai
