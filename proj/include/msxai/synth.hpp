#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/features.hpp"
#include "msxai/label.hpp"
#include "msxai/random.hpp"
#include "msxai/spectra.hpp"

namespace msxai::synth {

/// Gaussian peak with class-dependent median height. Per-sample heights are
/// log-normal: median * exp(height_sd * z).
struct PeakProfile {
  std::string name;
  double center = 0.0;
  double width = 0.0;  // standard deviation in m/z
  double height_negative = 1.0;
  double height_positive = 1.0;
  double height_sd = 0.0;  // log scale
};

struct GeneratorConfig {
  std::size_t n_positive = 60;
  std::size_t n_negative = 92;
  std::uint64_t seed = 2020;
  double noise_sd = 0.002;
  double mz_lo = kInstrumentMzLo;
  double mz_hi = kInstrumentMzHi;
  double mz_step = 20.0;
  std::vector<PeakProfile> peaks = default_peaks();
  PeakProfile calibrant{"calibrant", 12360.0, 60.0, 1.0, 1.0, 0.1};
  MzRange calibrant_window{12000.0, 12800.0, "calibrant"};
  double baseline_drift = 0.02;
  // Per-sample multiplicative intensity scale, uniform on [scale_lo, scale_hi].
  // Applied to biomarker peaks only, so absolute AUCs carry no class signal.
  double scale_lo = 0.5;
  double scale_hi = 2.0;
  double outlier_fraction = 20.0 / 152.0;
  double outlier_factor = 5.0;

  // Peaks centered in the default biomarker windows with sd = width / 8.
  // Positives carry elevated B2/B3 and a depressed B4; B0/B1 are noisy and
  // class-neutral.
  static std::vector<PeakProfile> default_peaks() {
    const auto panel = BiomarkerPanel::defaults();
    const double neg[5] = {1.0, 1.0, 1.0, 1.0, 1.0};
    const double pos[5] = {1.0, 1.0, 1.5, 1.5, 0.8};
    const double sd[5] = {0.2, 0.2, 0.15, 0.15, 0.1};
    std::vector<PeakProfile> out;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& r = panel.ranges[i];
      out.push_back({r.name, r.center(), r.width() / 8.0, neg[i], pos[i], sd[i]});
    }
    return out;
  }

  std::size_t size() const { return n_positive + n_negative; }

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::llround(outlier_fraction * static_cast<double>(size())));
  }

  void validate() const {
    if (size() < 4) throw Error(Errc::InvalidConfig, "n_positive + n_negative must be >= 4");
    if (!(mz_step > 0.0) || !(mz_lo < mz_hi)) throw Error(Errc::InvalidConfig, "m/z grid");
    if (!(noise_sd >= 0.0)) throw Error(Errc::InvalidConfig, "noise_sd");
    if (!(baseline_drift >= 0.0)) throw Error(Errc::InvalidConfig, "baseline_drift");
    if (!(0.0 < scale_lo && scale_lo <= scale_hi)) throw Error(Errc::InvalidConfig, "scale");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5)) throw Error(Errc::InvalidConfig, "outlier_fraction");
    if (!(outlier_factor > 0.0)) throw Error(Errc::InvalidConfig, "outlier_factor");
    if (peaks.empty()) throw Error(Errc::InvalidConfig, "peaks");
    for (const auto& p : peaks)
      if (!(p.width > 0.0) || p.height_negative < 0.0 || p.height_positive < 0.0 || p.height_sd < 0.0)
        throw Error(Errc::InvalidConfig, "peak " + p.name);
  }
};

struct SampleTruth {
  std::string sample_id;
  Label label = Label::Negative;
  double scale = 1.0;
  double drift = 0.0;
  double calibrant_height = 0.0;
  std::vector<double> heights;  // per peak, after scale and perturbation
  bool outlier = false;
  std::string perturbed_peak;
};

struct LabeledSpectrum {
  MassSpectrum spectrum;
  Label label = Label::Negative;
};

struct Corpus {
  std::vector<LabeledSpectrum> samples;
  std::vector<SampleTruth> truth;

  std::vector<std::size_t> outlier_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i].outlier) out.push_back(i);
    return out;
  }
};

inline double gaussian_area(double height, double width) { return height * width * std::sqrt(2.0 * std::numbers::pi); }

/// Deterministic synthetic corpus. Labels are assigned by a seeded shuffle;
/// round(outlier_fraction * n) rows get one biomarker peak multiplied by
/// outlier_factor.
inline Corpus generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size();
  std::vector<Label> labels(cfg.n_negative, Label::Negative);
  labels.insert(labels.end(), cfg.n_positive, Label::Positive);
  Rng label_rng(derive_seed(cfg.seed, 0x1abe1));
  shuffle(labels, label_rng);

  Rng outlier_rng(derive_seed(cfg.seed, 0x0071));
  std::vector<bool> is_outlier(n, false);
  for (auto i : sample_without_replacement(n, cfg.outlier_count(), outlier_rng)) is_outlier[i] = true;

  const auto n_points = static_cast<std::size_t>(std::floor((cfg.mz_hi - cfg.mz_lo) / cfg.mz_step + 1e-9)) + 1;
  Corpus corpus;
  corpus.samples.reserve(n);
  corpus.truth.reserve(n);
  const std::size_t width = std::to_string(n - 1).size() < 3 ? 3 : std::to_string(n - 1).size();
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng(derive_seed(cfg.seed, s));
    SampleTruth t;
    t.sample_id = "S" + std::string(width - std::to_string(s).size(), '0') + std::to_string(s);
    t.label = labels[s];
    t.scale = uniform(rng, cfg.scale_lo, cfg.scale_hi);
    t.drift = cfg.baseline_drift * uniform(rng, 0.5, 1.5);
    t.calibrant_height = cfg.calibrant.height_negative * std::exp(cfg.calibrant.height_sd * standard_normal(rng));
    for (const auto& p : cfg.peaks) {
      const double median = t.label == Label::Positive ? p.height_positive : p.height_negative;
      t.heights.push_back(t.scale * median * std::exp(p.height_sd * standard_normal(rng)));
    }
    if (is_outlier[s]) {
      const std::size_t k = uniform_index(rng, cfg.peaks.size());
      t.heights[k] *= cfg.outlier_factor;
      t.outlier = true;
      t.perturbed_peak = cfg.peaks[k].name;
    }

    std::vector<SpectrumPoint> pts(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
      const double mz = cfg.mz_lo + static_cast<double>(i) * cfg.mz_step;
      double y = t.drift * (1.0 - (mz - cfg.mz_lo) / (cfg.mz_hi - cfg.mz_lo));
      auto add_peak = [&](double center, double w, double h) {
        const double z = (mz - center) / w;
        if (std::abs(z) < 12.0) y += h * std::exp(-0.5 * z * z);
      };
      add_peak(cfg.calibrant.center, cfg.calibrant.width, t.calibrant_height);
      for (std::size_t k = 0; k < cfg.peaks.size(); ++k) add_peak(cfg.peaks[k].center, cfg.peaks[k].width, t.heights[k]);
      if (cfg.noise_sd > 0.0) y += cfg.noise_sd * standard_normal(rng);
      pts[i] = {mz, std::max(0.0, y)};
    }
    corpus.samples.push_back({MassSpectrum(t.sample_id, std::move(pts)), t.label});
    corpus.truth.push_back(std::move(t));
  }
  return corpus;
}

/// Small tabular problem for Shapley oracles: features uniform on [0, 1),
/// label Positive iff a weighted feature sum exceeds half its maximum. With
/// `symmetric` all weights are equal, so features are exchangeable.
inline Dataset generate_shap_toy(std::size_t n_features, std::uint64_t seed, bool symmetric = false,
                                 std::size_t n_rows = 64) {
  if (n_features == 0 || n_features > 5) throw Error(Errc::InvalidArgument, "toy supports 1..5 features");
  if (n_rows < 4) throw Error(Errc::InvalidArgument, "n_rows");
  Rng rng(derive_seed(seed, 0x70E));
  Dataset d;
  for (std::size_t f = 0; f < n_features; ++f) d.feature_names.push_back("x" + std::to_string(f));
  double total_w = 0.0;
  std::vector<double> w(n_features);
  for (std::size_t f = 0; f < n_features; ++f) total_w += w[f] = symmetric ? 1.0 : static_cast<double>(n_features - f);
  for (std::size_t i = 0; i < n_rows; ++i) {
    Row r(n_features);
    double s = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) s += w[f] * (r[f] = uniform_open01(rng));
    d.rows.push_back(std::move(r));
    d.labels.push_back(s > 0.5 * total_w ? Label::Positive : Label::Negative);
    d.sample_ids.push_back("T" + std::to_string(i));
  }
  if (count_label(d.labels, Label::Positive) == 0) d.labels.back() = Label::Positive;
  if (count_label(d.labels, Label::Negative) == 0) d.labels.back() = Label::Negative;
  return d;
}

}  // namespace msxai::synth
