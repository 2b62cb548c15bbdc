#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msxai/features.hpp"
#include "msxai/pipeline.hpp"
#include "msxai/random.hpp"
#include "msxai/spectra.hpp"
#include "msxai/synth.hpp"

namespace msxai::test {

// Uniform grid [lo, hi] with the given step and intensity f(mz).
inline MassSpectrum grid_spectrum(double lo, double hi, double step, const std::function<double(double)>& f,
                                  std::string id = "t") {
  std::vector<SpectrumPoint> pts;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double mz = lo + step * static_cast<double>(i);
    pts.push_back({mz, f(mz)});
  }
  return MassSpectrum(std::move(id), std::move(pts));
}

inline double gauss(double x, double c, double w, double h) {
  const double z = (x - c) / w;
  return h * std::exp(-0.5 * z * z);
}

// Random spectrum over the instrument range with one random peak per
// biomarker window plus background noise.
inline MassSpectrum random_panel_spectrum(Rng& rng, double step = 50.0) {
  const auto panel = BiomarkerPanel::defaults();
  std::vector<double> heights, centers;
  for (const auto& r : panel.ranges) {
    heights.push_back(uniform(rng, 0.1, 3.0));
    centers.push_back(uniform(rng, r.lo + 0.3 * r.width(), r.hi - 0.3 * r.width()));
  }
  const double floor_level = uniform(rng, 0.0, 0.05);
  std::vector<SpectrumPoint> pts;
  for (double mz = kInstrumentMzLo; mz <= kInstrumentMzHi; mz += step) {
    double y = floor_level * uniform_open01(rng);
    for (std::size_t k = 0; k < 5; ++k) y += gauss(mz, centers[k], panel.ranges[k].width() / 8.0, heights[k]);
    pts.push_back({mz, y});
  }
  return MassSpectrum("r", std::move(pts));
}

// Preprocessed, featurized corpus in generator order.
inline Dataset corpus_dataset(const synth::Corpus& c, const pipeline::PipelineConfig& cfg) {
  std::vector<FeatureVector> fvs;
  for (const auto& s : c.samples) fvs.push_back(pipeline::featurize(s.spectrum, s.label, cfg));
  return to_dataset(fvs);
}

inline pipeline::PipelineConfig config_for(const synth::GeneratorConfig& g) {
  pipeline::PipelineConfig cfg;
  cfg.seed = g.seed;
  cfg.calibrant = g.calibrant_window;
  return cfg;
}

}  // namespace msxai::test
