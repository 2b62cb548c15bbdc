#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msxai/calibrate.hpp"
#include "msxai/config.hpp"
#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/explain.hpp"
#include "msxai/features.hpp"
#include "msxai/forest.hpp"
#include "msxai/framework.hpp"
#include "msxai/isoforest.hpp"
#include "msxai/metrics.hpp"
#include "msxai/random.hpp"
#include "msxai/spectra.hpp"

namespace msxai::pipeline {

inline constexpr int kConfigFormatVersion = 1;

/// Every knob of a training/explanation run. All seeds derive from `seed`.
struct PipelineConfig {
  std::uint64_t seed = 2020;
  FeatureScheme scheme;
  BiomarkerPanel panel = BiomarkerPanel::defaults();
  MzRange calibrant{12000.0, 12800.0, "calibrant"};
  std::size_t baseline_half_window = kDefaultBaselineHalfWindow;
  double test_fraction = 0.3;
  std::size_t outlier_trees = 100;
  std::size_t outlier_subsample = 64;
  double contamination = 20.0 / 152.0;
  forest::GridSpec grid;
  std::size_t cv_folds = 5;
  calibrate::Gate gate;
  std::size_t background_cap = 100;
  std::size_t pfi_repeats = 1000;
  framework::CheckConfig checks;

  std::uint64_t split_seed() const { return derive_seed(seed, 1); }
  std::uint64_t outlier_seed() const { return derive_seed(seed, 2); }
  std::uint64_t cv_seed() const { return derive_seed(seed, 3); }
  std::uint64_t forest_seed() const { return derive_seed(seed, 4); }
  std::uint64_t background_seed() const { return derive_seed(seed, 5); }
  std::uint64_t pfi_seed() const { return derive_seed(seed, 6); }

  metrics::OutlierConfig outlier_config() const {
    return {outlier_trees, outlier_subsample, contamination, outlier_seed()};
  }

  void validate() const {
    panel.validate();
    calibrant.require_instrument_range();
    gate.validate();
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error(Errc::InvalidConfig, "test_fraction");
    if (!(contamination >= 0.0 && contamination < 0.5)) throw Error(Errc::InvalidConfig, "contamination");
    if (outlier_trees == 0 || outlier_subsample < 2) throw Error(Errc::InvalidConfig, "outlier forest");
    if (cv_folds < 2) throw Error(Errc::InvalidConfig, "cv_folds");
    if (baseline_half_window == 0) throw Error(Errc::InvalidConfig, "baseline_half_window");
    if (background_cap == 0) throw Error(Errc::InvalidConfig, "background_cap");
    if (pfi_repeats == 0) throw Error(Errc::InvalidConfig, "pfi_repeats");
  }
};

inline nlohmann::ordered_json range_json(const MzRange& r) { return {{"name", r.name}, {"lo", r.lo}, {"hi", r.hi}}; }

inline MzRange range_from_json(const nlohmann::json& j, const std::string& ctx) {
  config::require_known_keys(j, ctx, {"name", "lo", "hi"});
  std::string name;
  double lo = 0.0, hi = 0.0;
  config::read(j, ctx, "name", name);
  if (!j.contains("lo") || !j.contains("hi")) throw Error(Errc::ConfigParse, ctx + ": lo and hi are required");
  config::read(j, ctx, "lo", lo);
  config::read(j, ctx, "hi", hi);
  try {
    return MzRange(lo, hi, name);
  } catch (const Error& e) {
    throw Error(Errc::ConfigParse, ctx + ": " + e.what());
  }
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json panel = nlohmann::ordered_json::array();
  for (const auto& r : c.panel.ranges) panel.push_back(range_json(r));
  nlohmann::ordered_json grid{{"n_estimators", c.grid.n_estimators},
                              {"max_depth", c.grid.max_depth},
                              {"min_samples_leaf", c.grid.min_samples_leaf},
                              {"min_samples_split", c.grid.min_samples_split},
                              {"bootstrap", c.grid.bootstrap},
                              {"features_per_split", nlohmann::ordered_json::array()}};
  for (auto f : c.grid.features_per_split) grid["features_per_split"].push_back(forest::to_string(f));
  return {{"format_version", kConfigFormatVersion},
          {"seed", c.seed},
          {"scheme", to_string(c.scheme)},
          {"bin_width", c.scheme.bin_width},
          {"panel", std::move(panel)},
          {"calibrant", range_json(c.calibrant)},
          {"baseline_half_window", c.baseline_half_window},
          {"test_fraction", c.test_fraction},
          {"outliers", {{"n_trees", c.outlier_trees}, {"subsample", c.outlier_subsample}, {"contamination", c.contamination}}},
          {"grid", std::move(grid)},
          {"cv_folds", c.cv_folds},
          {"gate", {{"positive", c.gate.positive_above}, {"negative", c.gate.negative_at_or_below}}},
          {"background_cap", c.background_cap},
          {"pfi_repeats", c.pfi_repeats},
          {"checks",
           {{"k_local", c.checks.k_local},
            {"k_global", c.checks.k_global},
            {"central_mass", c.checks.central_mass},
            {"min_pass", c.checks.min_pass},
            {"negligible_fraction", c.checks.negligible_fraction},
            {"salience", c.checks.salience},
            {"agreement", c.checks.agreement},
            {"dominant_share", c.checks.dominant_share}}}};
}

/// Parses a pipeline config; absent keys keep their defaults except the
/// calibrant window, which has no sensible default for real data.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using config::read;
  config::require_known_keys(j, "config",
                             {"format_version", "seed", "scheme", "bin_width", "panel", "calibrant",
                              "baseline_half_window", "test_fraction", "outliers", "grid", "cv_folds", "gate",
                              "background_cap", "pfi_repeats", "checks"});
  int version = kConfigFormatVersion;
  read(j, "config", "format_version", version);
  if (version != kConfigFormatVersion) throw Error(Errc::UnsupportedVersion, "config " + std::to_string(version));
  PipelineConfig c;
  read(j, "config", "seed", c.seed);
  std::string scheme = to_string(c.scheme);
  std::size_t bin_width = 0;
  read(j, "config", "scheme", scheme);
  read(j, "config", "bin_width", bin_width);
  try {
    c.scheme = parse_scheme(scheme, bin_width);
  } catch (const Error& e) {
    throw Error(Errc::ConfigParse, std::string("config.scheme: ") + e.what());
  }
  if (j.contains("panel")) {
    const auto& p = j.at("panel");
    if (!p.is_array() || p.size() != 5) throw Error(Errc::ConfigParse, "config.panel: expected 5 ranges");
    for (std::size_t i = 0; i < 5; ++i) c.panel.ranges[i] = range_from_json(p[i], "config.panel[" + std::to_string(i) + "]");
  }
  if (!j.contains("calibrant")) throw Error(Errc::ConfigParse, "config.calibrant: required");
  c.calibrant = range_from_json(j.at("calibrant"), "config.calibrant");
  read(j, "config", "baseline_half_window", c.baseline_half_window);
  read(j, "config", "test_fraction", c.test_fraction);
  if (j.contains("outliers")) {
    const auto& o = j.at("outliers");
    config::require_known_keys(o, "config.outliers", {"n_trees", "subsample", "contamination"});
    read(o, "config.outliers", "n_trees", c.outlier_trees);
    read(o, "config.outliers", "subsample", c.outlier_subsample);
    read(o, "config.outliers", "contamination", c.contamination);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    config::require_known_keys(g, "config.grid",
                               {"n_estimators", "max_depth", "min_samples_leaf", "min_samples_split", "bootstrap",
                                "features_per_split"});
    c.grid = forest::grid_from_json(g);
  }
  read(j, "config", "cv_folds", c.cv_folds);
  if (j.contains("gate")) {
    const auto& g = j.at("gate");
    config::require_known_keys(g, "config.gate", {"positive", "negative"});
    read(g, "config.gate", "positive", c.gate.positive_above);
    read(g, "config.gate", "negative", c.gate.negative_at_or_below);
  }
  read(j, "config", "background_cap", c.background_cap);
  read(j, "config", "pfi_repeats", c.pfi_repeats);
  if (j.contains("checks")) {
    const auto& k = j.at("checks");
    config::require_known_keys(k, "config.checks",
                               {"k_local", "k_global", "central_mass", "min_pass", "negligible_fraction", "salience",
                                "agreement", "dominant_share"});
    read(k, "config.checks", "k_local", c.checks.k_local);
    read(k, "config.checks", "k_global", c.checks.k_global);
    read(k, "config.checks", "central_mass", c.checks.central_mass);
    read(k, "config.checks", "min_pass", c.checks.min_pass);
    read(k, "config.checks", "negligible_fraction", c.checks.negligible_fraction);
    read(k, "config.checks", "salience", c.checks.salience);
    read(k, "config.checks", "agreement", c.checks.agreement);
    read(k, "config.checks", "dominant_share", c.checks.dominant_share);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigParse, std::string("config: ") + e.what());
  }
  return c;
}

// ---- stages -----------------------------------------------------------------

/// Runs `f`, re-throwing module errors tagged with the stage name.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

inline MassSpectrum preprocess(const MassSpectrum& s, const PipelineConfig& cfg) {
  return normalize_to_calibrant(correct_baseline(s, cfg.baseline_half_window), cfg.calibrant);
}

inline FeatureVector featurize(const MassSpectrum& s, std::optional<Label> label, const PipelineConfig& cfg) {
  auto fv = extract_features(preprocess(s, cfg), cfg.panel, cfg.scheme);
  fv.label = label;
  return fv;
}

struct TrainResult {
  Dataset data;                      // every labeled sample, in manifest order
  forest::TrainTestSplit split;      // indices into data
  isoforest::OutlierSplit outliers;  // fitted on all of data
  std::vector<std::size_t> train;    // split.train minus removed
  std::vector<std::size_t> test;     // split.test minus removed
  forest::GridResult grid;
  calibrate::CalibratedModel model;
};

/// Split, outlier filter, grid search, final fit and Platt calibration. The
/// isolation forest sees every row; flagged rows leave both splits.
inline TrainResult train(Dataset data, const PipelineConfig& cfg) {
  TrainResult r;
  stage("fit", [&] {
    data.validate();
    for (Label l : {Label::Negative, Label::Positive})
      if (count_label(data.labels, l) == 0)
        throw Error(Errc::SingleClassTraining, "no " + std::string(to_string(l)) + " samples");
  });
  r.data = std::move(data);
  r.split = stage("split", [&] { return forest::stratified_train_test_split(r.data.labels, cfg.test_fraction, cfg.split_seed()); });
  r.outliers = stage("outlier_filter", [&] { return metrics::run_outlier_filter(r.data.rows, cfg.outlier_config()); });
  r.train = metrics::set_minus(r.split.train, r.outliers.removed);
  r.test = metrics::set_minus(r.split.test, r.outliers.removed);
  const Dataset tr = r.data.subset(r.train);
  r.grid = stage("grid_search", [&] {
    return forest::grid_search_cv(tr.rows, tr.labels, cfg.grid.expand(cfg.forest_seed()), cfg.cv_folds, cfg.cv_seed());
  });
  auto model = stage("fit", [&] {
    auto m = forest::fit_forest(tr, r.grid.best);
    return m;
  });
  r.model = stage("calibrate", [&] { return calibrate::calibrate(std::move(model), tr.rows, tr.labels, cfg.gate); });
  return r;
}

inline metrics::AblationConfig ablation_config(const PipelineConfig& cfg, const forest::Hyperparameters& hp) {
  return {cfg.test_fraction, cfg.split_seed(), hp, cfg.outlier_config(), cfg.gate};
}

// ---- explanation artifacts --------------------------------------------------

struct ExplainResult {
  explain::GlobalImportance ifi;
  explain::GlobalImportance pfi;
  explain::GlobalImportance shap;
  explain::ShapMatrix matrix;
  Matrix background;
};

/// Global importances and the SHAP reference population. The background
/// and the SHAP matrix come from the training rows; PFI is scored on `test`.
inline ExplainResult explain_model(const calibrate::CalibratedModel& model, const Dataset& train, const Dataset& test,
                                   const PipelineConfig& cfg) {
  ExplainResult r;
  auto f = [&](std::span<const double> z) { return calibrate::calibrated_proba(model, z); };
  auto predict = [&](std::span<const double> z) { return calibrate::predict(model, z); };
  r.ifi = stage("explain.impurity_importance", [&] { return explain::impurity_importance(model.forest); });
  r.pfi = stage("explain.permutation_importance", [&] {
    return explain::permutation_importance(predict, test.rows, test.labels, test.feature_names, cfg.pfi_repeats,
                                           cfg.pfi_seed());
  });
  r.background = explain::select_background(train.rows, cfg.background_cap, cfg.background_seed());
  r.matrix = stage("explain.shap_values", [&] { return explain::shap_matrix(f, train, r.background); });
  r.shap = stage("explain.global_shap_importance", [&] { return explain::global_shap_importance(r.matrix); });
  return r;
}

// ---- persistence ------------------------------------------------------------

inline constexpr int kArtifactFormatVersion = 1;

inline nlohmann::ordered_json to_json(const calibrate::CalibratedModel& m, const PipelineConfig& cfg) {
  return {{"format_version", kArtifactFormatVersion},
          {"kind", "calibrated_model"},
          {"scheme", to_string(cfg.scheme)},
          {"pipeline", to_json(cfg)},
          {"platt", {{"a", m.platt_a}, {"b", m.platt_b}}},
          {"gate", {{"positive", m.gate.positive_above}, {"negative", m.gate.negative_at_or_below}}},
          {"forest", forest::to_json(m.forest)}};
}

struct LoadedModel {
  calibrate::CalibratedModel model;
  PipelineConfig config;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kArtifactFormatVersion) throw Error(Errc::UnsupportedVersion, "model " + std::to_string(version));
    if (j.at("kind").get<std::string>() != "calibrated_model") throw Error(Errc::ConfigParse, "model.kind");
    LoadedModel out;
    out.config = config_from_json(j.at("pipeline"));
    out.model.forest = forest::forest_from_json(j.at("forest"));
    out.model.platt_a = j.at("platt").at("a").get<double>();
    out.model.platt_b = j.at("platt").at("b").get<double>();
    out.model.gate.positive_above = j.at("gate").at("positive").get<double>();
    out.model.gate.negative_at_or_below = j.at("gate").at("negative").get<double>();
    out.model.gate.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigParse, std::string("model: ") + e.what());
  }
}

inline nlohmann::ordered_json to_json(const explain::GlobalImportance& g) {
  return {{"method", explain::to_string(g.method)},
          {"feature_names", g.feature_names},
          {"scores", g.scores},
          {"ranking", g.ranking}};
}

inline explain::GlobalImportance importance_from_json(const nlohmann::json& j) {
  const auto m = j.at("method").get<std::string>();
  if (m != "IFI" && m != "PFI" && m != "SHAP") throw Error(Errc::ConfigParse, "importance.method " + m);
  const auto method = m == "IFI" ? explain::Method::IFI : m == "PFI" ? explain::Method::PFI : explain::Method::SHAP;
  return explain::make_importance(method, j.at("feature_names").get<std::vector<std::string>>(),
                                  j.at("scores").get<std::vector<double>>());
}

/// Artifacts the diagnosis stage needs: the SHAP global ranking, the
/// reference attribution population, and the background set.
struct Summary {
  explain::GlobalImportance global;
  explain::ShapMatrix reference;
  Matrix background;
};

inline nlohmann::ordered_json to_json(const Summary& s) {
  nlohmann::ordered_json ref = nlohmann::ordered_json::array();
  for (const auto& e : s.reference.rows)
    ref.push_back({{"sample_id", e.sample_id}, {"phi", e.phi}, {"values", e.feature_values}});
  return {{"format_version", kArtifactFormatVersion},
          {"kind", "summary"},
          {"feature_names", s.reference.feature_names},
          {"global", to_json(s.global)},
          {"reference", std::move(ref)},
          {"background", s.background}};
}

inline Summary summary_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kArtifactFormatVersion) throw Error(Errc::UnsupportedVersion, "summary " + std::to_string(version));
    if (j.at("kind").get<std::string>() != "summary") throw Error(Errc::ConfigParse, "summary.kind");
    Summary s;
    s.reference.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.global = importance_from_json(j.at("global"));
    for (const auto& r : j.at("reference")) {
      explain::ShapExplanation e;
      e.sample_id = r.at("sample_id").get<std::string>();
      e.feature_names = s.reference.feature_names;
      e.phi = r.at("phi").get<std::vector<double>>();
      e.feature_values = r.at("values").get<std::vector<double>>();
      if (e.phi.size() != e.feature_names.size() || e.feature_values.size() != e.feature_names.size())
        throw Error(Errc::ArityMismatch, "summary reference row " + e.sample_id);
      s.reference.rows.push_back(std::move(e));
    }
    s.background = j.at("background").get<Matrix>();
    if (s.reference.rows.empty()) throw Error(Errc::EmptySummary, "summary reference");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigParse, std::string("summary: ") + e.what());
  }
}

}  // namespace msxai::pipeline
