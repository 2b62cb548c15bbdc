#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "msxai/calibrate.hpp"
#include "msxai/config.hpp"
#include "msxai/error.hpp"
#include "msxai/explain.hpp"
#include "msxai/features.hpp"
#include "msxai/forest.hpp"
#include "msxai/framework.hpp"
#include "msxai/metrics.hpp"
#include "msxai/pipeline.hpp"
#include "msxai/spectra.hpp"
#include "msxai/svg.hpp"
#include "msxai/synth.hpp"

// Command implementations behind the msxai executable. Each cmd_* reads its
// inputs, writes every output under an output directory and finishes with a
// run_manifest.json listing the configuration, seeds and SHA-256 digests.
namespace msxai::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kManifestFormatVersion = 1;

// ---- files ------------------------------------------------------------------

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + p.string());
  out << content;
  if (!out) throw Error(Errc::IoFailure, "short write " + p.string());
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::IoFailure, "sha256");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

inline nlohmann::json read_json(const fs::path& p, std::string_view what) {
  return config::parse(read_file(p), std::string(what) + " " + p.string());
}

/// Writes files below one directory and remembers their digests.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    digests_[name] = sha256_hex(content);
  }
  const fs::path& dir() const { return dir_; }
  ojson digests() const {
    ojson out = ojson::array();
    for (const auto& [name, d] : digests_) out.push_back({{"path", name}, {"sha256", d}});
    return out;
  }

 private:
  fs::path dir_;
  std::map<std::string, std::string> digests_;
};

/// Reproducibility record for one command invocation. No timestamps or host
/// data, so identical inputs give an identical file.
struct RunManifest {
  std::string command;
  ojson config = ojson::object();
  ojson seeds = ojson::object();
  ojson details = ojson::object();
  ojson inputs = ojson::array();

  void add_input(const fs::path& p, const std::string& content) {
    inputs.push_back({{"path", p.generic_string()}, {"sha256", sha256_hex(content)}});
  }

  ojson to_json(const OutputSet& outputs) const {
    return {{"format_version", kManifestFormatVersion},
            {"command", command},
            {"versions",
             {{"msxai", kToolVersion},
              {"model_format", pipeline::kArtifactFormatVersion},
              {"forest_format", forest::kModelFormatVersion},
              {"config_format", pipeline::kConfigFormatVersion}}},
            {"config", config},
            {"seeds", seeds},
            {"details", details},
            {"inputs", inputs},
            {"outputs", outputs.digests()}};
  }
};

inline void finish(const RunManifest& rm, OutputSet& out) { out.write("run_manifest.json", dump(rm.to_json(out))); }

inline ojson seeds_json(const pipeline::PipelineConfig& c) {
  return {{"master", c.seed},           {"split", c.split_seed()},           {"outlier_filter", c.outlier_seed()},
          {"cross_validation", c.cv_seed()}, {"forest", c.forest_seed()}, {"background", c.background_seed()},
          {"permutation", c.pfi_seed()}};
}

// ---- dataset manifests ------------------------------------------------------

inline ojson to_json(const std::vector<ManifestRecord>& records) {
  ojson arr = ojson::array();
  for (const auto& r : records) {
    ojson o{{"sample_id", r.sample_id}, {"path", r.path}};
    if (r.label) o["label"] = std::string(to_string(*r.label));
    arr.push_back(std::move(o));
  }
  return arr;
}

inline std::vector<ManifestRecord> manifest_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::ConfigParse, "manifest: expected an array");
  std::vector<ManifestRecord> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = "manifest[" + std::to_string(i) + "]";
    config::require_known_keys(j[i], ctx, {"sample_id", "path", "label"});
    ManifestRecord r;
    if (!j[i].contains("sample_id") || !j[i].contains("path"))
      throw Error(Errc::ConfigParse, ctx + ": sample_id and path are required");
    config::read(j[i], ctx, "sample_id", r.sample_id);
    config::read(j[i], ctx, "path", r.path);
    if (j[i].contains("label") && !j[i].at("label").is_null()) {
      std::string l;
      config::read(j[i], ctx, "label", l);
      try {
        r.label = parse_label(l);
      } catch (const Error&) {
        throw Error(Errc::ConfigParse, ctx + ".label: '" + l + "'");
      }
    }
    if (!seen.insert(r.sample_id).second) throw Error(Errc::ConfigParse, ctx + ": duplicate sample_id " + r.sample_id);
    out.push_back(std::move(r));
  }
  return out;
}

struct LoadedCorpus {
  std::vector<ManifestRecord> records;
  std::vector<MassSpectrum> spectra;
};

/// Reads a manifest and every spectrum it lists; relative paths resolve
/// against the manifest's directory.
inline LoadedCorpus load_corpus(const fs::path& manifest_path, RunManifest& rm) {
  return pipeline::stage("load", [&] {
    LoadedCorpus c;
    const auto text = read_file(manifest_path);
    rm.add_input(manifest_path, text);
    c.records = manifest_from_json(config::parse(text, "manifest " + manifest_path.string()));
    if (c.records.empty()) throw Error(Errc::EmptyInput, "manifest lists no samples");
    for (const auto& r : c.records) {
      fs::path p(r.path);
      if (p.is_relative()) p = manifest_path.parent_path() / p;
      c.spectra.push_back(parse_spectrum(read_file(p), r.sample_id));
    }
    return c;
  });
}

inline std::vector<FeatureVector> featurize_all(const LoadedCorpus& c, const pipeline::PipelineConfig& cfg) {
  std::vector<MassSpectrum> pre;
  pipeline::stage("preprocess", [&] {
    for (const auto& s : c.spectra) pre.push_back(pipeline::preprocess(s, cfg));
  });
  return pipeline::stage("features", [&] {
    std::vector<FeatureVector> out;
    for (std::size_t i = 0; i < pre.size(); ++i) {
      auto fv = extract_features(pre[i], cfg.panel, cfg.scheme);
      fv.label = c.records[i].label;
      out.push_back(std::move(fv));
    }
    return out;
  });
}

// ---- simulate ---------------------------------------------------------------

inline synth::GeneratorConfig generator_from_json(const nlohmann::json& j) {
  using config::read;
  config::require_known_keys(j, "generator",
                             {"format_version", "n_positive", "n_negative", "seed", "noise_sd", "mz_lo", "mz_hi",
                              "mz_step", "peaks", "calibrant", "calibrant_window", "baseline_drift", "scale_lo",
                              "scale_hi", "outlier_fraction", "outlier_factor"});
  synth::GeneratorConfig g;
  read(j, "generator", "n_positive", g.n_positive);
  read(j, "generator", "n_negative", g.n_negative);
  read(j, "generator", "seed", g.seed);
  read(j, "generator", "noise_sd", g.noise_sd);
  read(j, "generator", "mz_lo", g.mz_lo);
  read(j, "generator", "mz_hi", g.mz_hi);
  read(j, "generator", "mz_step", g.mz_step);
  read(j, "generator", "baseline_drift", g.baseline_drift);
  read(j, "generator", "scale_lo", g.scale_lo);
  read(j, "generator", "scale_hi", g.scale_hi);
  read(j, "generator", "outlier_fraction", g.outlier_fraction);
  read(j, "generator", "outlier_factor", g.outlier_factor);
  auto peak = [](const nlohmann::json& p, const std::string& ctx, synth::PeakProfile base) {
    config::require_known_keys(p, ctx, {"name", "center", "width", "height_negative", "height_positive", "height_sd"});
    read(p, ctx, "name", base.name);
    read(p, ctx, "center", base.center);
    read(p, ctx, "width", base.width);
    read(p, ctx, "height_negative", base.height_negative);
    read(p, ctx, "height_positive", base.height_positive);
    read(p, ctx, "height_sd", base.height_sd);
    return base;
  };
  if (j.contains("peaks")) {
    if (!j.at("peaks").is_array()) throw Error(Errc::ConfigParse, "generator.peaks: expected an array");
    g.peaks.clear();
    for (std::size_t i = 0; i < j.at("peaks").size(); ++i)
      g.peaks.push_back(peak(j.at("peaks")[i], "generator.peaks[" + std::to_string(i) + "]", {}));
  }
  if (j.contains("calibrant")) g.calibrant = peak(j.at("calibrant"), "generator.calibrant", g.calibrant);
  if (j.contains("calibrant_window")) g.calibrant_window = pipeline::range_from_json(j.at("calibrant_window"), "generator.calibrant_window");
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigParse, std::string("generator: ") + e.what());
  }
  return g;
}

inline ojson to_json(const synth::PeakProfile& p) {
  return {{"name", p.name},
          {"center", p.center},
          {"width", p.width},
          {"height_negative", p.height_negative},
          {"height_positive", p.height_positive},
          {"height_sd", p.height_sd}};
}

inline ojson to_json(const synth::GeneratorConfig& g) {
  ojson peaks = ojson::array();
  for (const auto& p : g.peaks) peaks.push_back(to_json(p));
  return {{"format_version", 1},
          {"n_positive", g.n_positive},
          {"n_negative", g.n_negative},
          {"seed", g.seed},
          {"noise_sd", g.noise_sd},
          {"mz_lo", g.mz_lo},
          {"mz_hi", g.mz_hi},
          {"mz_step", g.mz_step},
          {"peaks", std::move(peaks)},
          {"calibrant", to_json(g.calibrant)},
          {"calibrant_window", pipeline::range_json(g.calibrant_window)},
          {"baseline_drift", g.baseline_drift},
          {"scale_lo", g.scale_lo},
          {"scale_hi", g.scale_hi},
          {"outlier_fraction", g.outlier_fraction},
          {"outlier_factor", g.outlier_factor}};
}

struct SimulateOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

/// Synthetic corpus: spectra/<id>.csv, manifest.json, ground_truth.json and
/// a pipeline.json whose calibrant window matches the generator.
inline void cmd_simulate(const SimulateOptions& opt) {
  RunManifest rm;
  rm.command = "simulate";
  synth::GeneratorConfig g;
  if (opt.config) {
    const auto text = read_file(*opt.config);
    rm.add_input(*opt.config, text);
    g = generator_from_json(config::parse(text, "generator config"));
  }
  if (opt.seed) g.seed = *opt.seed;
  const auto corpus = pipeline::stage("simulate", [&] { return synth::generate_dataset(g); });

  OutputSet out(opt.out);
  std::vector<ManifestRecord> records;
  ojson truth = ojson::array();
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    const auto& t = corpus.truth[i];
    const std::string path = "spectra/" + s.spectrum.sample_id() + ".csv";
    out.write(path, serialize_spectrum(s.spectrum));
    records.push_back({s.spectrum.sample_id(), path, s.label});
    truth.push_back({{"sample_id", t.sample_id},
                     {"label", std::string(to_string(t.label))},
                     {"scale", t.scale},
                     {"drift", t.drift},
                     {"calibrant_height", t.calibrant_height},
                     {"heights", t.heights},
                     {"outlier", t.outlier},
                     {"perturbed_peak", t.perturbed_peak}});
  }
  out.write("manifest.json", dump(to_json(records)));
  out.write("ground_truth.json", dump({{"format_version", 1}, {"samples", std::move(truth)}}));

  pipeline::PipelineConfig pc;
  pc.seed = g.seed;
  pc.calibrant = g.calibrant_window;
  out.write("pipeline.json", dump(pipeline::to_json(pc)));

  rm.config = to_json(g);
  rm.seeds = {{"generator", g.seed}};
  std::vector<std::string> outlier_ids;
  for (auto i : corpus.outlier_indices()) outlier_ids.push_back(corpus.truth[i].sample_id);
  rm.details = {{"n_samples", corpus.samples.size()}, {"planted_outliers", outlier_ids}};
  finish(rm, out);
}

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  fs::path manifest;
  fs::path config;
  std::optional<fs::path> grid;
  std::optional<std::string> scheme;
  std::optional<std::size_t> bin_width;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

inline pipeline::PipelineConfig load_pipeline_config(const fs::path& p, RunManifest& rm) {
  const auto text = read_file(p);
  rm.add_input(p, text);
  return pipeline::config_from_json(config::parse(text, "pipeline config"));
}

inline std::vector<std::string> ids_of(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(d.sample_ids[i]);
  return out;
}

inline std::string grid_to_csv(const forest::GridResult& g) {
  std::string out = "index,n_estimators,max_depth,min_samples_split,min_samples_leaf,bootstrap,features_per_split,mean_accuracy,fold_accuracy,chosen\n";
  char buf[256];
  for (std::size_t i = 0; i < g.table.size(); ++i) {
    const auto& r = g.table[i];
    const auto& h = r.hyperparameters;
    std::string folds;
    for (std::size_t k = 0; k < r.fold_accuracy.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s%.6f", k ? ";" : "", r.fold_accuracy[k]);
      folds += buf;
    }
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%zu,%zu,%d,%s,%.6f,%s,%d\n", i, h.n_estimators, h.max_depth,
                  h.min_samples_split, h.min_samples_leaf, h.bootstrap ? 1 : 0,
                  forest::to_string(h.features_per_split).c_str(), r.mean_accuracy, folds.c_str(),
                  i == g.best_index ? 1 : 0);
    out += buf;
  }
  return out;
}

/// preprocess -> features -> split -> outlier filter -> grid search -> fit
/// -> Platt calibration -> model.json.
inline void cmd_train(const TrainOptions& opt) {
  RunManifest rm;
  rm.command = "train";
  auto cfg = load_pipeline_config(opt.config, rm);
  if (opt.scheme) cfg.scheme = parse_scheme(*opt.scheme, opt.bin_width.value_or(cfg.scheme.bin_width));
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.grid) {
    const auto text = read_file(*opt.grid);
    rm.add_input(*opt.grid, text);
    const auto j = config::parse(text, "grid");
    config::require_known_keys(j, "grid",
                               {"n_estimators", "max_depth", "min_samples_leaf", "min_samples_split", "bootstrap",
                                "features_per_split"});
    cfg.grid = forest::grid_from_json(j);
  }
  const auto corpus = load_corpus(opt.manifest, rm);
  const auto fvs = featurize_all(corpus, cfg);
  auto data = pipeline::stage("features", [&] { return to_dataset(fvs); });
  const auto result = pipeline::train(std::move(data), cfg);

  auto model_json = pipeline::to_json(result.model, cfg);
  model_json["partition"] = {{"train", ids_of(result.data, result.train)},
                             {"test", ids_of(result.data, result.test)},
                             {"removed", ids_of(result.data, result.outliers.removed)}};
  OutputSet out(opt.out);
  out.write("model.json", dump(model_json));
  out.write("features.csv", features_to_csv(fvs));
  out.write("grid_search.csv", grid_to_csv(result.grid));

  rm.config = pipeline::to_json(cfg);
  rm.seeds = seeds_json(cfg);
  std::vector<double> removed_scores;
  for (auto i : result.outliers.removed) removed_scores.push_back(result.outliers.scores[i]);
  rm.details = {{"n_samples", result.data.size()},
                {"split", {{"train", ids_of(result.data, result.split.train)}, {"test", ids_of(result.data, result.split.test)}}},
                {"outliers",
                 {{"indices", result.outliers.removed},
                  {"sample_ids", ids_of(result.data, result.outliers.removed)},
                  {"scores", removed_scores}}},
                {"grid_search",
                 {{"folds", cfg.cv_folds},
                  {"candidates", result.grid.table.size()},
                  {"best_index", result.grid.best_index},
                  {"best_mean_accuracy", result.grid.table[result.grid.best_index].mean_accuracy}}},
                {"hyperparameters", forest::to_json(result.grid.best)},
                {"platt", {{"a", result.model.platt_a}, {"b", result.model.platt_b}}}};
  finish(rm, out);
}

// ---- shared model loading -------------------------------------------------

struct ModelBundle {
  pipeline::LoadedModel loaded;
  std::set<std::string> train_ids, test_ids, removed_ids;
  bool has_partition = false;
};

inline ModelBundle load_model(const fs::path& p, RunManifest& rm) {
  return pipeline::stage("load_model", [&] {
    const auto text = read_file(p);
    rm.add_input(p, text);
    const auto j = config::parse(text, "model");
    ModelBundle b;
    b.loaded = pipeline::model_from_json(j);
    if (j.contains("partition")) {
      const auto& part = j.at("partition");
      for (const auto& id : part.at("train")) b.train_ids.insert(id.get<std::string>());
      for (const auto& id : part.at("test")) b.test_ids.insert(id.get<std::string>());
      for (const auto& id : part.at("removed")) b.removed_ids.insert(id.get<std::string>());
      b.has_partition = true;
    }
    return b;
  });
}

inline void require_scheme(const ModelBundle& b, const std::optional<std::string>& scheme,
                           const std::vector<FeatureVector>& fvs) {
  const auto& model_scheme = b.loaded.config.scheme;
  if (scheme && *scheme != to_string(model_scheme))
    throw StageError("load_model", Error(Errc::SchemeMismatch, "model uses '" + to_string(model_scheme) +
                                                                   "', requested '" + *scheme + "'"));
  if (!fvs.empty() && fvs.front().names != b.loaded.model.forest.feature_names)
    throw StageError("features", Error(Errc::SchemeMismatch, "feature names differ from the model's"));
}

struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::string test_name = "test";
};

/// Maps the model's recorded partition onto a freshly loaded corpus. Samples
/// unknown to the partition (or all samples, without one) form an external
/// evaluation set.
inline Partition partition_for(const ModelBundle& b, const Dataset& d) {
  Partition p;
  std::vector<std::size_t> external;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& id = d.sample_ids[i];
    if (b.train_ids.count(id)) p.train.push_back(i);
    else if (b.test_ids.count(id)) p.test.push_back(i);
    else if (!b.removed_ids.count(id)) external.push_back(i);
  }
  if (p.test.empty()) {
    p.test = std::move(external);
    p.test_name = "external";
  }
  return p;
}

inline Dataset labeled_dataset(const std::vector<FeatureVector>& fvs) {
  return pipeline::stage("features", [&] { return to_dataset(fvs); });
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateOptions {
  fs::path model;
  fs::path manifest;
  std::optional<std::string> scheme;
  bool ablation = false;
  fs::path out;
};

inline std::string curve_to_csv(const std::vector<std::pair<std::string, calibrate::CalibrationCurve>>& curves) {
  std::string out = "model,bin,bin_lo,bin_hi,count,mean_predicted,fraction_positive\n";
  char buf[256];
  for (const auto& [name, c] : curves) {
    for (const auto& pt : c.points) {
      const double w = 1.0 / static_cast<double>(c.n_bins);
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.4f,%.4f,%zu,%.6f,%.6f\n", name.c_str(), pt.bin, w * static_cast<double>(pt.bin),
                    w * static_cast<double>(pt.bin + 1), pt.count, pt.mean_predicted, pt.fraction_positive);
      out += buf;
    }
    for (auto b : c.empty_bins) {
      const double w = 1.0 / static_cast<double>(c.n_bins);
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.4f,%.4f,0,,\n", name.c_str(), b, w * static_cast<double>(b),
                    w * static_cast<double>(b + 1));
      out += buf;
    }
  }
  return out;
}

/// Train/test reports for the calibrated model, the gated test report, and
/// the reliability curves of raw and calibrated probabilities.
inline void cmd_evaluate(const EvaluateOptions& opt) {
  RunManifest rm;
  rm.command = "evaluate";
  const auto bundle = load_model(opt.model, rm);
  if (opt.scheme && *opt.scheme != to_string(bundle.loaded.config.scheme)) require_scheme(bundle, opt.scheme, {});
  const auto& cfg = bundle.loaded.config;
  const auto& model = bundle.loaded.model;
  const auto corpus = load_corpus(opt.manifest, rm);
  const auto fvs = featurize_all(corpus, cfg);
  require_scheme(bundle, opt.scheme, fvs);
  const auto data = labeled_dataset(fvs);
  const auto part = partition_for(bundle, data);

  ojson reports = ojson::array();
  std::string text;
  std::vector<std::pair<std::string, calibrate::CalibrationCurve>> curves;
  std::size_t low_confidence = 0;
  pipeline::stage("evaluate", [&] {
    auto report = [&](const std::vector<std::size_t>& idx, const std::string& name) {
      if (idx.empty()) return;
      std::vector<Label> pred, truth;
      for (auto i : idx) {
        pred.push_back(calibrate::predict(model, data.rows[i]));
        truth.push_back(data.labels[i]);
      }
      const auto r = metrics::evaluate(pred, truth, name);
      reports.push_back(metrics::to_json(r));
      text += metrics::to_text(r) + "\n";
    };
    report(part.train, "train");
    report(part.test, part.test_name);

    std::vector<Label> pred, truth, all_truth;
    std::vector<double> raw, cal;
    for (auto i : part.test) {
      const double s = forest::predict_proba(model.forest, data.rows[i]);
      const double p = model.proba_from_score(s);
      raw.push_back(s);
      cal.push_back(p);
      all_truth.push_back(data.labels[i]);
      const auto g = calibrate::gate(model, p);
      if (g == calibrate::GateDecision::LowConfidence) {
        ++low_confidence;
        continue;
      }
      pred.push_back(g == calibrate::GateDecision::ConfidentPositive ? Label::Positive : Label::Negative);
      truth.push_back(data.labels[i]);
    }
    if (!truth.empty()) {
      const auto r = metrics::evaluate(pred, truth, part.test_name + "_gated");
      auto j = metrics::to_json(r);
      j["low_confidence"] = low_confidence;
      reports.push_back(std::move(j));
      text += metrics::to_text(r) + "  low-confidence samples excluded: " + std::to_string(low_confidence) + "\n\n";
    }
    if (!all_truth.empty()) {
      curves.emplace_back("uncalibrated", calibrate::calibration_curve(raw, all_truth));
      curves.emplace_back("calibrated", calibrate::calibration_curve(cal, all_truth));
    }
  });

  OutputSet out(opt.out);
  ojson ece = ojson::object();
  for (const auto& [name, c] : curves) ece[name] = calibrate::expected_calibration_error(c);
  out.write("reports.json", dump({{"format_version", 1}, {"reports", reports}, {"expected_calibration_error", ece}}));
  out.write("reports.txt", text);
  if (!curves.empty()) {
    out.write("calibration_curve.csv", curve_to_csv(curves));
    out.write("calibration_curve.svg", svg::calibration_plot(curves));
  }
  if (opt.ablation) {
    const auto rows = pipeline::stage("ablation", [&] {
      return metrics::run_ablation(data, pipeline::ablation_config(cfg, model.forest.hyperparameters));
    });
    out.write("ablation.csv", metrics::ablation_to_csv(rows));
  }
  rm.config = pipeline::to_json(cfg);
  rm.seeds = seeds_json(cfg);
  rm.details = {{"n_train", part.train.size()}, {"n_test", part.test.size()}, {"test_set", part.test_name},
                {"low_confidence", low_confidence}, {"ablation", opt.ablation}};
  finish(rm, out);
}

// ---- explain ----------------------------------------------------------------

struct ExplainOptions {
  fs::path model;
  fs::path manifest;
  fs::path out;
};

inline std::string importance_to_csv(const explain::GlobalImportance& g) {
  std::string out = "rank,feature,score\n";
  char buf[128];
  for (std::size_t r = 0; r < g.ranking.size(); ++r) {
    const auto f = static_cast<std::size_t>(
        std::find(g.feature_names.begin(), g.feature_names.end(), g.ranking[r]) - g.feature_names.begin());
    std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g\n", r + 1, g.ranking[r].c_str(), g.scores[f]);
    out += buf;
  }
  return out;
}

inline std::string shap_matrix_to_csv(const explain::ShapMatrix& m) {
  std::string out = "sample_id,feature,phi,value,quantile\n";
  char buf[256];
  std::vector<std::vector<double>> sorted;
  for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
    sorted.push_back(m.column_values(f));
    std::sort(sorted.back().begin(), sorted.back().end());
  }
  for (const auto& r : m.rows)
    for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.6f\n", r.sample_id.c_str(), m.feature_names[f].c_str(), r.phi[f],
                    r.feature_values[f], explain::value_quantile(sorted[f], r.feature_values[f]));
      out += buf;
    }
  return out;
}

/// IFI, PFI and SHAP global importances plus the SHAP matrix and the
/// summary artifact consumed by diagnose.
inline void cmd_explain(const ExplainOptions& opt) {
  RunManifest rm;
  rm.command = "explain";
  const auto bundle = load_model(opt.model, rm);
  const auto& cfg = bundle.loaded.config;
  const auto& model = bundle.loaded.model;
  const auto corpus = load_corpus(opt.manifest, rm);
  const auto fvs = featurize_all(corpus, cfg);
  require_scheme(bundle, std::nullopt, fvs);
  const auto data = labeled_dataset(fvs);
  auto part = partition_for(bundle, data);
  // Without a recorded partition every sample serves as both populations.
  if (part.train.empty()) part.train = part.test;
  if (part.test.empty()) part.test = part.train;
  if (part.train.empty()) throw StageError("explain", Error(Errc::EmptyInput, "no samples to explain"));
  const auto train = data.subset(part.train);
  const auto test = data.subset(part.test);
  const auto ex = pipeline::explain_model(model, train, test, cfg);

  OutputSet out(opt.out);
  for (const auto* g : {&ex.ifi, &ex.pfi, &ex.shap}) {
    std::string name(explain::to_string(g->method));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    out.write("importance_" + name + ".csv", importance_to_csv(*g));
    out.write("importance_" + name + ".svg", svg::importance_plot(*g));
  }
  out.write("shap_matrix.csv", shap_matrix_to_csv(ex.matrix));
  out.write("shap_summary.svg", svg::shap_summary_plot(ex.matrix, ex.shap.ranking));
  const pipeline::Summary summary{ex.shap, ex.matrix, ex.background};
  out.write("summary.json", dump(pipeline::to_json(summary)));

  rm.config = pipeline::to_json(cfg);
  rm.seeds = seeds_json(cfg);
  rm.details = {{"permutation_set", part.test_name},
                {"n_permutation", test.size()},
                {"n_reference", train.size()},
                {"n_background", ex.background.size()},
                {"rankings", {{"IFI", ex.ifi.ranking}, {"PFI", ex.pfi.ranking}, {"SHAP", ex.shap.ranking}}}};
  finish(rm, out);
}

// ---- diagnose ---------------------------------------------------------------

inline ojson to_json(const framework::CheckOutcome& c) {
  ojson j{{"check", std::string(framework::to_string(c.id))}, {"passed", c.passed}};
  if (const auto* e = std::get_if<framework::Check1Evidence>(&c.evidence)) {
    j["local_top"] = e->local_top;
    j["global_top"] = e->global_top;
    j["missing"] = e->missing;
    if (!e->note.empty()) j["note"] = e->note;
  } else if (const auto* e2 = std::get_if<framework::Check2Evidence>(&c.evidence)) {
    ojson fs = ojson::array();
    for (const auto& f : e2->features)
      fs.push_back({{"feature", f.feature},
                    {"phi", f.phi},
                    {"phi_range", {f.phi_lo, f.phi_hi}},
                    {"value_quantile", f.value_quantile},
                    {"quantile_range", {f.quantile_lo, f.quantile_hi}},
                    {"negligible", f.negligible},
                    {"passed", f.passed}});
    j["features"] = std::move(fs);
    j["n_passed"] = e2->n_passed;
    j["required"] = e2->required;
  } else if (const auto* e3 = std::get_if<framework::Check3Evidence>(&c.evidence)) {
    j["salient"] = e3->salient;
    j["supporting"] = e3->supporting;
    j["opposing"] = e3->opposing;
    j["support_fraction"] = e3->support_fraction;
    j["agreement"] = e3->agreement;
    j["dominant_feature"] = e3->dominant_feature;
    j["dominant_share"] = e3->dominant_share;
    j["dominant_share_limit"] = e3->dominant_share_limit;
    j["dominant_opposes"] = e3->dominant_opposes;
    j["all_zero"] = e3->all_zero;
  }
  return j;
}

inline ojson to_json(const framework::DiagnosisReport& r, const std::optional<Label>& truth) {
  ojson features = ojson::array();
  const auto& e = r.explanation;
  for (std::size_t i = 0; i < e.phi.size(); ++i)
    features.push_back({{"feature", e.feature_names[i]}, {"value", e.feature_values[i]}, {"phi", e.phi[i]}});
  ojson checks = ojson::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  ojson j{{"format_version", 1},
          {"sample_id", r.sample_id},
          {"stage1", {{"prediction", std::string(to_string(r.stage1_prediction))}}},
          {"stage2", {{"probability", r.stage2_probability}, {"gate", std::string(calibrate::to_string(r.stage2_gate))}}},
          {"stage3", {{"base_value", e.base_value}, {"model_output", e.model_output}, {"attributions", std::move(features)}}},
          {"stage4", {{"checks", std::move(checks)}}},
          {"final_decision", std::string(framework::to_string(r.final_decision))}};
  if (truth) j["label"] = std::string(to_string(*truth));
  return j;
}

struct DiagnoseOptions {
  fs::path model;
  fs::path summary;
  std::vector<fs::path> spectra;
  std::optional<fs::path> manifest;
  fs::path out;
};

/// Four-stage report per spectrum: prediction, gate, SHAP explanation and
/// the three interpretation checks.
inline void cmd_diagnose(const DiagnoseOptions& opt) {
  RunManifest rm;
  rm.command = "diagnose";
  const auto bundle = load_model(opt.model, rm);
  const auto& cfg = bundle.loaded.config;
  const auto& model = bundle.loaded.model;
  if (!fs::exists(opt.summary)) throw StageError("load_summary", Error(Errc::MissingArtifact, "summary"));
  const auto summary = pipeline::stage("load_summary", [&] {
    const auto text = read_file(opt.summary);
    rm.add_input(opt.summary, text);
    return pipeline::summary_from_json(config::parse(text, "summary"));
  });
  if (summary.reference.feature_names != model.forest.feature_names)
    throw StageError("load_summary", Error(Errc::NameMismatch, "summary and model features differ"));

  LoadedCorpus corpus;
  if (opt.manifest) corpus = load_corpus(*opt.manifest, rm);
  pipeline::stage("load", [&] {
    for (const auto& p : opt.spectra) {
      const auto text = read_file(p);
      rm.add_input(p, text);
      const auto id = p.stem().string();
      corpus.records.push_back({id, p.generic_string(), std::nullopt});
      corpus.spectra.push_back(parse_spectrum(text, id));
    }
    if (corpus.spectra.empty()) throw Error(Errc::EmptyInput, "no spectra to diagnose");
  });
  const auto fvs = featurize_all(corpus, cfg);
  require_scheme(bundle, std::nullopt, fvs);

  const auto ref = framework::Reference::from(summary.reference);
  OutputSet out(opt.out);
  std::string lines;
  ojson decisions = ojson::object();
  for (std::size_t i = 0; i < fvs.size(); ++i) {
    const auto report = pipeline::stage("diagnose", [&] {
      return framework::diagnose(fvs[i].values, fvs[i].sample_id, model, summary.global, ref, summary.background,
                                 cfg.checks);
    });
    lines += to_json(report, corpus.records[i].label).dump() + "\n";
    decisions[fvs[i].sample_id] = std::string(framework::to_string(report.final_decision));
    std::vector<double> q;
    for (std::size_t f = 0; f < fvs[i].values.size(); ++f) q.push_back(explain::value_quantile(ref.sorted_values[f], fvs[i].values[f]));
    char title[160];
    std::snprintf(title, sizeof(title), "%s: p=%.3f %s, %s", report.sample_id.c_str(), report.stage2_probability,
                  std::string(calibrate::to_string(report.stage2_gate)).c_str(),
                  std::string(framework::to_string(report.final_decision)).c_str());
    out.write("local/" + report.sample_id + ".svg", svg::local_plot(report.explanation, q, title));
  }
  out.write("diagnoses.jsonl", lines);
  rm.config = pipeline::to_json(cfg);
  rm.seeds = seeds_json(cfg);
  rm.details = {{"n_samples", fvs.size()}, {"final_decisions", decisions}};
  finish(rm, out);
}

// ---- ablate -----------------------------------------------------------------

struct AblateOptions {
  fs::path manifest;
  fs::path config;
  std::optional<fs::path> model;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

/// The three-row ablation. Hyperparameters come from a trained model when
/// given, else the forest defaults.
inline void cmd_ablate(const AblateOptions& opt) {
  RunManifest rm;
  rm.command = "ablate";
  auto cfg = load_pipeline_config(opt.config, rm);
  if (opt.scheme) cfg.scheme = parse_scheme(*opt.scheme, cfg.scheme.bin_width);
  if (opt.seed) cfg.seed = *opt.seed;
  forest::Hyperparameters hp;
  hp.seed = cfg.forest_seed();
  if (opt.model) hp = load_model(*opt.model, rm).loaded.model.forest.hyperparameters;
  const auto corpus = load_corpus(opt.manifest, rm);
  const auto data = labeled_dataset(featurize_all(corpus, cfg));
  const auto rows = pipeline::stage("ablation", [&] { return metrics::run_ablation(data, pipeline::ablation_config(cfg, hp)); });

  OutputSet out(opt.out);
  out.write("ablation.csv", metrics::ablation_to_csv(rows));
  ojson arr = ojson::array();
  for (const auto& r : rows) {
    ojson j{{"model", r.name},
            {"outlier_filtering", r.outlier_filtering},
            {"calibration", r.calibration},
            {"probability_gate", r.probability_gate},
            {"n_train", r.n_train},
            {"n_test", r.n_test},
            {"low_confidence", r.low_confidence}};
    j["report"] = r.report ? metrics::to_json(*r.report) : ojson(nullptr);
    arr.push_back(std::move(j));
  }
  out.write("ablation.json", dump({{"format_version", 1}, {"rows", std::move(arr)}}));
  rm.config = pipeline::to_json(cfg);
  rm.seeds = seeds_json(cfg);
  rm.details = {{"hyperparameters", forest::to_json(hp)}};
  finish(rm, out);
}

}  // namespace msxai::cli
