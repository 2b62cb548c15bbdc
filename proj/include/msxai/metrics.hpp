#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msxai/calibrate.hpp"
#include "msxai/dataset.hpp"
#include "msxai/error.hpp"
#include "msxai/forest.hpp"
#include "msxai/isoforest.hpp"
#include "msxai/label.hpp"

namespace msxai::metrics {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::string split;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  ClassMetrics positive;
  ClassMetrics negative;
  ClassMetrics macro;
  std::vector<std::string> warnings;

  std::size_t total() const { return tp + fp + fn + tn; }
};

namespace detail {

inline double safe_ratio(std::size_t num, std::size_t den, const std::string& what, std::vector<std::string>& warnings) {
  if (den == 0) {
    warnings.push_back(what + " undefined (zero denominator), reported as 0");
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline ClassMetrics class_metrics(std::size_t hit, std::size_t predicted, std::size_t actual, const std::string& cls,
                                  std::vector<std::string>& warnings) {
  ClassMetrics m;
  m.precision = safe_ratio(hit, predicted, cls + " precision", warnings);
  m.recall = safe_ratio(hit, actual, cls + " recall", warnings);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

}  // namespace detail

/// Confusion counts, accuracy, per-class and macro-averaged precision,
/// recall and F1. Zero denominators yield 0 and a warning.
inline EvalReport evaluate(std::span<const Label> predicted, std::span<const Label> truth, std::string split = {}) {
  if (predicted.size() != truth.size()) throw Error(Errc::LengthMismatch, "predictions/labels");
  if (truth.empty()) throw Error(Errc::InvalidArgument, "evaluate needs at least one sample");
  EvalReport r;
  r.split = std::move(split);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == Label::Positive, t = truth[i] == Label::Positive;
    if (p && t) ++r.tp;
    else if (p && !t) ++r.fp;
    else if (!p && t) ++r.fn;
    else ++r.tn;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.total());
  r.positive = detail::class_metrics(r.tp, r.tp + r.fp, r.tp + r.fn, "positive", r.warnings);
  r.negative = detail::class_metrics(r.tn, r.tn + r.fn, r.tn + r.fp, "negative", r.warnings);
  r.macro = {(r.positive.precision + r.negative.precision) / 2.0, (r.positive.recall + r.negative.recall) / 2.0,
             (r.positive.f1 + r.negative.f1) / 2.0};
  return r;
}

inline nlohmann::ordered_json to_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  return {{"format_version", 1},
          {"split", r.split},
          {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}}},
          {"n", r.total()},
          {"accuracy", r.accuracy},
          {"positive", to_json(r.positive)},
          {"negative", to_json(r.negative)},
          {"macro", to_json(r.macro)},
          {"warnings", r.warnings}};
}

/// Fixed-width text rendering, one block per report.
inline std::string to_text(const EvalReport& r) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "split: %s  (n=%zu, accuracy=%.4f)\n", r.split.c_str(), r.total(), r.accuracy);
  out += buf;
  std::snprintf(buf, sizeof(buf), "              pred_pos  pred_neg\n  actual_pos  %8zu  %8zu\n  actual_neg  %8zu  %8zu\n",
                r.tp, r.fn, r.fp, r.tn);
  out += buf;
  std::snprintf(buf, sizeof(buf), "  %-10s %9s %9s %9s\n", "class", "precision", "recall", "f1");
  out += buf;
  for (const auto& [name, m] : {std::pair<const char*, ClassMetrics>{"positive", r.positive},
                                {"negative", r.negative}, {"macro", r.macro}}) {
    std::snprintf(buf, sizeof(buf), "  %-10s %9.4f %9.4f %9.4f\n", name, m.precision, m.recall, m.f1);
    out += buf;
  }
  for (const auto& w : r.warnings) out += "  warning: " + w + "\n";
  return out;
}

// ---- ablation ---------------------------------------------------------------

struct OutlierConfig {
  std::size_t n_trees = 100;
  std::size_t subsample_cap = 64;  // subsample = min(cap, rows)
  double contamination = 20.0 / 152.0;
  std::uint64_t seed = 11;
};

inline isoforest::OutlierSplit run_outlier_filter(const Matrix& X, const OutlierConfig& cfg) {
  return isoforest::filter_outliers(X, cfg.contamination, cfg.n_trees, std::min(cfg.subsample_cap, X.size()), cfg.seed);
}

struct AblationConfig {
  double test_fraction = 0.3;
  std::uint64_t split_seed = 3;
  forest::Hyperparameters hyperparameters;
  OutlierConfig outliers;
  calibrate::Gate gate;
};

struct AblationRow {
  std::string name;
  bool outlier_filtering = false;
  bool calibration = false;
  bool probability_gate = false;
  std::optional<EvalReport> report;  // empty when the gate rejects every test sample
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t low_confidence = 0;
};

inline std::vector<std::size_t> set_minus(std::span<const std::size_t> a, std::span<const std::size_t> removed) {
  std::vector<std::size_t> out;
  for (auto i : a)
    if (!std::binary_search(removed.begin(), removed.end(), i)) out.push_back(i);
  return out;
}

/// Three configurations on one stratified hold-out split: plain RF, RF with
/// isolation-forest filtering (filter fitted on all rows, flagged rows
/// dropped from both splits), and calibrated RF with filtering plus the
/// probability gate, scored on gate-confident test rows only.
inline std::vector<AblationRow> run_ablation(const Dataset& data, const AblationConfig& cfg) {
  data.validate();
  const auto split = forest::stratified_train_test_split(data.labels, cfg.test_fraction, cfg.split_seed);
  const auto outliers = run_outlier_filter(data.rows, cfg.outliers);

  auto fit_on = [&](std::span<const std::size_t> idx) {
    const auto d = data.subset(idx);
    return forest::fit_forest(d, cfg.hyperparameters);
  };
  auto labels_of = [&](std::span<const std::size_t> idx) {
    std::vector<Label> y;
    for (auto i : idx) y.push_back(data.labels[i]);
    return y;
  };

  std::vector<AblationRow> rows;
  {
    const auto model = fit_on(split.train);
    std::vector<Label> pred;
    for (auto i : split.test) pred.push_back(forest::predict(model, data.rows[i]));
    rows.push_back({"RF", false, false, false, evaluate(pred, labels_of(split.test), "test"), split.train.size(),
                    split.test.size(), 0});
  }
  const auto train = set_minus(split.train, outliers.removed);
  const auto test = set_minus(split.test, outliers.removed);
  const auto model = fit_on(train);
  {
    std::vector<Label> pred;
    for (auto i : test) pred.push_back(forest::predict(model, data.rows[i]));
    rows.push_back({"RF+AD", true, false, false, evaluate(pred, labels_of(test), "test"), train.size(), test.size(), 0});
  }
  {
    Matrix Xtr;
    for (auto i : train) Xtr.push_back(data.rows[i]);
    const auto cal = calibrate::calibrate(model, Xtr, labels_of(train), cfg.gate);
    std::vector<Label> pred, truth;
    std::size_t low = 0;
    for (auto i : test) {
      const auto g = calibrate::gate(cal, calibrate::calibrated_proba(cal, data.rows[i]));
      if (g == calibrate::GateDecision::LowConfidence) {
        ++low;
        continue;
      }
      pred.push_back(g == calibrate::GateDecision::ConfidentPositive ? Label::Positive : Label::Negative);
      truth.push_back(data.labels[i]);
    }
    AblationRow row{"CalRF+AD+PT", true, true, true, std::nullopt, train.size(), test.size(), low};
    if (!truth.empty()) row.report = evaluate(pred, truth, "test_gated");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "model,outlier_filtering,calibration,probability_gate,n_train,n_test,n_scored,low_confidence,accuracy,"
      "macro_precision,macro_recall,macro_f1\n";
  char buf[512];
  for (const auto& r : rows) {
    const auto& rep = r.report;
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(),
                  r.outlier_filtering, r.calibration, r.probability_gate, r.n_train, r.n_test,
                  rep ? rep->total() : std::size_t{0}, r.low_confidence, rep ? rep->accuracy : std::nan(""),
                  rep ? rep->macro.precision : std::nan(""), rep ? rep->macro.recall : std::nan(""),
                  rep ? rep->macro.f1 : std::nan(""));
    out += buf;
  }
  return out;
}

}  // namespace msxai::metrics
