#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "msxai/calibrate.hpp"
#include "msxai/error.hpp"
#include "msxai/explain.hpp"
#include "msxai/label.hpp"

namespace msxai::framework {

using calibrate::GateDecision;
using explain::GlobalImportance;
using explain::ShapExplanation;
using explain::ShapMatrix;

/// Thresholds for the three interpretation checks. None of these are fixed
/// by the method itself; the defaults reproduce the six reference panels.
struct CheckConfig {
  std::size_t k_local = 2;
  std::size_t k_global = 5;
  double central_mass = 0.8;
  std::size_t min_pass = 8;
  double negligible_fraction = 0.05;
  double salience = 0.10;
  double agreement = 0.75;
  double dominant_share = 0.40;
};

enum class CheckId { Check1, Check2, Check3 };

inline std::string_view to_string(CheckId c) {
  switch (c) {
    case CheckId::Check1: return "check1";
    case CheckId::Check2: return "check2";
    case CheckId::Check3: return "check3";
  }
  return "check1";
}

struct Check1Evidence {
  std::vector<std::string> local_top;   // largest |phi| first, zero attributions excluded
  std::vector<std::string> global_top;  // first k_global of the global SHAP ranking
  std::vector<std::string> missing;     // local_top entries absent from global_top
  std::string note;
};

struct FeatureCheck2 {
  std::string feature;
  double phi = 0.0;
  double phi_lo = 0.0;
  double phi_hi = 0.0;
  double value_quantile = 0.0;
  double quantile_lo = 0.0;
  double quantile_hi = 0.0;
  bool negligible = false;
  bool passed = false;
};

struct Check2Evidence {
  std::vector<FeatureCheck2> features;
  std::size_t n_passed = 0;
  std::size_t required = 0;
};

struct Check3Evidence {
  std::vector<std::string> salient;
  std::size_t supporting = 0;
  std::size_t opposing = 0;
  double support_fraction = 0.0;
  double agreement = 0.0;
  std::string dominant_feature;
  double dominant_share = 0.0;
  double dominant_share_limit = 0.0;
  bool dominant_opposes = false;
  bool all_zero = false;
};

struct CheckOutcome {
  CheckId id = CheckId::Check1;
  bool passed = false;
  std::variant<Check1Evidence, Check2Evidence, Check3Evidence> evidence;
};

inline void require_same_names(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a != b) throw Error(Errc::NameMismatch, "feature names differ");
}

// Indices of the k largest |phi| with non-zero magnitude; ties by index.
inline std::vector<std::size_t> top_by_magnitude(std::span<const double> phi, std::size_t k) {
  std::vector<double> mag;
  for (double p : phi) mag.push_back(std::abs(p));
  std::vector<std::size_t> out;
  for (auto i : explain::descending_order(mag)) {
    if (out.size() == k || mag[i] == 0.0) break;
    out.push_back(i);
  }
  return out;
}

/// Local/global agreement: the sample's most salient features must all be
/// among the top of the global SHAP ranking.
inline CheckOutcome check1(const ShapExplanation& local, const GlobalImportance& global, const CheckConfig& cfg = {}) {
  std::vector<std::string> sorted_local = local.feature_names, sorted_global = global.feature_names;
  std::sort(sorted_local.begin(), sorted_local.end());
  std::sort(sorted_global.begin(), sorted_global.end());
  require_same_names(sorted_local, sorted_global);

  Check1Evidence ev;
  for (auto i : top_by_magnitude(local.phi, cfg.k_local)) ev.local_top.push_back(local.feature_names[i]);
  const std::size_t kg = std::min(cfg.k_global, global.ranking.size());
  ev.global_top.assign(global.ranking.begin(), global.ranking.begin() + static_cast<std::ptrdiff_t>(kg));
  for (const auto& n : ev.local_top)
    if (std::find(ev.global_top.begin(), ev.global_top.end(), n) == ev.global_top.end()) ev.missing.push_back(n);
  if (ev.local_top.empty()) ev.note = "no salient local features";
  const bool passed = !ev.local_top.empty() && ev.missing.empty();
  return {CheckId::Check1, passed, std::move(ev)};
}

/// Reference distributions for check 2, precomputed from a SHAP matrix.
struct Reference {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> sorted_phi;
  std::vector<std::vector<double>> sorted_values;

  static Reference from(const ShapMatrix& m) {
    if (m.rows.empty()) throw Error(Errc::EmptySummary, "reference");
    Reference r{m.feature_names, {}, {}};
    for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
      auto p = m.column_phi(f);
      auto v = m.column_values(f);
      std::sort(p.begin(), p.end());
      std::sort(v.begin(), v.end());
      r.sorted_phi.push_back(std::move(p));
      r.sorted_values.push_back(std::move(v));
    }
    return r;
  }
};

/// Typicality: per feature, the sample's (phi, value quantile) pair must fall
/// in the central mass of the reference population, unless the feature's
/// attribution is negligible. Passes when at least min_pass features do.
inline CheckOutcome check2(const ShapExplanation& local, const Reference& ref, const CheckConfig& cfg = {}) {
  if (ref.sorted_phi.empty() || ref.sorted_phi.front().empty()) throw Error(Errc::EmptySummary, "check2");
  require_same_names(local.feature_names, ref.feature_names);
  const double tail = (1.0 - cfg.central_mass) / 2.0;
  double max_abs = 0.0;
  for (double p : local.phi) max_abs = std::max(max_abs, std::abs(p));

  Check2Evidence ev;
  ev.required = std::min(cfg.min_pass, local.phi.size());
  for (std::size_t f = 0; f < local.phi.size(); ++f) {
    FeatureCheck2 fc;
    fc.feature = local.feature_names[f];
    fc.phi = local.phi[f];
    fc.phi_lo = explain::sample_quantile(ref.sorted_phi[f], tail);
    fc.phi_hi = explain::sample_quantile(ref.sorted_phi[f], 1.0 - tail);
    fc.value_quantile = explain::value_quantile(ref.sorted_values[f], local.feature_values[f]);
    fc.quantile_lo = tail;
    fc.quantile_hi = 1.0 - tail;
    fc.negligible = std::abs(fc.phi) < cfg.negligible_fraction * max_abs;
    fc.passed = fc.negligible || (fc.phi_lo <= fc.phi && fc.phi <= fc.phi_hi && fc.quantile_lo <= fc.value_quantile &&
                                  fc.value_quantile <= fc.quantile_hi);
    ev.n_passed += fc.passed;
    ev.features.push_back(std::move(fc));
  }
  const bool passed = ev.n_passed >= ev.required;
  return {CheckId::Check2, passed, std::move(ev)};
}

inline CheckOutcome check2(const ShapExplanation& local, const ShapMatrix& summary, const CheckConfig& cfg = {}) {
  return check2(local, Reference::from(summary), cfg);
}

/// Sign consistency: enough salient features must push towards the predicted
/// class, and the single most important feature must not oppose it while
/// carrying a dominant share of the total attribution.
inline CheckOutcome check3(const ShapExplanation& local, Label predicted, const CheckConfig& cfg = {}) {
  double max_abs = 0.0, total_abs = 0.0;
  for (double p : local.phi) {
    max_abs = std::max(max_abs, std::abs(p));
    total_abs += std::abs(p);
  }
  if (max_abs == 0.0) throw Error(Errc::AllZeroAttributions, local.sample_id);

  const double sign = predicted == Label::Positive ? 1.0 : -1.0;
  Check3Evidence ev;
  ev.agreement = cfg.agreement;
  ev.dominant_share_limit = cfg.dominant_share;
  for (std::size_t f = 0; f < local.phi.size(); ++f) {
    if (std::abs(local.phi[f]) < cfg.salience * max_abs) continue;
    ev.salient.push_back(local.feature_names[f]);
    (sign * local.phi[f] > 0.0 ? ev.supporting : ev.opposing) += 1;
  }
  ev.support_fraction = static_cast<double>(ev.supporting) / static_cast<double>(ev.salient.size());
  const auto dominant = top_by_magnitude(local.phi, 1).front();
  ev.dominant_feature = local.feature_names[dominant];
  ev.dominant_share = std::abs(local.phi[dominant]) / total_abs;
  ev.dominant_opposes = sign * local.phi[dominant] < 0.0;
  const bool passed =
      ev.support_fraction >= ev.agreement && !(ev.dominant_opposes && ev.dominant_share >= ev.dominant_share_limit);
  return {CheckId::Check3, passed, std::move(ev)};
}

/// Re-derives `passed` from the evidence record alone.
inline bool recompute_passed(const CheckOutcome& c) {
  return std::visit(
      [](const auto& ev) -> bool {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, Check1Evidence>) {
          if (ev.local_top.empty()) return false;
          for (const auto& n : ev.local_top)
            if (std::find(ev.global_top.begin(), ev.global_top.end(), n) == ev.global_top.end()) return false;
          return true;
        } else if constexpr (std::is_same_v<T, Check2Evidence>) {
          std::size_t n = 0;
          for (const auto& f : ev.features)
            n += f.negligible || (f.phi_lo <= f.phi && f.phi <= f.phi_hi && f.quantile_lo <= f.value_quantile &&
                                  f.value_quantile <= f.quantile_hi);
          return n >= ev.required;
        } else {
          if (ev.all_zero || ev.salient.empty()) return false;
          const double frac = static_cast<double>(ev.supporting) / static_cast<double>(ev.salient.size());
          return frac >= ev.agreement && !(ev.dominant_opposes && ev.dominant_share >= ev.dominant_share_limit);
        }
      },
      c.evidence);
}

enum class FinalDecision { ValidTest, ReInspect, ReInspectOrValid };

inline std::string_view to_string(FinalDecision d) {
  switch (d) {
    case FinalDecision::ValidTest: return "ValidTest";
    case FinalDecision::ReInspect: return "ReInspect";
    case FinalDecision::ReInspectOrValid: return "ReInspectOrValid";
  }
  return "ReInspect";
}

/// Stage 4. Low confidence always needs re-inspection; a confident sample is
/// valid when every check passes, and borderline when only check 1 fails.
inline FinalDecision decide(GateDecision g, const std::array<bool, 3>& passed) {
  if (g == GateDecision::LowConfidence) return FinalDecision::ReInspect;
  if (passed[0] && passed[1] && passed[2]) return FinalDecision::ValidTest;
  if (!passed[0] && passed[1] && passed[2]) return FinalDecision::ReInspectOrValid;
  return FinalDecision::ReInspect;
}

struct DiagnosisReport {
  std::string sample_id;
  Label stage1_prediction = Label::Negative;
  double stage2_probability = 0.0;
  GateDecision stage2_gate = GateDecision::LowConfidence;
  std::array<CheckOutcome, 3> checks;
  FinalDecision final_decision = FinalDecision::ReInspect;
  ShapExplanation explanation;
};

/// Stages 2-4 given an already computed explanation.
inline DiagnosisReport assess(ShapExplanation explanation, double probability, Label predicted,
                              const calibrate::Gate& gate, const GlobalImportance& global, const Reference& ref,
                              const CheckConfig& cfg = {}) {
  DiagnosisReport r;
  r.sample_id = explanation.sample_id;
  r.stage1_prediction = predicted;
  r.stage2_probability = probability;
  r.stage2_gate = calibrate::gate(gate, probability);
  r.checks[0] = check1(explanation, global, cfg);
  r.checks[1] = check2(explanation, ref, cfg);
  try {
    r.checks[2] = check3(explanation, predicted, cfg);
  } catch (const Error& e) {
    if (e.code() != Errc::AllZeroAttributions) throw;
    Check3Evidence ev;
    ev.all_zero = true;
    ev.agreement = cfg.agreement;
    ev.dominant_share_limit = cfg.dominant_share;
    r.checks[2] = {CheckId::Check3, false, std::move(ev)};
  }
  r.final_decision = decide(r.stage2_gate, {r.checks[0].passed, r.checks[1].passed, r.checks[2].passed});
  r.explanation = std::move(explanation);
  return r;
}

/// Full four-stage diagnosis of one feature vector. The explanation targets
/// the calibrated probability.
inline DiagnosisReport diagnose(std::span<const double> x, const std::string& sample_id,
                                const calibrate::CalibratedModel& model, const GlobalImportance& global,
                                const Reference& ref, const Matrix& background, const CheckConfig& cfg = {}) {
  auto f = [&](std::span<const double> z) { return calibrate::calibrated_proba(model, z); };
  const double p = calibrate::calibrated_proba(model, x);
  auto explanation = explain::shap_values(f, x, background, model.forest.feature_names, sample_id);
  return assess(std::move(explanation), p, forest::label_from_probability(p), model.gate, global, ref, cfg);
}

}  // namespace msxai::framework
