#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msxai/error.hpp"
#include "msxai/forest.hpp"
#include "msxai/label.hpp"

namespace msxai::calibrate {

struct PlattParams {
  double a = 0.0;
  double b = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

/// p(s) = 1 / (1 + exp(a*s + b)), evaluated without overflow.
inline double platt_sigmoid(double a, double b, double s) {
  const double z = a * s + b;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

inline constexpr double kGradientTolerance = 1e-10;
inline constexpr std::size_t kMaxIterations = 200;

/// Minimizes the cross-entropy between sigmoid(scores) and soft targets with
/// a damped Newton method and backtracking line search (Lin, Lin & Weng).
inline PlattParams fit_platt_targets(std::span<const double> scores, std::span<const double> targets,
                                     double prior_positive, double prior_negative) {
  if (scores.size() != targets.size()) throw Error(Errc::LengthMismatch, "scores/targets");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(Errc::InvalidArgument, "non-finite score");
  const std::size_t n = scores.size();
  constexpr double kSigma = 1e-12;
  constexpr double kMinStep = 1e-10;

  auto objective = [&](double A, double B) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = scores[i] * A + B;
      f += z >= 0.0 ? targets[i] * z + std::log1p(std::exp(-z)) : (targets[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  PlattParams out;
  double A = 0.0;
  double B = std::log((prior_negative + 1.0) / (prior_positive + 1.0));
  double fval = objective(A, B);
  for (out.iterations = 0; out.iterations < kMaxIterations; ++out.iterations) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = platt_sigmoid(A, B, scores[i]);
      const double q = 1.0 - p;
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = targets[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    out.gradient_norm = std::max(std::abs(g1), std::abs(g2));
    if (out.gradient_norm < kGradientTolerance) break;

    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    bool moved = false;
    while (step >= kMinStep) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) {
      // Near the optimum the objective is flat in floating point, so the
      // Armijo test cannot succeed. Take the full Newton step if it shrinks
      // the gradient, else stop.
      double n1 = 0.0, n2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d1 = targets[i] - platt_sigmoid(A + dA, B + dB, scores[i]);
        n1 += scores[i] * d1;
        n2 += d1;
      }
      if (std::max(std::abs(n1), std::abs(n2)) >= out.gradient_norm) break;
      A += dA;
      B += dB;
      fval = objective(A, B);
    }
  }
  out.a = A;
  out.b = B;
  if (out.gradient_norm >= kGradientTolerance) {
    // The loop may have stopped after a step without re-measuring.
    double g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d1 = targets[i] - platt_sigmoid(A, B, scores[i]);
      g1 += scores[i] * d1;
      g2 += d1;
    }
    out.gradient_norm = std::max(std::abs(g1), std::abs(g2));
    if (out.gradient_norm >= kGradientTolerance)
      throw Error(Errc::NonConvergence, "gradient norm " + std::to_string(out.gradient_norm));
  }
  return out;
}

/// Platt scaling with the smoothed targets t+ = (N+ + 1)/(N+ + 2) and
/// t- = 1/(N- + 2).
inline PlattParams fit_platt(std::span<const double> scores, std::span<const Label> y) {
  if (scores.size() != y.size()) throw Error(Errc::LengthMismatch, "scores/labels");
  const double n_pos = static_cast<double>(count_label(y, Label::Positive));
  const double n_neg = static_cast<double>(count_label(y, Label::Negative));
  if (n_pos == 0.0 || n_neg == 0.0) throw Error(Errc::SingleClassTraining, "fit_platt");
  const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
  const double t_neg = 1.0 / (n_neg + 2.0);
  std::vector<double> targets;
  targets.reserve(y.size());
  for (auto l : y) targets.push_back(l == Label::Positive ? t_pos : t_neg);
  return fit_platt_targets(scores, targets, n_pos, n_neg);
}

struct Gate {
  double positive_above = 0.7;
  double negative_at_or_below = 0.25;

  void validate() const {
    if (!(0.0 <= negative_at_or_below && negative_at_or_below < positive_above && positive_above <= 1.0))
      throw Error(Errc::InvalidConfig, "gate thresholds");
  }
};

enum class GateDecision { ConfidentPositive, ConfidentNegative, LowConfidence };

inline std::string_view to_string(GateDecision d) {
  switch (d) {
    case GateDecision::ConfidentPositive: return "ConfidentPositive";
    case GateDecision::ConfidentNegative: return "ConfidentNegative";
    case GateDecision::LowConfidence: return "LowConfidence";
  }
  return "LowConfidence";
}

inline GateDecision gate(const Gate& g, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "probability outside [0, 1]");
  if (p > g.positive_above) return GateDecision::ConfidentPositive;
  if (p <= g.negative_at_or_below) return GateDecision::ConfidentNegative;
  return GateDecision::LowConfidence;
}

struct CalibratedModel {
  forest::RandomForestModel forest;
  double platt_a = 0.0;
  double platt_b = 0.0;
  Gate gate;

  double proba_from_score(double s) const { return platt_sigmoid(platt_a, platt_b, s); }
};

inline CalibratedModel calibrate(forest::RandomForestModel model, std::span<const Row> X_train,
                                 std::span<const Label> y_train, Gate g = {}) {
  g.validate();
  std::vector<double> scores;
  scores.reserve(X_train.size());
  for (const auto& x : X_train) scores.push_back(forest::predict_proba(model, x));
  const auto p = fit_platt(scores, y_train);
  return CalibratedModel{std::move(model), p.a, p.b, g};
}

inline double calibrated_proba(const CalibratedModel& m, std::span<const double> x) {
  return m.proba_from_score(forest::predict_proba(m.forest, x));
}

inline GateDecision gate(const CalibratedModel& m, double p) { return gate(m.gate, p); }

/// Calibrated prediction: Positive iff the calibrated probability exceeds 0.5.
inline Label predict(const CalibratedModel& m, std::span<const double> x) {
  return forest::label_from_probability(calibrated_proba(m, x));
}

struct CurvePoint {
  std::size_t bin = 0;
  double mean_predicted = 0.0;
  double fraction_positive = 0.0;
  std::size_t count = 0;
};

struct CalibrationCurve {
  std::vector<CurvePoint> points;       // non-empty bins, ascending
  std::vector<std::size_t> empty_bins;  // indices of bins with no samples
  std::size_t n_bins = 0;
};

/// Equal-width bins on [0, 1]; p == 1 falls in the last bin.
inline CalibrationCurve calibration_curve(std::span<const double> p, std::span<const Label> y, std::size_t n_bins = 5) {
  if (p.size() != y.size() || p.empty()) throw Error(Errc::LengthMismatch, "calibration_curve");
  if (n_bins == 0) throw Error(Errc::InvalidArgument, "n_bins");
  std::vector<double> sum_p(n_bins, 0.0), sum_y(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto b = std::min(n_bins - 1, static_cast<std::size_t>(std::floor(p[i] * static_cast<double>(n_bins))));
    sum_p[b] += p[i];
    sum_y[b] += y[i] == Label::Positive ? 1.0 : 0.0;
    ++count[b];
  }
  CalibrationCurve c;
  c.n_bins = n_bins;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) {
      c.empty_bins.push_back(b);
      continue;
    }
    const double n = static_cast<double>(count[b]);
    c.points.push_back({b, sum_p[b] / n, sum_y[b] / n, count[b]});
  }
  return c;
}

/// Expected calibration error: count-weighted mean |mean_p - frac_pos|.
inline double expected_calibration_error(const CalibrationCurve& c) {
  double total = 0.0, n = 0.0;
  for (const auto& pt : c.points) {
    total += static_cast<double>(pt.count) * std::abs(pt.mean_predicted - pt.fraction_positive);
    n += static_cast<double>(pt.count);
  }
  return n > 0.0 ? total / n : 0.0;
}

inline double expected_calibration_error(std::span<const double> p, std::span<const Label> y, std::size_t n_bins = 5) {
  return expected_calibration_error(calibration_curve(p, y, n_bins));
}

}  // namespace msxai::calibrate
