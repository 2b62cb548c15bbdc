#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "msxai/calibrate.hpp"
#include "msxai/explain.hpp"

// Minimal SVG emitters. Numbers are printed with fixed precision so output
// is byte-stable.
namespace msxai::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Canvas {
 public:
  Canvas(double w, double h) : w_(w), h_(h) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
            const std::string& extra = {}) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
             "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"" + extra + "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(std::max(0.0, w)) + "\" height=\"" +
             num(std::max(0.0, h)) + "\" fill=\"" + fill + "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill, double opacity = 1.0) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" + fill +
             "\" fill-opacity=\"" + num(opacity) + "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 1.5) {
    std::string p;
    for (const auto& [x, y] : pts) p += num(x) + "," + num(y) + " ";
    body_ += "<polyline points=\"" + p + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
             "\"/>\n";
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, double opacity) {
    std::string p;
    for (const auto& [x, y] : pts) p += num(x) + "," + num(y) + " ";
    body_ += "<polygon points=\"" + p + "\" fill=\"" + fill + "\" fill-opacity=\"" + num(opacity) + "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start", double size = 12) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + num(size) +
             "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
           "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

// Blue (0) to red (1).
inline std::string value_color(double q) {
  q = std::clamp(q, 0.0, 1.0);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(30 + 225 * q), static_cast<int>(60 + 40 * (1 - std::abs(2 * q - 1))),
                static_cast<int>(255 - 225 * q));
  return buf;
}

/// Reliability diagram: fraction of positives against mean predicted
/// probability per bin, with the diagonal for reference.
inline std::string calibration_plot(const std::vector<std::pair<std::string, calibrate::CalibrationCurve>>& curves) {
  const double W = 420, H = 420, L = 60, T = 30, S = 320;
  Canvas c(W, H);
  c.rect(L, T, S, S, "#f7f7f7");
  c.line(L, T + S, L + S, T, "#888888", 1.0, " stroke-dasharray=\"4,4\"");
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    c.text(L + v * S, T + S + 16, num(v), "middle", 10);
    c.text(L - 6, T + S - v * S + 4, num(v), "end", 10);
  }
  c.text(L + S / 2, H - 8, "mean predicted probability", "middle");
  c.text(14, T + S / 2, "fraction positive", "middle");
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& color = colors[i % 4];
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curves[i].second.points) {
      pts.emplace_back(L + p.mean_predicted * S, T + S - p.fraction_positive * S);
      c.circle(pts.back().first, pts.back().second, 4, color);
    }
    c.polyline(pts, color);
    c.rect(L + 10, T + 10 + 18 * static_cast<double>(i), 10, 10, color);
    c.text(L + 26, T + 19 + 18 * static_cast<double>(i), curves[i].first, "start", 11);
  }
  return c.str();
}

/// Horizontal bars in ranking order.
inline std::string importance_plot(const explain::GlobalImportance& g) {
  const double row = 24, L = 90, T = 36, barw = 300;
  const double H = T + row * static_cast<double>(g.ranking.size()) + 20;
  Canvas c(L + barw + 90, H);
  c.text(L, 20, std::string(explain::to_string(g.method)) + " importance");
  double lo = 0.0, hi = 0.0;
  for (double s : g.scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double span = hi - lo > 0 ? hi - lo : 1.0;
  const double zero = L + (0.0 - lo) / span * barw;
  for (std::size_t r = 0; r < g.ranking.size(); ++r) {
    const std::size_t f = static_cast<std::size_t>(
        std::find(g.feature_names.begin(), g.feature_names.end(), g.ranking[r]) - g.feature_names.begin());
    const double s = g.scores[f], y = T + row * static_cast<double>(r);
    const double x1 = L + (std::min(s, 0.0) - lo) / span * barw, x2 = L + (std::max(s, 0.0) - lo) / span * barw;
    c.rect(x1, y + 4, x2 - x1, row - 8, s >= 0 ? "#1f77b4" : "#d62728");
    c.text(L - 6, y + row / 2 + 4, g.ranking[r], "end", 11);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", s);
    c.text(x2 + 4, y + row / 2 + 4, buf, "start", 10);
  }
  c.line(zero, T, zero, H - 20, "#444444");
  return c.str();
}

/// Per-feature violin of attributions with a strip of points colored by the
/// feature value's quantile.
inline std::string shap_summary_plot(const explain::ShapMatrix& m, const std::vector<std::string>& order) {
  const double row = 36, L = 90, T = 36, width = 360;
  const double H = T + row * static_cast<double>(order.size()) + 40;
  Canvas c(L + width + 40, H);
  c.text(L, 20, "SHAP value (impact on calibrated probability)");
  double lim = 1e-12;
  for (const auto& r : m.rows)
    for (double p : r.phi) lim = std::max(lim, std::abs(p));
  auto xpos = [&](double phi) { return L + (phi / lim + 1.0) / 2.0 * width; };
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t f = static_cast<std::size_t>(
        std::find(m.feature_names.begin(), m.feature_names.end(), order[k]) - m.feature_names.begin());
    if (f >= m.feature_names.size()) continue;
    const double yc = T + row * (static_cast<double>(k) + 0.5);
    auto phis = m.column_phi(f);
    auto values = m.column_values(f);
    std::vector<double> sorted_values = values;
    std::sort(sorted_values.begin(), sorted_values.end());
    // Gaussian kernel density on a fixed grid; bandwidth by Silverman's rule.
    double mean = 0, var = 0;
    for (double p : phis) mean += p;
    mean /= static_cast<double>(phis.size());
    for (double p : phis) var += (p - mean) * (p - mean);
    const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(1, phis.size() - 1)));
    const double bw = std::max(1.06 * sd * std::pow(static_cast<double>(phis.size()), -0.2), lim * 0.02);
    constexpr int kGrid = 60;
    std::vector<double> dens(kGrid + 1);
    double dmax = 1e-300;
    for (int g = 0; g <= kGrid; ++g) {
      const double x = -lim + 2.0 * lim * g / kGrid;
      for (double p : phis) dens[g] += std::exp(-0.5 * (x - p) * (x - p) / (bw * bw));
      dmax = std::max(dmax, dens[g]);
    }
    std::vector<std::pair<double, double>> poly;
    for (int g = 0; g <= kGrid; ++g) poly.emplace_back(xpos(-lim + 2.0 * lim * g / kGrid), yc - dens[g] / dmax * row * 0.42);
    for (int g = kGrid; g >= 0; --g) poly.emplace_back(xpos(-lim + 2.0 * lim * g / kGrid), yc + dens[g] / dmax * row * 0.42);
    c.polygon(poly, "#bbbbbb", 0.5);
    for (std::size_t i = 0; i < phis.size(); ++i)
      c.circle(xpos(phis[i]), yc, 2.2, value_color(explain::value_quantile(sorted_values, values[i])), 0.85);
    c.text(L - 6, yc + 4, order[k], "end", 11);
  }
  c.line(xpos(0), T, xpos(0), H - 40, "#444444");
  c.text(xpos(-lim), H - 22, num(-lim), "middle", 10);
  c.text(xpos(lim), H - 22, num(lim), "middle", 10);
  c.text(L + width / 2, H - 8, "color: feature value quantile (blue low, red high)", "middle", 10);
  return c.str();
}

/// Local explanation bars sorted by |phi|, colored by value quantile.
inline std::string local_plot(const explain::ShapExplanation& e, const std::vector<double>& quantiles,
                              const std::string& title) {
  const double row = 22, L = 90, T = 48, width = 320;
  const std::size_t F = e.phi.size();
  Canvas c(L + width + 80, T + row * static_cast<double>(F) + 24);
  c.text(10, 18, title);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "base %.4f  output %.4f", e.base_value, e.model_output);
  c.text(10, 36, buf, "start", 11);
  double lim = 1e-12;
  for (double p : e.phi) lim = std::max(lim, std::abs(p));
  std::vector<std::size_t> order(F);
  for (std::size_t i = 0; i < F; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(e.phi[a]) > std::abs(e.phi[b]); });
  const double zero = L + width / 2;
  for (std::size_t k = 0; k < F; ++k) {
    const auto f = order[k];
    const double y = T + row * static_cast<double>(k);
    const double len = e.phi[f] / lim * width / 2;
    c.rect(std::min(zero, zero + len), y + 3, std::abs(len), row - 6, value_color(quantiles.empty() ? 0.5 : quantiles[f]));
    c.text(L - 6, y + row / 2 + 4, e.feature_names[f], "end", 11);
    std::snprintf(buf, sizeof(buf), "%+.4f", e.phi[f]);
    c.text(L + width + 6, y + row / 2 + 4, buf, "start", 10);
  }
  c.line(zero, T, zero, T + row * static_cast<double>(F), "#444444");
  return c.str();
}

}  // namespace msxai::svg
