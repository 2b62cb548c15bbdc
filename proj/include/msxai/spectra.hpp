#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msxai/error.hpp"
#include "msxai/label.hpp"

namespace msxai {

inline constexpr double kInstrumentMzLo = 2000.0;
inline constexpr double kInstrumentMzHi = 200000.0;

struct SpectrumPoint {
  double mz = 0.0;
  double intensity = 0.0;
  friend bool operator==(const SpectrumPoint&, const SpectrumPoint&) = default;
};

/// One profile spectrum: points sorted by strictly increasing m/z with finite,
/// non-negative intensities.
class MassSpectrum {
 public:
  MassSpectrum() = default;
  MassSpectrum(std::string sample_id, std::vector<SpectrumPoint> points,
               std::map<std::string, std::string> metadata = {})
      : sample_id_(std::move(sample_id)), points_(std::move(points)), metadata_(std::move(metadata)) {
    validate();
  }

  const std::string& sample_id() const { return sample_id_; }
  std::span<const SpectrumPoint> points() const { return points_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::size_t size() const { return points_.size(); }

  MassSpectrum with_intensities(std::span<const double> intensities) const {
    if (intensities.size() != points_.size()) throw Error(Errc::LengthMismatch, "intensities");
    auto pts = points_;
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i].intensity = intensities[i];
    return MassSpectrum(sample_id_, std::move(pts), metadata_);
  }

  MassSpectrum scaled(double c) const {
    auto pts = points_;
    for (auto& p : pts) p.intensity *= c;
    return MassSpectrum(sample_id_, std::move(pts), metadata_);
  }

  friend bool operator==(const MassSpectrum&, const MassSpectrum&) = default;

 private:
  void validate() const {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& p = points_[i];
      if (!std::isfinite(p.mz) || !std::isfinite(p.intensity))
        throw Error(Errc::InvalidArgument, "non-finite point at index " + std::to_string(i));
      if (p.intensity < 0.0) throw Error(Errc::NegativeIntensity, "index " + std::to_string(i));
      if (i > 0 && !(points_[i - 1].mz < p.mz))
        throw Error(Errc::InvalidArgument, "m/z not strictly increasing at index " + std::to_string(i));
    }
  }

  std::string sample_id_;
  std::vector<SpectrumPoint> points_;
  std::map<std::string, std::string> metadata_;
};

/// Closed m/z interval [lo, hi] with a label (biomarker or calibrant name).
struct MzRange {
  double lo = 0.0;
  double hi = 0.0;
  std::string name;

  MzRange() = default;
  MzRange(double lo_, double hi_, std::string name_ = {}) : lo(lo_), hi(hi_), name(std::move(name_)) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw Error(Errc::InvalidArgument, "range '" + name + "' requires lo < hi");
  }

  bool contains(double mz) const { return lo <= mz && mz <= hi; }
  double center() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }

  // Biomarker panels and calibrants must sit inside the instrument window.
  void require_instrument_range() const {
    if (lo < kInstrumentMzLo || hi > kInstrumentMzHi)
      throw Error(Errc::InvalidArgument, "range '" + name + "' outside [2000, 200000]");
  }

  friend bool operator==(const MzRange&, const MzRange&) = default;
};

// Index range [first, last) of points whose m/z lies inside r.
inline std::pair<std::size_t, std::size_t> points_in(const MassSpectrum& s, const MzRange& r) {
  const auto pts = s.points();
  auto first = std::lower_bound(pts.begin(), pts.end(), r.lo,
                                [](const SpectrumPoint& p, double v) { return p.mz < v; });
  auto last = std::upper_bound(first, pts.end(), r.hi,
                               [](double v, const SpectrumPoint& p) { return v < p.mz; });
  return {static_cast<std::size_t>(first - pts.begin()), static_cast<std::size_t>(last - pts.begin())};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a two-column table (comma or tab separated, detected from the first
/// data row). Blank lines and lines starting with '#' are skipped. Rows may
/// come in any order; repeated m/z values are merged by averaging.
inline MassSpectrum parse_spectrum(std::string_view text, std::string sample_id) {
  std::vector<SpectrumPoint> raw;
  char delim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = detail::trim(text.substr(pos, end == std::string_view::npos ? text.npos : end - pos));
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (delim == 0) {
      if (line.find(',') != line.npos) delim = ',';
      else if (line.find('\t') != line.npos) delim = '\t';
      else throw Error(Errc::MalformedRow, "line " + std::to_string(line_no));
    }
    const auto cut = line.find(delim);
    if (cut == line.npos || line.find(delim, cut + 1) != line.npos)
      throw Error(Errc::MalformedRow, "line " + std::to_string(line_no));
    const auto mz = detail::parse_double(line.substr(0, cut));
    const auto in = detail::parse_double(line.substr(cut + 1));
    if (!mz || !in) throw Error(Errc::MalformedRow, "line " + std::to_string(line_no));
    if (*in < 0.0) throw Error(Errc::NegativeIntensity, "line " + std::to_string(line_no));
    raw.push_back({*mz, *in});
  }
  if (raw.empty()) throw Error(Errc::EmptyInput, sample_id);

  std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.mz < b.mz; });
  std::vector<SpectrumPoint> merged;
  merged.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < raw.size() && raw[j].mz == raw[i].mz) sum += raw[j++].intensity;
    merged.push_back({raw[i].mz, sum / static_cast<double>(j - i)});
    i = j;
  }
  return MassSpectrum(std::move(sample_id), std::move(merged));
}

/// Writes `mz,intensity` rows with 12 significant digits.
inline std::string serialize_spectrum(const MassSpectrum& s) {
  std::string out;
  out.reserve(s.size() * 28);
  char buf[64];
  for (const auto& p : s.points()) {
    const int n = std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", p.mz, p.intensity);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

namespace detail {

// Sliding-window minimum over [i - h, i + h], truncated at the edges.
inline std::vector<double> rolling_min(std::span<const double> y, std::size_t h) {
  const std::size_t n = y.size();
  std::vector<double> out(n);
  std::deque<std::size_t> q;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hi = std::min(n - 1, i + h);
    while (next <= hi) {
      while (!q.empty() && y[q.back()] >= y[next]) q.pop_back();
      q.push_back(next++);
    }
    const std::size_t lo = i >= h ? i - h : 0;
    while (q.front() < lo) q.pop_front();
    out[i] = y[q.front()];
  }
  return out;
}

inline std::vector<double> rolling_mean(std::span<const double> y, std::size_t h) {
  const std::size_t n = y.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + y[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= h ? i - h : 0;
    const std::size_t hi = std::min(n - 1, i + h);
    out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultBaselineHalfWindow = 250;

/// Subtracts a morphological baseline (rolling minimum followed by a rolling
/// mean, both over 2*half_window+1 points) and clamps at zero.
inline MassSpectrum correct_baseline(const MassSpectrum& s, std::size_t half_window = kDefaultBaselineHalfWindow) {
  if (half_window < 1 || half_window >= s.size())
    throw Error(Errc::WindowTooLarge, "half_window=" + std::to_string(half_window) + ", points=" + std::to_string(s.size()));
  std::vector<double> y;
  y.reserve(s.size());
  for (const auto& p : s.points()) y.push_back(p.intensity);
  const auto baseline = detail::rolling_mean(detail::rolling_min(y, half_window), half_window);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i] - baseline[i]);
  return s.with_intensities(y);
}

/// Divides every intensity by the maximum intensity inside the calibrant
/// window.
inline MassSpectrum normalize_to_calibrant(const MassSpectrum& s, const MzRange& calibrant) {
  const auto [first, last] = points_in(s, calibrant);
  if (first == last) throw Error(Errc::CalibrantOutOfRange, calibrant.name);
  double peak = 0.0;
  for (std::size_t i = first; i < last; ++i) peak = std::max(peak, s.points()[i].intensity);
  if (!(peak > 0.0)) throw Error(Errc::ZeroCalibrantPeak, calibrant.name);
  std::vector<double> y;
  y.reserve(s.size());
  for (const auto& p : s.points()) y.push_back(p.intensity / peak);
  return s.with_intensities(y);
}

/// One entry of a dataset manifest.
struct ManifestRecord {
  std::string sample_id;
  std::string path;
  std::optional<Label> label;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

}  // namespace msxai
