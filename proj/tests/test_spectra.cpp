#include <gtest/gtest.h>

#include <algorithm>

#include "msxai/spectra.hpp"
#include "support.hpp"

using namespace msxai;

namespace {

std::vector<std::pair<double, double>> pairs(const MassSpectrum& s) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : s.points()) out.emplace_back(p.mz, p.intensity);
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

}  // namespace

TEST(ParseSpectrum, EchoesRows) {
  const auto s = parse_spectrum("10,1\n20,2", "a");
  EXPECT_EQ(pairs(s), (std::vector<std::pair<double, double>>{{10, 1}, {20, 2}}));
  EXPECT_EQ(s.sample_id(), "a");
}

TEST(ParseSpectrum, SortsByMz) {
  EXPECT_EQ(pairs(parse_spectrum("20,2\n10,1", "a")), (std::vector<std::pair<double, double>>{{10, 1}, {20, 2}}));
}

TEST(ParseSpectrum, MergesDuplicatesByMean) {
  EXPECT_EQ(pairs(parse_spectrum("10,1\n10,3", "a")), (std::vector<std::pair<double, double>>{{10, 2}}));
}

TEST(ParseSpectrum, TabsCommentsAndBlankLines) {
  const auto s = parse_spectrum("# header\n\n10\t1\r\n# mid\n20\t2.5\n", "a");
  EXPECT_EQ(pairs(s), (std::vector<std::pair<double, double>>{{10, 1}, {20, 2.5}}));
}

TEST(ParseSpectrum, Errors) {
  EXPECT_EQ(code_of([] { parse_spectrum("", "a"); }), Errc::EmptyInput);
  EXPECT_EQ(code_of([] { parse_spectrum("# only a comment\n", "a"); }), Errc::EmptyInput);
  EXPECT_EQ(code_of([] { parse_spectrum("10,1\n20,x\n", "a"); }), Errc::MalformedRow);
  EXPECT_EQ(code_of([] { parse_spectrum("10,1\n20,-1\n", "a"); }), Errc::NegativeIntensity);
  EXPECT_EQ(code_of([] { parse_spectrum("10,1,3\n", "a"); }), Errc::MalformedRow);
  try {
    parse_spectrum("10,1\n\n30;2\n", "a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedRow);
    EXPECT_EQ(e.detail(), "line 3");
  }
  try {
    parse_spectrum("10,1\n20,2\n30,-0.5\n", "a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.detail(), "line 3");
  }
}

TEST(ParseSpectrum, SerializeRoundTripIsTextExact) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SpectrumPoint> pts;
    double mz = uniform(rng, 2000, 3000);
    for (int i = 0; i < 200; ++i) {
      mz += uniform(rng, 0.001, 40.0);
      pts.push_back({mz, uniform(rng, 0.0, 1e6) * (i % 7 == 0 ? 0.0 : 1.0)});
    }
    const MassSpectrum s("x", pts);
    const auto text = serialize_spectrum(s);
    EXPECT_EQ(serialize_spectrum(parse_spectrum(text, "x")), text);
  }
}

TEST(MassSpectrum, Invariants) {
  EXPECT_EQ(code_of([] { MassSpectrum("a", {{10, 1}, {10, 2}}); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { MassSpectrum("a", {{10, -1}, {20, 2}}); }), Errc::NegativeIntensity);
  EXPECT_EQ(code_of([] { MassSpectrum("a", {{10, std::nan("")}, {20, 2}}); }), Errc::InvalidArgument);
}

TEST(MzRange, Invariants) {
  EXPECT_THROW(MzRange(5, 5), Error);
  EXPECT_THROW(MzRange(6, 5), Error);
  EXPECT_THROW(MzRange(1000, 3000).require_instrument_range(), Error);
  EXPECT_NO_THROW(MzRange(2000, 200000).require_instrument_range());
  const MzRange r(10, 20);
  EXPECT_TRUE(r.contains(10));
  EXPECT_TRUE(r.contains(20));
  EXPECT_FALSE(r.contains(20.0001));
}

TEST(CorrectBaseline, ConstantSpectrumBecomesZero) {
  for (std::size_t h : {1u, 3u, 10u, 99u}) {
    const auto s = test::grid_spectrum(0, 99, 1, [](double) { return 5.0; });
    for (const auto& p : correct_baseline(s, h).points()) EXPECT_EQ(p.intensity, 0.0);
  }
}

TEST(CorrectBaseline, GaussianOnOffsetAgainstAnalyticOracle) {
  // Oracle: the known offset is the baseline, so s - 3 is the target signal.
  const auto s = test::grid_spectrum(0, 2000, 1, [](double x) { return 3.0 + test::gauss(x, 1000, 15, 1.0); });
  const auto c = correct_baseline(s, 250);
  double apex = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double oracle = s.points()[i].intensity - 3.0;
    apex = std::max(apex, c.points()[i].intensity);
    if (std::abs(s.points()[i].mz - 1000) > 100) EXPECT_NEAR(c.points()[i].intensity, 0.0, 1e-9);
    EXPECT_NEAR(c.points()[i].intensity, oracle, 0.05);
  }
  EXPECT_NEAR(apex, 1.0, 0.05);
}

TEST(CorrectBaseline, ZeroBaselineUnchanged) {
  const auto s = test::grid_spectrum(0, 1000, 1, [](double x) { return x > 400 && x < 420 ? 1.0 : 0.0; });
  const auto c = correct_baseline(s, 100);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(c.points()[i].intensity, s.points()[i].intensity);
}

TEST(CorrectBaseline, IdempotentAfterZeroFloor) {
  // Narrow peaks on an offset, sometimes tilted. The property is asserted
  // only where the first pass left a zero floor under every window.
  Rng rng(3);
  int qualified = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const double c0 = uniform(rng, 0, 10), slope = trial % 2 ? uniform(rng, -0.001, 0.001) : 0.0;
    const double p1 = uniform(rng, 400, 1200), p2 = uniform(rng, 1600, 2600);
    const auto s = test::grid_spectrum(0, 3000, 1, [&](double x) {
      return std::max(0.0, c0 + slope * x) + test::gauss(x, p1, 12, 2.0) + test::gauss(x, p2, 20, 1.0);
    });
    const std::size_t h = 150;
    const auto once = correct_baseline(s, h);
    std::vector<double> y;
    for (const auto& p : once.points()) y.push_back(p.intensity);
    const auto floor = detail::rolling_min(y, h);
    if (std::any_of(floor.begin(), floor.end(), [](double v) { return v > 1e-12; })) continue;
    ++qualified;
    const auto twice = correct_baseline(once, h);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice.points()[i].intensity, once.points()[i].intensity, 1e-9);
  }
  EXPECT_GE(qualified, 10);
}

TEST(CorrectBaseline, WindowErrors) {
  const auto s = test::grid_spectrum(0, 9, 1, [](double) { return 1.0; });
  EXPECT_EQ(code_of([&] { correct_baseline(s, 0); }), Errc::WindowTooLarge);
  EXPECT_EQ(code_of([&] { correct_baseline(s, 10); }), Errc::WindowTooLarge);
  EXPECT_NO_THROW(correct_baseline(s, 9));
}

TEST(RollingOps, MatchBruteForce) {
  Rng rng(11);
  std::vector<double> y(300);
  for (auto& v : y) v = uniform(rng, -5, 5);
  for (std::size_t h : {1u, 2u, 7u, 50u, 299u}) {
    const auto mn = detail::rolling_min(y, h);
    const auto mean = detail::rolling_mean(y, h);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t lo = i >= h ? i - h : 0, hi = std::min(y.size() - 1, i + h);
      double m = y[lo], sum = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) {
        m = std::min(m, y[j]);
        sum += y[j];
      }
      EXPECT_EQ(mn[i], m);
      EXPECT_NEAR(mean[i], sum / static_cast<double>(hi - lo + 1), 1e-12);
    }
  }
}

TEST(NormalizeToCalibrant, Examples) {
  const MzRange cal(100, 200, "cal");
  const auto s = test::grid_spectrum(0, 300, 10, [](double x) { return x == 150 ? 2.0 : 0.5; });
  const auto n = normalize_to_calibrant(s, cal);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(n.points()[i].intensity, s.points()[i].intensity / 2.0);

  const auto unit = test::grid_spectrum(0, 300, 10, [](double x) { return x == 150 ? 1.0 : 0.25; });
  EXPECT_EQ(normalize_to_calibrant(unit, cal), unit);

  const auto zero = test::grid_spectrum(0, 300, 10, [](double x) { return x >= 100 && x <= 200 ? 0.0 : 1.0; });
  EXPECT_EQ(code_of([&] { normalize_to_calibrant(zero, cal); }), Errc::ZeroCalibrantPeak);
  EXPECT_EQ(code_of([&] { normalize_to_calibrant(s, MzRange(1000, 2000)); }), Errc::CalibrantOutOfRange);
}

TEST(NormalizeToCalibrant, CalibrantMaxIsOneAndScaleInvariant) {
  Rng rng(5);
  const MzRange cal(12000, 12800, "cal");
  for (int trial = 0; trial < 50; ++trial) {
    const double h = uniform(rng, 0.1, 10);
    const auto s = test::grid_spectrum(2000, 20000, 20, [&](double x) { return 0.01 + test::gauss(x, 12360, 60, h); });
    const auto n = normalize_to_calibrant(s, cal);
    double mx = 0.0;
    const auto [a, b] = points_in(n, cal);
    for (auto i = a; i < b; ++i) mx = std::max(mx, n.points()[i].intensity);
    EXPECT_NEAR(mx, 1.0, 1e-12);
    const double c = uniform(rng, 1e-3, 1e3);
    const auto nc = normalize_to_calibrant(s.scaled(c), cal);
    for (std::size_t i = 0; i < n.size(); ++i)
      EXPECT_NEAR(nc.points()[i].intensity, n.points()[i].intensity, 1e-12 * std::max(1.0, n.points()[i].intensity));
  }
}
