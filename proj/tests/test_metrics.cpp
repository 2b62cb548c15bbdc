#include <gtest/gtest.h>

#include "msxai/metrics.hpp"
#include "msxai/synth.hpp"
#include "support.hpp"

using namespace msxai;
using namespace msxai::metrics;
constexpr auto P = Label::Positive;
constexpr auto N = Label::Negative;

TEST(Evaluate, AllCorrect) {
  const std::vector<Label> y{P, N, P, N, N};
  const auto r = evaluate(y, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro.f1, 1.0);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Evaluate, OneFalsePositiveOneFalseNegative) {
  std::vector<Label> truth, pred;
  for (int i = 0; i < 12; ++i) truth.push_back(P), pred.push_back(P);
  for (int i = 0; i < 20; ++i) truth.push_back(N), pred.push_back(N);
  truth.push_back(N), pred.push_back(P);
  truth.push_back(P), pred.push_back(N);
  const auto r = evaluate(pred, truth);
  EXPECT_EQ(r.tp, 12u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.tn, 20u);
  EXPECT_DOUBLE_EQ(r.accuracy, 32.0 / 34.0);
  EXPECT_NEAR(r.accuracy, 0.9412, 5e-5);
  EXPECT_DOUBLE_EQ(r.positive.precision, 12.0 / 13.0);
  EXPECT_DOUBLE_EQ(r.negative.recall, 20.0 / 21.0);
  EXPECT_DOUBLE_EQ(r.macro.precision, (12.0 / 13.0 + 20.0 / 21.0) / 2.0);
}

TEST(Evaluate, ZeroDenominatorWarns) {
  const std::vector<Label> truth{P, P, N}, pred{N, N, N};
  const auto r = evaluate(pred, truth);
  EXPECT_EQ(r.positive.precision, 0.0);
  EXPECT_EQ(r.positive.recall, 0.0);
  EXPECT_EQ(r.positive.f1, 0.0);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("positive precision"), std::string::npos);
  EXPECT_NE(to_text(r).find("warning"), std::string::npos);
  EXPECT_EQ(to_json(r)["warnings"].size(), 1u);
}

TEST(Evaluate, Errors) {
  const std::vector<Label> a{P}, b{P, N}, none;
  try {
    evaluate(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  EXPECT_THROW(evaluate(none, none), Error);
}

TEST(Evaluate, LabelSwapAndCountsProperty) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 50);
    std::vector<Label> t, p, ts, ps;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(uniform_index(rng, 2) ? P : N);
      p.push_back(uniform_index(rng, 2) ? P : N);
      ts.push_back(t.back() == P ? N : P);
      ps.push_back(p.back() == P ? N : P);
    }
    const auto r = evaluate(p, t), s = evaluate(ps, ts);
    EXPECT_EQ(r.total(), n);
    EXPECT_EQ(r.tp, s.tn);
    EXPECT_EQ(r.fp, s.fn);
    EXPECT_EQ(r.fn, s.fp);
    EXPECT_EQ(r.tn, s.tp);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(r.tp + r.tn) / static_cast<double>(n));
    EXPECT_DOUBLE_EQ(r.macro.precision, s.macro.precision);
    EXPECT_DOUBLE_EQ(r.macro.recall, s.macro.recall);
    EXPECT_DOUBLE_EQ(r.macro.f1, s.macro.f1);
    EXPECT_DOUBLE_EQ(r.macro.f1, (r.positive.f1 + r.negative.f1) / 2.0);
  }
}

TEST(Evaluate, JsonShape) {
  const std::vector<Label> y{P, N};
  const auto j = to_json(evaluate(y, y, "train"));
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["split"], "train");
  EXPECT_EQ(j["confusion"]["tp"], 1);
  EXPECT_EQ(j["n"], 2);
}

TEST(SetMinus, Basic) {
  const std::vector<std::size_t> a{1, 3, 5, 7}, r{3, 7, 9};
  EXPECT_EQ(set_minus(a, r), (std::vector<std::size_t>{1, 5}));
}

namespace {
Dataset small_corpus(double outlier_fraction, std::uint64_t seed) {
  synth::GeneratorConfig g;
  g.seed = seed;
  g.n_positive = 30;
  g.n_negative = 46;
  g.outlier_fraction = outlier_fraction;
  return test::corpus_dataset(synth::generate_dataset(g), test::config_for(g));
}
AblationConfig quick_config(double contamination) {
  AblationConfig c;
  c.hyperparameters.n_estimators = 25;
  c.outliers.contamination = contamination;
  return c;
}
}  // namespace

TEST(Ablation, ThreeRowsWithFlags) {
  const auto rows = run_ablation(small_corpus(0.13, 5), quick_config(0.13));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].name, "RF");
  EXPECT_FALSE(rows[0].outlier_filtering || rows[0].calibration || rows[0].probability_gate);
  EXPECT_TRUE(rows[1].outlier_filtering);
  EXPECT_FALSE(rows[1].calibration || rows[1].probability_gate);
  EXPECT_TRUE(rows[2].outlier_filtering && rows[2].calibration && rows[2].probability_gate);
  EXPECT_LT(rows[1].n_train + rows[1].n_test, rows[0].n_train + rows[0].n_test);
  EXPECT_EQ(rows[1].n_train + rows[1].n_test + 9, rows[0].n_train + rows[0].n_test);
  ASSERT_TRUE(rows[2].report);
  EXPECT_EQ(rows[2].report->total() + rows[2].low_confidence, rows[2].n_test);
  const auto csv = ablation_to_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("model,outlier_filtering,", 0), 0u);
}

TEST(Ablation, ZeroContaminationLeavesRowsOneAndTwoEqual) {
  const auto rows = run_ablation(small_corpus(0.0, 6), quick_config(0.0));
  ASSERT_EQ(rows.size(), 3u);
  const auto &a = *rows[0].report, &b = *rows[1].report;
  EXPECT_EQ(rows[0].n_train, rows[1].n_train);
  EXPECT_EQ(rows[0].n_test, rows[1].n_test);
  EXPECT_EQ(a.tp, b.tp);
  EXPECT_EQ(a.fp, b.fp);
  EXPECT_EQ(a.fn, b.fn);
  EXPECT_EQ(a.tn, b.tn);
  EXPECT_EQ(a.accuracy, b.accuracy);
}
