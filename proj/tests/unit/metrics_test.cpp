#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "sfus/metrics.hpp"
#include "sfus/rng.hpp"
#include "oracles.hpp"

namespace sfus::metrics {
namespace {
using sfus::testing::kappa_oracle;


ConfusionMatrix random_matrix(SeededRng& rng) {
  ConfusionMatrix cm;
  for (auto& row : cm.counts)
    for (auto& v : row) v = static_cast<std::int64_t>(rng.below(50));
  if (cm.total() == 0) cm.counts[0][0] = 1;
  return cm;
}

std::vector<int> random_labels(SeededRng& rng, std::size_t n) {
  std::vector<int> v(n);
  for (int& x : v) x = static_cast<int>(rng.below(kNumStages));
  return v;
}

TEST(Confusion, PerfectIsDiagonal) {
  const std::vector<int> y{0, 1, 2, 3, 1, 1};
  const auto cm = confusion(y, y);
  EXPECT_EQ(cm.trace(), 6);
  EXPECT_EQ(cm.total(), 6);
}

TEST(Confusion, ErrorsOnEmptyOrMismatch) {
  EXPECT_THROW(confusion(std::vector<int>{}, std::vector<int>{}), MetricError);
  EXPECT_THROW(confusion(std::vector<int>{1}, std::vector<int>{1, 2}), MetricError);
  EXPECT_THROW(confusion(std::vector<int>{4}, std::vector<int>{1}), MetricError);
}

TEST(Confusion, MatchesPairwiseCount) {
  SeededRng rng(3);
  const auto pred = random_labels(rng, 100), truth = random_labels(rng, 100);
  const auto cm = confusion(pred, truth);
  for (int t = 0; t < kNumStages; ++t) {
    for (int p = 0; p < kNumStages; ++p) {
      std::int64_t n = 0;
      for (std::size_t i = 0; i < 100; ++i) n += truth[i] == t && pred[i] == p;
      EXPECT_EQ(cm.counts[t][p], n);
    }
  }
}

TEST(Kappa, Boundaries) {
  const std::vector<int> y{0, 1, 2, 3, 2, 1};
  EXPECT_EQ(kappa(confusion(y, y)), 1.0);
  const std::vector<int> constant(6, 1);
  EXPECT_EQ(kappa(confusion(constant, y)), 0.0);
  EXPECT_THROW(kappa(ConfusionMatrix{}), MetricError);
}

TEST(Kappa, TwoClassExample) {
  ConfusionMatrix cm;
  cm.counts[0][0] = 10, cm.counts[0][1] = 2, cm.counts[1][0] = 3, cm.counts[1][1] = 5;
  // p_o = 0.75, p_e = (12*13 + 8*7)/400 = 0.53
  EXPECT_NEAR(kappa(cm), (0.75 - 0.53) / 0.47, 1e-12);
  EXPECT_NEAR(kappa(cm), kappa_oracle(cm), 1e-12);
}

TEST(Kappa, RandomMatricesMatchOracle) {
  SeededRng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto cm = random_matrix(rng);
    ASSERT_NEAR(kappa(cm), kappa_oracle(cm), 1e-12);
  }
}

TEST(Kappa, InvariantUnderLabelPermutationAndReordering) {
  SeededRng rng(23);
  const auto pred = random_labels(rng, 200), truth = random_labels(rng, 200);
  const double k = kappa(confusion(pred, truth));
  const int perm[kNumStages] = {2, 0, 3, 1};
  std::vector<int> pp(pred.size()), tp(truth.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pp[i] = perm[pred[i]], tp[i] = perm[truth[i]];
  EXPECT_NEAR(kappa(confusion(pp, tp)), k, 1e-15);
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  std::vector<int> ps, ts;
  for (auto i : order) ps.push_back(pred[i]), ts.push_back(truth[i]);
  EXPECT_EQ(kappa(confusion(ps, ts)), k);
}

TEST(Kappa, OneIffNoOffDiagonal) {
  SeededRng rng(29);
  for (int i = 0; i < 200; ++i) {
    const auto cm = random_matrix(rng);
    const bool diagonal = cm.trace() == cm.total();
    EXPECT_EQ(kappa(cm) == 1.0, diagonal);
  }
}

TEST(ClassMetrics, PerfectAllOnes) {
  const std::vector<int> y{0, 1, 2, 3};
  const auto m = class_metrics(confusion(y, y));
  EXPECT_EQ(m.accuracy, 1.0);
  for (const auto& s : m.per_stage) {
    EXPECT_EQ(s.recall, 1.0);
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.f1, 1.0);
    EXPECT_FALSE(s.degenerate);
  }
}

TEST(ClassMetrics, AbsentStageIsZeroWithFlag) {
  const std::vector<int> y{0, 1, 3, 1};
  const auto m = class_metrics(confusion(y, y));
  EXPECT_EQ(m.per_stage[kDeep].recall, 0.0);
  EXPECT_EQ(m.per_stage[kDeep].f1, 0.0);
  EXPECT_TRUE(m.per_stage[kDeep].degenerate);
}

TEST(ClassMetrics, RandomMatrixHandFormula) {
  SeededRng rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto cm = random_matrix(rng);
    const auto m = class_metrics(cm);
    EXPECT_EQ(m.accuracy, static_cast<double>(cm.trace()) / static_cast<double>(cm.total()));
    for (int c = 0; c < kNumStages; ++c) {
      double row = 0, col = 0;
      for (int k = 0; k < kNumStages; ++k) row += cm.counts[c][k], col += cm.counts[k][c];
      const double tp = cm.counts[c][c];
      const double r = row > 0 ? tp / row : 0.0, p = col > 0 ? tp / col : 0.0;
      const double f1 = r + p > 0 ? 2 * r * p / (r + p) : 0.0;
      EXPECT_NEAR(m.per_stage[c].recall, r, 1e-15);
      EXPECT_NEAR(m.per_stage[c].precision, p, 1e-15);
      EXPECT_NEAR(m.per_stage[c].f1, f1, 1e-15);
    }
  }
}

std::vector<int> hypnogram(int w, int l, int d, int r) {
  std::vector<int> h;
  h.insert(h.end(), w, kWake);
  h.insert(h.end(), l, kLight);
  h.insert(h.end(), d, kDeep);
  h.insert(h.end(), r, kRem);
  return h;
}

TEST(SleepMeasures, WorkedExample) {
  const auto m = sleep_measures(hypnogram(100, 500, 200, 160));
  EXPECT_DOUBLE_EQ(m.tst_min, 430.0);
  EXPECT_NEAR(m.se_pct, 89.583333333, 1e-6);
  EXPECT_NEAR(m.fr_light_pct, 58.139534884, 1e-6);
  EXPECT_FALSE(m.degenerate);
}

TEST(SleepMeasures, AllWakeDegenerate) {
  const auto m = sleep_measures(hypnogram(20, 0, 0, 0));
  EXPECT_EQ(m.tst_min, 0.0);
  EXPECT_EQ(m.se_pct, 0.0);
  EXPECT_EQ(m.fr_rem_pct, 0.0);
  EXPECT_TRUE(m.degenerate);
  EXPECT_THROW(sleep_measures(std::vector<int>{}), MetricError);
}

TEST(SleepMeasures, RandomHypnogramsCountingOracle) {
  SeededRng rng(37);
  for (int i = 0; i < 1000; ++i) {
    const auto h = random_labels(rng, 1 + rng.below(1200));
    const auto m = sleep_measures(h);
    int n[kNumStages] = {};
    for (int s : h) ++n[s];
    const double tst = 0.5 * (n[1] + n[2] + n[3]);
    ASSERT_EQ(m.tst_min, tst);
    if (tst > 0) {
      ASSERT_NEAR(m.fr_light_pct + m.fr_deep_pct + m.fr_rem_pct, 100.0, 1e-9);
      ASSERT_NEAR(m.se_pct, tst / (tst + 0.5 * n[0]) * 100.0, 1e-12);
    }
  }
}

TEST(MeasuresMae, IdenticalAndShifted) {
  std::vector<Hypnogram> ref{{"a", hypnogram(10, 50, 20, 20)}, {"b", hypnogram(5, 60, 10, 25)}};
  EXPECT_EQ(measures_mae(ref, ref).tst_min, 0.0);
  std::vector<Hypnogram> one_ref{{"a", hypnogram(30, 50, 20, 20)}};
  std::vector<Hypnogram> one_pred{{"a", hypnogram(10, 70, 20, 20)}};
  EXPECT_EQ(measures_mae(one_pred, one_ref).tst_min, 10.0);
  std::vector<Hypnogram> wrong{{"z", hypnogram(10, 50, 20, 20)}, {"b", hypnogram(5, 60, 10, 25)}};
  EXPECT_THROW(measures_mae(wrong, ref), MetricError);
}

TEST(MeasuresMae, FiveRandomPairsHandSummed) {
  SeededRng rng(41);
  std::vector<Hypnogram> pred, ref;
  double tst = 0, se = 0;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "s" + std::to_string(i);
    pred.push_back({id, random_labels(rng, 100)});
    ref.push_back({id, random_labels(rng, 100)});
    const auto p = sleep_measures(pred.back().stages), r = sleep_measures(ref.back().stages);
    tst += std::abs(p.tst_min - r.tst_min);
    se += std::abs(p.se_pct - r.se_pct);
  }
  const auto mae = measures_mae(pred, ref);
  EXPECT_NEAR(mae.tst_min, tst / 5, 1e-12);
  EXPECT_NEAR(mae.se_pct, se / 5, 1e-12);
  EXPECT_EQ(mae.subjects, 5u);
}

TEST(ArgmaxRows, TiesGoToLowerIndex) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25, 0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{0, 1}));
}

}  // namespace
}  // namespace sfus::metrics
