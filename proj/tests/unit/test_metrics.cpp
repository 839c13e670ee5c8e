#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "cdnet/errors.hpp"
#include "cdnet/metrics.hpp"
#include "oracles.hpp"

using namespace cdnet;
using namespace cdnet::testing;

namespace {


std::vector<ScoredLabel> random_scored(std::size_t n, std::mt19937_64& rng, double prevalence) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution b(prevalence);
  std::vector<ScoredLabel> v(n);
  for (auto& s : v) s = {u(rng), b(rng)};
  return v;
}

/// Mann-Whitney statistic: P(score+ > score-) + P(tie) / 2.
double mann_whitney(const std::vector<ScoredLabel>& s) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : s) {
    if (!p.positive) continue;
    for (const auto& n : s) {
      if (n.positive) continue;
      pairs += 1.0;
      wins += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// PR area by brute force: for each distinct threshold recount precision and recall.
double pr_area_brute(const std::vector<ScoredLabel>& s) {
  std::set<double, std::greater<>> thresholds;
  double positives = 0.0;
  for (const auto& x : s) {
    thresholds.insert(x.score);
    positives += x.positive;
  }
  double area = 0.0;
  double prev_r = 0.0;
  double prev_p = 1.0;
  for (double t : thresholds) {
    double tp = 0.0;
    double called = 0.0;
    for (const auto& x : s) {
      if (x.score >= t) {
        called += 1.0;
        tp += x.positive;
      }
    }
    const double r = tp / positives;
    const double p = tp / called;
    area += (r - prev_r) * (p + prev_p) / 2.0;
    prev_r = r;
    prev_p = p;
  }
  return area;
}

}  // namespace

// ---- confusion counts ------------------------------------------------------------------------

TEST(ConfusionCounts, WorkedExample) {
  const std::vector<double> pred{0.9, 0.2, 0.8, 0.1};
  const std::vector<double> truth{1, 1, 0, 0};
  const auto c = confusion_counts<double, double>(pred, truth, 0.5);
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
}

TEST(ConfusionCounts, PerfectAndEmpty) {
  std::mt19937_64 rng(1);
  const U8 t = random_bits(64, rng, 0.3);
  std::vector<double> hard(t.begin(), t.end());
  for (double thr : {0.01, 0.5, 0.99}) {
    const auto c = confusion_counts<double, std::uint8_t>(hard, t, thr);
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.fn, 0u);
  }
  const std::vector<double> zeros(50, 0.0);
  EXPECT_EQ((confusion_counts<double, double>(zeros, zeros)), (ConfusionCounts{0, 0, 0, 50}));
}

TEST(ConfusionCounts, ThresholdIsInclusive) {
  const std::vector<double> pred{0.5, 0.4999999};
  const std::vector<double> truth{1, 1};
  EXPECT_EQ((confusion_counts<double, double>(pred, truth, 0.5)), (ConfusionCounts{1, 0, 1, 0}));
}

TEST(ConfusionCounts, ShapeMismatch) {
  const std::vector<double> a(3), b(4);
  EXPECT_THROW((confusion_counts<double, double>(a, b)), ShapeError);
}

// ---- metrics ---------------------------------------------------------------------------------

TEST(SegmentationMetrics, WorkedExample) {
  const auto m = segmentation_metrics({2, 1, 1, 0});
  EXPECT_DOUBLE_EQ(m.dsc, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.iou, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
}

TEST(SegmentationMetrics, PerfectPredictionScoresOne) {
  const auto m = segmentation_metrics({10, 0, 0, 20});
  for (double v : {m.dsc, m.iou, m.precision, m.recall, m.spe}) EXPECT_EQ(v, 1.0);
}

TEST(SegmentationMetrics, DegenerateConventions) {
  // Empty truth, empty prediction: everything agrees.
  auto m = segmentation_metrics({0, 0, 0, 16});
  for (double v : {m.dsc, m.iou, m.precision, m.recall, m.spe}) EXPECT_EQ(v, 1.0);
  // Empty prediction, nonempty truth: no positives called, precision undefined and wrong.
  m = segmentation_metrics({0, 0, 5, 11});
  EXPECT_EQ(m.dsc, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.spe, 1.0);
  // Empty truth, nonempty prediction: recall undefined and wrong.
  m = segmentation_metrics({0, 4, 0, 12});
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_DOUBLE_EQ(m.spe, 12.0 / 16.0);
  // All-positive truth and prediction: specificity undefined but agrees.
  m = segmentation_metrics({16, 0, 0, 0});
  EXPECT_EQ(m.spe, 1.0);
}

TEST(SegmentationMetrics, BruteForceRecountOnRandomPairs) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 16 + static_cast<std::size_t>(k) * 7;
    const U8 truth = random_bits(n, rng, 0.35);
    const U8 pred = random_bits(n, rng, 0.4);
    const Recount r = recount(pred, truth);
    const auto c = confusion_counts<std::uint8_t, std::uint8_t>(pred, truth, 0.5);
    ASSERT_EQ(c, (ConfusionCounts{r.tp, r.fp, r.fn, r.tn})) << k;
    ASSERT_EQ(c.total(), n);
    const auto m = segmentation_metrics(c);
    if (r.tp + r.fp + r.fn == 0 || r.tp + r.fp == 0 || r.tp + r.fn == 0 || r.tn + r.fp == 0) continue;
    EXPECT_EQ(m.dsc, (Ratio{2 * r.tp, 2 * r.tp + r.fp + r.fn}.value())) << k;
    EXPECT_EQ(m.iou, (Ratio{r.tp, r.tp + r.fp + r.fn}.value())) << k;
    EXPECT_EQ(m.precision, (Ratio{r.tp, r.tp + r.fp}.value())) << k;
    EXPECT_EQ(m.recall, (Ratio{r.tp, r.tp + r.fn}.value())) << k;
    EXPECT_EQ(m.spe, (Ratio{r.tn, r.tn + r.fp}.value())) << k;
  }
}

TEST(SegmentationMetrics, DiceIouIdentityAndHarmonicMean) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> d(0, 500);
  for (int k = 0; k < 1000; ++k) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const auto m = segmentation_metrics(c);
    EXPECT_NEAR(m.dsc, 2.0 * m.iou / (1.0 + m.iou), 1e-12);
    if (c.tp > 0) EXPECT_NEAR(m.dsc, 2.0 * m.precision * m.recall / (m.precision + m.recall), 1e-12);
    for (double v : {m.dsc, m.iou, m.precision, m.recall, m.spe}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

// ---- curves ----------------------------------------------------------------------------------

TEST(RocCurve, PerfectInvertedAndSingleClass) {
  const std::vector<ScoredLabel> perfect{{0.9, true}, {0.8, true}, {0.3, false}, {0.1, false}};
  EXPECT_DOUBLE_EQ(roc_auc(perfect), 1.0);
  const std::vector<ScoredLabel> inverted{{0.9, false}, {0.8, false}, {0.3, true}, {0.1, true}};
  EXPECT_DOUBLE_EQ(roc_auc(inverted), 0.0);
  const std::vector<ScoredLabel> one{{0.9, true}, {0.1, true}};
  EXPECT_THROW(roc_auc(one), UndefinedError);
}

TEST(RocCurve, TiesAreGrouped) {
  const std::vector<ScoredLabel> tied{{0.5, true}, {0.5, false}, {0.5, true}, {0.5, false}};
  const auto c = roc_curve(tied);
  EXPECT_EQ(c.points.size(), 2u);
  EXPECT_DOUBLE_EQ(c.area, 0.5);
}

TEST(RocCurve, MatchesMannWhitneyStatistic) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int k = 0; k < 50; ++k) {
    auto s = random_scored(60, rng, 0.4);
    if (k % 2 == 1) {
      for (auto& x : s) x.score = coarse(rng) / 10.0;  // many ties
    }
    const bool both = std::any_of(s.begin(), s.end(), [](auto& x) { return x.positive; }) &&
                      std::any_of(s.begin(), s.end(), [](auto& x) { return !x.positive; });
    if (!both) continue;
    EXPECT_NEAR(roc_auc(s), mann_whitney(s), 1e-12) << k;
  }
}

TEST(RocCurve, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 30; ++k) {
    auto s = random_scored(200, rng, 0.3);
    for (auto& x : s) x.score = std::round(x.score * 50.0) / 50.0;  // keep ties
    const double base = roc_auc(s);
    for (int t = 0; t < 3; ++t) {
      auto m = s;
      for (auto& x : m) {
        x.score = t == 0 ? std::exp(3.0 * x.score) : t == 1 ? x.score * x.score * x.score - 7.0
                                                            : std::atan(4.0 * x.score - 2.0);
      }
      EXPECT_NEAR(roc_auc(m), base, 1e-12) << k << " transform " << t;
    }
  }
}

TEST(RocCurve, RandomScoresGiveHalf) {
  std::mt19937_64 rng(6);
  const auto s = random_scored(10000, rng, 0.5);
  EXPECT_NEAR(roc_auc(s), 0.5, 0.02);
}

TEST(PrCurve, PerfectAndAllPositive) {
  const std::vector<ScoredLabel> perfect{{0.9, true}, {0.8, true}, {0.3, false}, {0.1, false}};
  EXPECT_DOUBLE_EQ(pr_auc(perfect), 1.0);
  const std::vector<ScoredLabel> all{{0.9, true}, {0.4, true}, {0.3, true}};
  const auto c = pr_curve(all);
  for (const auto& p : c.points) EXPECT_EQ(p.y, 1.0);
  EXPECT_DOUBLE_EQ(c.area, 1.0);
  const std::vector<ScoredLabel> none{{0.9, false}};
  EXPECT_THROW(pr_auc(none), UndefinedError);
  EXPECT_EQ(c.points.front().x, 0.0);
  EXPECT_EQ(c.points.front().y, 1.0);
}

TEST(PrCurve, MatchesBruteForceSweep) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coarse(0, 7);
  for (int k = 0; k < 50; ++k) {
    auto s = random_scored(40, rng, 0.35);
    if (k % 2 == 0) {
      for (auto& x : s) x.score = coarse(rng) / 7.0;
    }
    if (std::none_of(s.begin(), s.end(), [](auto& x) { return x.positive; })) continue;
    EXPECT_NEAR(pr_auc(s), pr_area_brute(s), 1e-12) << k;
  }
}

TEST(PrCurve, RandomScoresApproachPrevalence) {
  std::mt19937_64 rng(8);
  for (double prevalence : {0.1, 0.3, 0.6}) {
    const auto s = random_scored(100000, rng, prevalence);
    EXPECT_NEAR(pr_auc(s), prevalence, 0.03) << prevalence;
  }
}

TEST(Curves, NonFiniteScoreRejected) {
  const std::vector<ScoredLabel> s{{std::nan(""), true}, {0.1, false}};
  EXPECT_THROW(roc_auc(s), NumericError);
}

// ---- aggregation -----------------------------------------------------------------------------

TEST(Aggregate, MacroMeanAndPopulationStd) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::uint64_t> d(1, 100);
  std::vector<ConfusionCounts> slices;
  for (int k = 0; k < 7; ++k) slices.push_back({d(rng), d(rng), d(rng), d(rng)});
  const auto r = aggregate(slices);
  double mean = 0.0;
  for (const auto& c : slices) mean += segmentation_metrics(c).dsc / 7.0;
  double var = 0.0;
  for (const auto& c : slices) var += std::pow(segmentation_metrics(c).dsc - mean, 2) / 7.0;
  EXPECT_NEAR(r.mean.dsc, mean, 1e-15);
  EXPECT_NEAR(r.stddev.dsc, std::sqrt(var), 1e-15);
  EXPECT_EQ(r.per_slice.size(), 7u);
  EXPECT_FALSE(r.micro);
}

TEST(Aggregate, MicroPoolsCounts) {
  const std::vector<ConfusionCounts> slices{{1, 0, 0, 3}, {0, 0, 4, 0}};
  const auto r = aggregate(slices, true);
  EXPECT_EQ(r.pooled, (ConfusionCounts{1, 0, 4, 3}));
  EXPECT_DOUBLE_EQ(r.mean.dsc, 2.0 / 6.0);
  EXPECT_EQ(r.stddev.dsc, 0.0);
  const auto macro = aggregate(slices);
  EXPECT_DOUBLE_EQ(macro.mean.dsc, 0.5);
}

TEST(Aggregate, SinglePerfectSlice) {
  const std::vector<ConfusionCounts> slices{{5, 0, 0, 11}};
  const auto r = aggregate(slices);
  for (double v : {r.mean.dsc, r.mean.iou, r.mean.precision, r.mean.recall, r.mean.spe}) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(aggregate({}), UndefinedError);
}

TEST(FormatReport, HumanLinesAndKeyValueBlock) {
  const std::vector<ConfusionCounts> slices{{2, 1, 1, 4}};
  const std::string s = format_report(aggregate(slices));
  EXPECT_NE(s.find("DSC        0.6667 +/- 0.0000"), std::string::npos) << s;
  EXPECT_NE(s.find("\n---\n"), std::string::npos);
  EXPECT_NE(s.find("dsc=0.66666666666666663"), std::string::npos) << s;
  EXPECT_NE(s.find("aggregation=macro"), std::string::npos);
  EXPECT_NE(s.find("tp=2\nfp=1\nfn=1\ntn=4"), std::string::npos);
}
