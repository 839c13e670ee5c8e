#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "cdnet/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cdnet;
using namespace cdnet::testing;

namespace {

std::span<const double> sp(const Vec& v) { return {v.data(), v.size()}; }

Tensor<double> as_tensor(const Vec& v, std::size_t n, std::size_t h, std::size_t w) {
  return Tensor<double>(Shape{n, 1, h, w}, Vec(v));
}

/// Finite-difference check of a span loss with respect to its prediction vector.
template <typename F>
GradCheckReport check_loss_grad(F loss, Vec pred, const Vec& truth) {
  Parameter<double> p(Shape{1, 1, 1, pred.size()});
  p.value = Tensor<double>(p.value.shape(), std::move(pred));
  auto f = [&](bool with_grad) {
    const auto r = loss(std::span<const double>(p.value.data(), p.value.size()), sp(truth));
    if (with_grad) {
      for (std::size_t i = 0; i < r.grad.size(); ++i) p.grad[i] += r.grad[i];
    }
    return r.value;
  };
  return grad_check(f, {&p});
}

constexpr double kOracleTol = 1e-10;
constexpr double kLossGradTol = 1e-6;

}  // namespace

// ---- worked examples -------------------------------------------------------------------

TEST(DiceLoss, WorkedExamples) {
  const Vec y{1, 1, 0, 0};
  EXPECT_NEAR(dice_loss(sp(Vec{1, 0, 0, 0}), sp(y), 1e-300).value, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(dice_loss(sp(y), sp(y), 1e-6).value, 0.0, 1e-15);
  const Vec z{0, 0, 0, 0};
  EXPECT_NEAR(dice_loss(sp(z), sp(z), 1e-6).value, 0.0, 1e-15);
}

TEST(TverskyLoss, WorkedExamples) {
  LossConfig c;
  c.epsilon = 1e-300;
  EXPECT_NEAR(tversky_loss(sp(Vec{1, 0, 1, 0}), sp(Vec{1, 1, 0, 0}), c).value, 0.5, 1e-15);
  c.epsilon = 1e-6;
  EXPECT_NEAR(tversky_loss(sp(Vec{0, 1, 1, 0}), sp(Vec{0, 1, 1, 0}), c).value, 0.0, 1e-15);
}

TEST(FocalTverskyLoss, WorkedExamples) {
  LossConfig c;
  c.epsilon = 1e-300;
  const double ftl = focal_tversky_loss(sp(Vec{1, 0, 1, 0}), sp(Vec{1, 1, 0, 0}), c).value;
  EXPECT_NEAR(ftl, std::pow(0.5, 0.75), 1e-15);
  EXPECT_NEAR(ftl, 0.59460, 5e-6);
  const Vec y{1, 0, 1, 1};
  const auto perfect = focal_tversky_loss(sp(y), sp(y), LossConfig{});
  EXPECT_NEAR(perfect.value, 0.0, 1e-12);
  for (double g : perfect.grad) EXPECT_EQ(g, 0.0);  // zero subgradient at the optimum
}

TEST(CombinedLoss, WorkedExamples) {
  LossConfig c;
  c.epsilon = 1e-300;
  const auto r = combined_loss(sp(Vec{1, 0, 1, 0}), sp(Vec{1, 1, 0, 0}), c);
  EXPECT_NEAR(r.value, 0.5 + std::pow(0.5, 0.75), 1e-15);
  EXPECT_NEAR(r.value, 1.0946, 5e-5);
  const Vec y{1, 1, 0, 1};
  EXPECT_NEAR(combined_loss(sp(y), sp(y), LossConfig{}).value, 0.0, 1e-12);
}

// ---- oracles on random mask pairs ---------------------------------------------------------

TEST(LossOracle, RandomSixteenPixelPairs) {
  std::mt19937_64 rng(11);
  const LossConfig c;
  for (int k = 0; k < 100; ++k) {
    const Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    SCOPED_TRACE(k);
    EXPECT_NEAR(dice_loss(sp(p), sp(y), c.epsilon).value, dice_oracle(p, y, c.epsilon), kOracleTol);
    EXPECT_NEAR(tversky_loss(sp(p), sp(y), c).value, tversky_oracle(p, y, c.alpha, c.beta, c.epsilon), kOracleTol);
    const double ftl = focal_tversky_oracle(p, y, c.alpha, c.beta, c.gamma, c.epsilon);
    EXPECT_NEAR(focal_tversky_loss(sp(p), sp(y), c).value, ftl, kOracleTol);
    EXPECT_NEAR(combined_loss(sp(p), sp(y), c).value, dice_oracle(p, y, c.epsilon) + ftl, kOracleTol);
    LossConfig fd = c;
    fd.kind = LossKind::kFocalDice;
    const Vec pc = random_pred(16, rng, 0.01, 0.99);
    EXPECT_NEAR(combined_loss(sp(pc), sp(y), fd).value,
                focal_ce_oracle(pc, y, 2.0) + dice_oracle(pc, y, c.epsilon), kOracleTol);
  }
}

TEST(LossOracle, HalfHalfTverskyEqualsDiceOnHardMasks) {
  std::mt19937_64 rng(12);
  LossConfig c;
  c.alpha = c.beta = 0.5;
  c.epsilon = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vec y = random_truth(16, rng);
    Vec p = random_truth(16, rng);
    // Nonempty overlap: force one shared foreground pixel.
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == 1.0) {
        p[i] = 1.0;
        break;
      }
    }
    EXPECT_EQ(tversky_loss(sp(p), sp(y), c).value, dice_loss(sp(p), sp(y), 0.0).value) << k;
  }
}

TEST(LossOracle, HalfHalfTverskyEqualsDiceOnSoftMasks) {
  std::mt19937_64 rng(13);
  LossConfig c;
  c.alpha = c.beta = 0.5;
  c.epsilon = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vec p = random_pred(16, rng, 0.05, 1.0);
    const Vec y = random_truth(16, rng);
    EXPECT_NEAR(tversky_loss(sp(p), sp(y), c).value, dice_loss(sp(p), sp(y), 0.0).value, 1e-15) << k;
  }
}

TEST(LossOracle, FocalTverskyWithUnitGammaIsTversky) {
  std::mt19937_64 rng(14);
  LossConfig c;
  c.gamma = 1.0;
  for (int k = 0; k < 100; ++k) {
    const Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    const auto tl = tversky_loss(sp(p), sp(y), c);
    const auto ftl = focal_tversky_loss(sp(p), sp(y), c);
    EXPECT_EQ(ftl.value, tl.value) << k;
    EXPECT_EQ(ftl.grad, tl.grad) << k;
  }
}

TEST(LossOracle, DiceGradientMatchesQuotientRule) {
  std::mt19937_64 rng(15);
  for (int k = 0; k < 100; ++k) {
    const Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    const double eps = 1e-6;
    const Sums s = sums(p, y);
    const auto r = dice_loss(sp(p), sp(y), eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double num = 2.0 * s.tp + eps;
      const double den = s.pred + s.truth + eps;
      const double oracle = -(2.0 * y[i] / den - num / (den * den));
      EXPECT_NEAR(r.grad[i], oracle, kOracleTol);
    }
  }
}

// ---- gradients against finite differences --------------------------------------------------

TEST(LossGrad, AllLossesOnRandomSmallMasks) {
  std::mt19937_64 rng(16);
  LossConfig bg;
  bg.include_background = true;
  LossConfig fd;
  fd.kind = LossKind::kFocalDice;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 4 + static_cast<std::size_t>(k % 13);  // 4..16 pixels
    const Vec p = random_pred(n, rng, 0.05, 0.95);
    const Vec y = random_truth(n, rng);
    const LossConfig c;
    SCOPED_TRACE(k);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return dice_loss(a, b, c.epsilon); }, p, y),
                   kLossGradTol);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return tversky_loss(a, b, c); }, p, y), kLossGradTol);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return focal_tversky_loss(a, b, c); }, p, y),
                   kLossGradTol);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return combined_loss(a, b, c); }, p, y), kLossGradTol);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return combined_loss(a, b, bg); }, p, y), kLossGradTol);
    expect_grad_ok(check_loss_grad([&](auto a, auto b) { return combined_loss(a, b, fd); }, p, y), kLossGradTol);
  }
}

// Empty truth saturates the region losses at 1 - O(eps): gradients are O(eps), below the
// resolution of a difference quotient, so they are compared with closed forms instead.
TEST(LossGrad, EmptyTruthMatchesClosedForms) {
  std::mt19937_64 rng(24);
  const LossConfig c;
  for (int k = 0; k < 50; ++k) {
    const Vec p = random_pred(4 + static_cast<std::size_t>(k % 13), rng, 0.05, 0.95);
    const Vec y(p.size(), 0.0);
    const double sp_sum = sums(p, y).pred;
    const double eps = c.epsilon;
    const auto dl = dice_loss(sp(p), sp(y), eps);
    const auto tl = tversky_loss(sp(p), sp(y), c);
    const double dl_grad = eps / ((sp_sum + eps) * (sp_sum + eps));
    const double tl_grad = eps * c.beta / ((c.beta * sp_sum + eps) * (c.beta * sp_sum + eps));
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(dl.grad[i], dl_grad, 1e-10 * dl_grad);
      EXPECT_NEAR(tl.grad[i], tl_grad, 1e-10 * tl_grad);
    }
  }
}

// ---- properties ----------------------------------------------------------------------------

TEST(LossProperty, RangesOfEveryTerm) {
  std::mt19937_64 rng(17);
  const LossConfig c;
  for (int k = 0; k < 200; ++k) {
    const Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    for (double v : {dice_loss(sp(p), sp(y), c.epsilon).value, tversky_loss(sp(p), sp(y), c).value,
                     focal_tversky_loss(sp(p), sp(y), c).value}) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    const double total = combined_loss(sp(p), sp(y), c).value;
    EXPECT_GE(total, -1e-12);
    EXPECT_LE(total, 2.0 + 1e-12);
  }
}

TEST(LossProperty, CorrectingAFalsePositiveNeverRaisesTversky) {
  std::mt19937_64 rng(18);
  const LossConfig c;
  for (int k = 0; k < 200; ++k) {
    Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (y[i] != 0.0) continue;
      const double before = tversky_loss(sp(p), sp(y), c).value;
      const double saved = p[i];
      p[i] = 0.0;
      EXPECT_LE(tversky_loss(sp(p), sp(y), c).value, before + 1e-15);
      p[i] = saved;
    }
  }
}

TEST(LossProperty, FocalTverskyMonotoneAndDominatesTversky) {
  std::mt19937_64 rng(19);
  for (double gamma : {1.0, 4.0 / 3.0, 2.0, 3.0}) {
    LossConfig c;
    c.gamma = gamma;
    std::vector<std::pair<double, double>> pairs;
    for (int k = 0; k < 200; ++k) {
      const Vec p = random_pred(16, rng);
      const Vec y = random_truth(16, rng, false);
      const double tl = tversky_loss(sp(p), sp(y), c).value;
      const double ftl = focal_tversky_loss(sp(p), sp(y), c).value;
      EXPECT_GE(ftl, tl - 1e-15);
      pairs.emplace_back(tl, ftl);
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_GE(pairs[i].second, pairs[i - 1].second);
  }
}

TEST(LossProperty, BackgroundTermIsForegroundLossOnComplements) {
  std::mt19937_64 rng(20);
  LossConfig c;
  LossConfig bg = c;
  bg.include_background = true;
  for (int k = 0; k < 50; ++k) {
    const Vec p = random_pred(16, rng);
    const Vec y = random_truth(16, rng, false);
    Vec pc(p.size()), yc(y.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      pc[i] = 1.0 - p[i];
      yc[i] = 1.0 - y[i];
    }
    EXPECT_NEAR(combined_loss(sp(p), sp(y), bg).value,
                combined_loss(sp(p), sp(y), c).value + combined_loss(sp(pc), sp(yc), c).value, 1e-14);
  }
}

// ---- batch and total loss ------------------------------------------------------------------

TEST(BatchLoss, AveragesPerSampleLosses) {
  std::mt19937_64 rng(21);
  const LossConfig c;
  const Vec p = random_pred(32, rng);
  const Vec y = random_truth(32, rng);
  const auto r = batch_loss(as_tensor(p, 2, 4, 4), as_tensor(y, 2, 4, 4), c);
  const Vec p0(p.begin(), p.begin() + 16), p1(p.begin() + 16, p.end());
  const Vec y0(y.begin(), y.begin() + 16), y1(y.begin() + 16, y.end());
  const auto l0 = combined_loss(sp(p0), sp(y0), c);
  const auto l1 = combined_loss(sp(p1), sp(y1), c);
  EXPECT_NEAR(r.value, 0.5 * (l0.value + l1.value), 1e-15);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(r.grad[i], 0.5 * l0.grad[i], 1e-16);
    EXPECT_NEAR(r.grad[16 + i], 0.5 * l1.grad[i], 1e-16);
  }
}

TEST(BatchLoss, ShapeMismatchIsReported) {
  EXPECT_THROW(batch_loss(Tensor<double>(1, 1, 4, 4), Tensor<double>(1, 1, 4, 5), LossConfig{}), ShapeError);
  EXPECT_THROW(dice_loss(sp(Vec{1, 0}), sp(Vec{1, 0, 0}), 1e-6), ShapeError);
}

TEST(TotalLoss, AuxAbsentIsOutputLoss) {
  std::mt19937_64 rng(22);
  const Vec p = random_pred(16, rng);
  const Vec y = random_truth(16, rng);
  ForwardOutputs<double> out{as_tensor(p, 1, 4, 4), std::nullopt, {}};
  const auto t = total_loss(out, as_tensor(y, 1, 4, 4), LossConfig{});
  EXPECT_EQ(t.total, combined_loss(sp(p), sp(y), LossConfig{}).value);
  EXPECT_EQ(t.supervision, 0.0);
  EXPECT_FALSE(t.grad_aux.has_value());
}

TEST(TotalLoss, PerfectOutputsGiveZero) {
  const Vec y{1, 0, 1, 0};
  const auto truth = as_tensor(y, 1, 2, 2);
  ForwardOutputs<double> out{truth, truth, {}};
  EXPECT_NEAR(total_loss(out, truth, LossConfig{}).total, 0.0, 1e-12);
}

TEST(TotalLoss, PerfectMainHalfAuxByDirectEvaluation) {
  const Vec y{1, 1, 0, 0};
  const auto truth = as_tensor(y, 1, 2, 2);
  ForwardOutputs<double> out{truth, Tensor<double>(1, 1, 2, 2, 0.5), {}};
  const LossConfig c;
  const double eps = c.epsilon;
  // tp = 1, sum pred = 2, sum truth = 2, fn = 1, fp = 1.
  const double dl = 1.0 - (2.0 + eps) / (4.0 + eps);
  const double tl = 1.0 - (1.0 + eps) / (1.0 + 0.7 + 0.3 + eps);
  const double expected = dl + std::pow(tl, 0.75);
  const auto t = total_loss(out, truth, c);
  EXPECT_NEAR(t.output, 0.0, 1e-12);
  EXPECT_NEAR(t.supervision, expected, 1e-12);
  EXPECT_NEAR(t.total, expected, 1e-12);
}

TEST(TotalLoss, PerBranchSupervisionIsAveraged) {
  std::mt19937_64 rng(23);
  const Vec y = random_truth(16, rng);
  const auto truth = as_tensor(y, 1, 4, 4);
  std::vector<Tensor<double>> branches;
  double mean = 0.0;
  for (int b = 0; b < 3; ++b) {
    const Vec p = random_pred(16, rng);
    branches.push_back(as_tensor(p, 1, 4, 4));
    mean += combined_loss(sp(p), sp(y), LossConfig{}).value / 3.0;
  }
  ForwardOutputs<double> out{truth, std::nullopt, branches};
  const auto t = total_loss(out, truth, LossConfig{});
  EXPECT_NEAR(t.supervision, mean, 1e-14);
  EXPECT_EQ(t.grad_aux_branches.size(), 3u);
}

TEST(LossConfigValidation, RejectsInvalidValues) {
  LossConfig c;
  c.alpha = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = LossConfig{};
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = LossConfig{};
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(LossConfig{}.validate());
}

TEST(LossKindNames, RoundTrip) {
  for (LossKind k : {LossKind::kDiceFocalTversky, LossKind::kDice, LossKind::kFocalTversky, LossKind::kFocalDice}) {
    EXPECT_EQ(loss_kind_from_name(loss_kind_name(k)), k);
  }
  EXPECT_THROW(loss_kind_from_name("hinge"), ConfigError);
}
