#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "lsc/objective.hpp"

using namespace lsc;

namespace {

LossTerms terms(double s_p, double s_n, Label y, double tau = 0.07) { return LossTerms{s_p, s_n, tau, y, 0.0, 1.0, 0.0}; }

double grad_norm(const CentroidLossGradient& g) {
  double s = 0.0;
  for (double x : g.d_query) s += x * x;
  for (const auto& v : g.d_positives)
    for (double x : v) s += x * x;
  for (const auto& v : g.d_negatives)
    for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(SimLoss, EqualLogitsGiveLn2) {
  for (double tau : {0.01, 0.07, 1.0, 5.0})
    for (double s : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
      EXPECT_NEAR(sim_loss(terms(s, s, Label::positive, tau)), std::numbers::ln2, 1e-12);
      EXPECT_NEAR(sim_loss(terms(s, s, Label::negative, tau)), std::numbers::ln2, 1e-12);
    }
}

TEST(SimLoss, ReferenceValues) {
  // high-precision reference evaluations of log(1 + exp(-0.8 / 0.07))
  EXPECT_NEAR(sim_loss(terms(0.9, 0.1, Label::positive)), 1.08800810e-5, 1e-12);
  EXPECT_NEAR(sim_loss(terms(0.9, 0.1, Label::negative)), 11.4285823086525, 1e-10);
}

TEST(SimLoss, SaturatedLogitsStayFinite) {
  EXPECT_NEAR(sim_loss(terms(1.0, -1.0, Label::negative, 1e-3)), 2000.0, 1e-9);
  EXPECT_GE(sim_loss(terms(1.0, -1.0, Label::positive, 1e-3)), 0.0);
  EXPECT_LT(sim_loss(terms(1.0, -1.0, Label::positive, 1e-3)), 1e-300);
}

TEST(SimLoss, NonNegativeAndMonotone) {
  double prev_row = INFINITY;
  for (double sp = -1.0; sp <= 1.0 + 1e-12; sp += 0.05) {
    double prev = -INFINITY;
    const double first = sim_loss(terms(sp, -1.0, Label::positive));
    EXPECT_LT(first, prev_row);
    prev_row = first;
    for (double sn = -1.0; sn <= 1.0 + 1e-12; sn += 0.05) {
      const double l = sim_loss(terms(sp, std::min(sn, 1.0), Label::positive));
      EXPECT_GE(l, 0.0);
      EXPECT_GT(l, prev);
      prev = l;
    }
  }
}

TEST(SimLoss, Validation) {
  try {
    sim_loss(terms(0.5, 0.1, Label::positive, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidTemperature);
  }
  EXPECT_THROW(sim_loss(terms(0.5, 0.1, Label::positive, -1.0)), Error);
  EXPECT_THROW(sim_loss(terms(1.5, 0.1, Label::positive)), Error);
}

TEST(CombinedLoss, Examples) {
  LossTerms t{0.3, 0.3, 0.07, Label::positive, 2.0, 1.0, 0.4};
  EXPECT_NEAR(combined_loss(t), 2.27725887222398, 1e-12);
  t.w_c = 0.0;
  t.w_n = 0.7;
  EXPECT_EQ(combined_loss(t), 0.7 * 2.0);
  t.w_n = 0.0;
  EXPECT_EQ(combined_loss(t), 0.0);
}

TEST(CombinedLoss, Linear) {
  LossTerms t{0.8, 0.2, 0.07, Label::negative, 1.5, 0.6, 1.6};
  const double sim = sim_loss(t);
  EXPECT_NEAR(combined_loss(t), 0.6 * 1.5 + 1.6 * sim, 1e-12);
  t.l_nt = 3.0;
  EXPECT_NEAR(combined_loss(t), 0.6 * 3.0 + 1.6 * sim, 1e-12);
  t.w_c = -1.0;
  EXPECT_THROW(combined_loss(t), Error);
}

TEST(Gradient, SymmetricInstanceSwap) {
  CentroidLossInput in;
  in.query = {1.0, 0.0, 0.0};
  in.positives = {{0.0, 1.0, 0.0}};
  in.negatives = {{0.0, 0.0, 1.0}};
  in.y = Label::positive;
  const auto g = centroid_sim_loss_grad(in);
  EXPECT_NEAR(g.loss, std::numbers::ln2, 1e-15);

  CentroidLossInput swapped = in;
  std::swap(swapped.positives, swapped.negatives);
  swapped.y = Label::negative;
  const auto h = centroid_sim_loss_grad(swapped);
  EXPECT_NEAR(h.loss, g.loss, 1e-15);
  double nonzero = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(h.d_query[j], g.d_query[j], 1e-15);
    nonzero += std::abs(g.d_query[j]);
  }
  EXPECT_GT(nonzero, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(h.d_positives[0][j], g.d_negatives[0][j], 1e-15);
    EXPECT_NEAR(h.d_negatives[0][j], g.d_positives[0][j], 1e-15);
  }
}

TEST(Gradient, MatchesForward) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto in = random_instance(rng);
    EXPECT_NEAR(centroid_sim_loss_grad(in).loss, centroid_sim_loss(in), 1e-13);
  }
}

TEST(Gradient, EightDimSeed7) {
  Rng rng(7);
  CentroidLossInput in;
  in.query = random_unit_vector(rng, 8);
  for (int i = 0; i < 3; ++i) in.positives.push_back(random_unit_vector(rng, 8));
  for (int i = 0; i < 3; ++i) in.negatives.push_back(random_unit_vector(rng, 8));
  EXPECT_LT(check_gradient(in, 1e-5).max_relative_error, 1e-5);
}

TEST(Gradient, HundredRandomInstances) {
  const auto s = run_gradcheck(100, 1, 1e-5, 1e-5);
  EXPECT_TRUE(s.passed) << s.max_relative_error;
  EXPECT_EQ(s.trials, 100u);
}

TEST(Gradient, NonUnitQueryAndMembers) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(rng, 0.5);
    for (double& x : in.query) x *= 3.0;
    for (auto& v : in.positives)
      for (double& x : v) x *= 0.4;
    EXPECT_LT(check_gradient(in).max_relative_error, 1e-5);
  }
}

TEST(Gradient, SaturatedCorrectCaseVanishes) {
  CentroidLossInput in;
  in.query = {1.0, 0.0};
  in.positives = {{1.0, 0.0}};
  in.negatives = {{-1.0, 0.0}};
  in.y = Label::positive;
  const auto g = centroid_sim_loss_grad(in);
  EXPECT_LT(grad_norm(g), 1e-6);
  EXPECT_LT(g.loss, 1e-4);
}

TEST(Gradient, ZeroQueryRejected) {
  CentroidLossInput in;
  in.query = {0.0, 0.0};
  in.positives = {{1.0, 0.0}};
  in.negatives = {{0.0, 1.0}};
  EXPECT_THROW(centroid_sim_loss_grad(in), Error);
}

TEST(Gradient, BlockRelativeError) {
  const std::vector<double> a{1.0, 0.0}, b{1.0, 1e-6}, z{0.0, 0.0}, tiny{1e-13, 0.0};
  EXPECT_NEAR(block_relative_error(a, b), 1e-6, 1e-12);
  EXPECT_EQ(block_relative_error(z, z), 0.0);
  EXPECT_NEAR(block_relative_error(z, tiny), 1e-3, 1e-12);
}

TEST(Schedule, CosineEndpoints) {
  const ScheduleConfig c{ScheduleKind::cosine, 0.4, 4};
  const auto last = schedule_weights(c, 3);
  EXPECT_EQ(last.w_n, 1.0);
  EXPECT_EQ(last.w_c, 0.0);
}

TEST(Schedule, CosineMidpoint) {
  const ScheduleConfig c{ScheduleKind::cosine, 1.6, 10};
  const auto w = schedule_weights(c, 4);
  EXPECT_NEAR(w.w_n, 0.292893218813452, 1e-14);
  EXPECT_NEAR(w.w_c, 1.13137084989848, 1e-13);
}

TEST(Schedule, CosineFirstStep) {
  const ScheduleConfig c{ScheduleKind::cosine, 0.4, 1000};
  EXPECT_NEAR(schedule_weights(c, 0).w_c, 7.99999013e-4, 1e-12);
}

TEST(Schedule, CosineShape) {
  const ScheduleConfig c{ScheduleKind::cosine, 1.6, 10000};
  double prev_n = -1.0, prev_c = 0.0;
  for (std::int64_t s = 0; s < c.total_steps; ++s) {
    const auto w = schedule_weights(c, s);
    EXPECT_GE(w.w_n, prev_n);
    EXPECT_GE(w.w_c, 0.0);
    if (s > 0) {
      EXPECT_LT(std::abs(w.w_c - prev_c), 1e-3);  // no jumps
    }
    prev_n = w.w_n;
    prev_c = w.w_c;
  }
}

TEST(Schedule, LinearAndConstant) {
  const ScheduleConfig lin{ScheduleKind::linear, 0.4, 25};
  EXPECT_EQ(schedule_weights(lin, 24).w_c, 0.4);
  EXPECT_EQ(schedule_weights(lin, 24).w_n, 1.0);
  EXPECT_NEAR(schedule_weights(lin, 0).w_c, 0.4 / 25.0, 1e-16);
  const ScheduleConfig con{ScheduleKind::constant, 1.6, 5};
  for (int s = 0; s < 5; ++s) EXPECT_EQ(schedule_weights(con, s).w_c, 1.6);
}

TEST(Schedule, StepRange) {
  const ScheduleConfig c{ScheduleKind::cosine, 0.4, 10};
  try {
    schedule_weights(c, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepOutOfRange);
  }
  EXPECT_THROW(schedule_weights(c, -1), Error);
  EXPECT_THROW(schedule_weights(ScheduleConfig{ScheduleKind::cosine, 0.4, 0}, 0), Error);
}
