#include "elastic/errors.hpp"
#include "elastic/gate.hpp"
#include "elastic/special_functions.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace elastic;

TEST(QuadraticStatistic, Examples) {
  EXPECT_EQ(quadratic_statistic(Vector::Zero(2), Matrix::Identity(2, 2)), 0.0);
  EXPECT_DOUBLE_EQ(quadratic_statistic(Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 2.0)), 2.0);
  Matrix s(2, 2);
  s << 2, 1, 1, 2;
  Vector e(2);
  e << 1, -1;
  // s^-1 = [2 -1; -1 2] / 3, so e^T s^-1 e = 6 / 3.
  EXPECT_NEAR(quadratic_statistic(e, s), 2.0, 1e-14);
  EXPECT_THROW(quadratic_statistic(e, Matrix::Ones(2, 2)), SingularInformation);
}

TEST(QuadraticStatistic, CongruenceInvariance) {
  Rng rng = make_rng(31, {0});
  NormalSource normal(rng);
  for (int t = 0; t < 40; ++t) {
    const Eigen::Index p = 1 + t % 4;
    const Matrix s = fixtures::random_spd(rng, p);
    Vector eta(p);
    for (Eigen::Index k = 0; k < p; ++k) eta[k] = normal();
    Matrix a(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) a(i, j) = normal() + (i == j ? 2.0 : 0.0);
    const double base = quadratic_statistic(eta, s);
    const double moved = quadratic_statistic(a * eta, a * s * a.transpose());
    EXPECT_NEAR(moved, base, 1e-8 * std::max(1.0, base));
  }
}

TEST(Threshold, Examples) {
  EXPECT_NEAR(threshold(1, 0.3173), 1.0, 1e-3);
  EXPECT_NEAR(threshold(3, 0.05), 7.8147, 1e-3);
  EXPECT_NEAR(threshold(2, 0.05), 5.991, 1e-3);
  EXPECT_LT(threshold(2, 1.0 - 1e-12), 1e-10);
  EXPECT_THROW(threshold(2, 0.0), InvalidArgument);
  EXPECT_THROW(threshold(2, 1.0), InvalidArgument);
  EXPECT_THROW(threshold(0, 0.5), InvalidArgument);
}

TEST(Threshold, StrictlyMonotone) {
  for (std::size_t p = 1; p <= 6; ++p) {
    double prev = std::numeric_limits<double>::infinity();
    for (double g = 0.01; g < 1.0; g += 0.07) {
      const double c = threshold(p, g);
      EXPECT_LT(c, prev);
      EXPECT_LT(threshold(p, g), threshold(p + 1, g));
      prev = c;
    }
  }
}

TEST(Decide, StrictInequality) {
  const double c = threshold(2, 0.05);
  EXPECT_TRUE(decide(1.9, c));
  EXPECT_FALSE(decide(c, c));
  for (double g : {0.01, 0.5, 0.99}) EXPECT_TRUE(decide(0.0, threshold(3, g)));
}

TEST(ApplyGamma, FillsDecisionFields) {
  GateResult g;
  g.t_stat = 1.9;
  g.eta_hat = Vector::Zero(2);
  g.sigma_ss_hat = Matrix::Identity(2, 2);
  const GateResult a = apply_gamma(g, 0.05);
  EXPECT_TRUE(a.accepted);
  EXPECT_NEAR(a.c_gamma, threshold(2, 0.05), 0.0);
  EXPECT_EQ(a.gamma, 0.05);
  const GateResult r = apply_gamma(g, 0.5);
  EXPECT_NEAR(r.c_gamma, 2.0 * std::log(2.0), 1e-12);  // chi^2_2 median
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.accepted, r.t_stat < r.c_gamma);
}

TEST(TestStatistic, MatchesDefinitionOnSample) {
  const CombinedSample s = fixtures::small_sample(32, 150, 300);
  const HteModel model(HteKind::Linear, 2);
  const NuisanceFit fit = fit_nuisance(s, model, Vector::Zero(2), NuisanceOptions{}, TrialPropensity::constant(0.5));
  const ScoreContext ctx(model, fit, s);
  Vector psi(2);
  psi << 1.0, 0.5;
  const VarianceBundle b = variance_bundle(ctx, psi);
  const GateResult g = test_statistic(ctx, psi, b);
  const Vector eta = ee_sum(ctx, psi, Stratum::real_world_only()) / std::sqrt(300.0);
  EXPECT_LT((g.eta_hat - eta).norm(), 1e-12);
  EXPECT_NEAR(g.t_stat, eta.dot(b.sigma_ss.inverse() * eta), 1e-9 * std::max(1.0, g.t_stat));
  EXPECT_GE(g.t_stat, 0.0);
  EXPECT_NEAR(g.p_value, 1.0 - chi2_cdf(g.t_stat, 2.0), 1e-14);
}
