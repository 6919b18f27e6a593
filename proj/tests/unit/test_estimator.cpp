#include "elastic/errors.hpp"
#include "elastic/estimator.hpp"
#include "elastic/simulate.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace elastic;

namespace {

const TrialPropensity kHalf = TrialPropensity::constant(0.5);

Record make(Source s, int a, double y, double x1) {
  Record r;
  r.source = s;
  r.treatment = a;
  r.outcome = y;
  r.covariates = Vector(2);
  r.covariates << 1.0, x1;
  return r;
}

}  // namespace

TEST(SolveZ, LinearSystemInOneStep) {
  Matrix a(2, 2);
  a << 3, 1, -1, 2;
  Vector root(2);
  root << 0.7, -1.3;
  const SolveResult r = solve_z([&](const Vector& x) -> Vector { return a * (x - root); },
                                [&](const Vector&) -> Matrix { return a; }, Vector::Zero(2));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT((r.psi - root).norm(), 1e-12);
}

TEST(SolveZ, StartAtRoot) {
  const SolveResult r = solve_z([](const Vector& x) -> Vector { return x; },
                                [](const Vector& x) -> Matrix { return Matrix::Identity(x.size(), x.size()); },
                                Vector::Zero(3));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
}

TEST(SolveZ, NonlinearRootWithHalving) {
  // atan has a basin where plain Newton diverges from x0 = 3.
  const SolveResult r = solve_z(
      [](const Vector& x) -> Vector { return x.array().atan().matrix(); },
      [](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, 1.0 / (1.0 + x[0] * x[0])); },
      Vector::Constant(1, 3.0));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(std::abs(r.psi[0]), 1e-8);
}

TEST(SolveZ, Failures) {
  // The second component is stuck at 1 whatever the step, so the norm
  // stops decreasing once the first reaches zero.
  EXPECT_THROW(solve_z(
                   [](const Vector& x) -> Vector {
                     Vector f(2);
                     f << x[0], 1.0;
                     return f;
                   },
                   [](const Vector&) -> Matrix { return Matrix::Identity(2, 2); }, Vector::Ones(2)),
               ConvergenceFailure);
  EXPECT_THROW(solve_z([](const Vector& x) -> Vector { return x + Vector::Ones(2); },
                       [](const Vector&) -> Matrix { return Matrix::Zero(2, 2); }, Vector::Zero(2)),
               SingularInformation);
  try {
    solve_z([](const Vector& x) -> Vector { return x.array().cube().matrix() - Vector::Constant(1, 2.0); },
            [](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, 3 * x[0] * x[0]); },
            Vector::Constant(1, 5.0), 1e-8, 2);
    FAIL() << "expected ConvergenceFailure";
  } catch (const ConvergenceFailure& e) {
    EXPECT_EQ(e.last_iterate().size(), 1);
  }
}

TEST(CovAdjRt, NoiselessRecoversPsiExactly) {
  std::vector<Record> recs;
  for (int i = 0; i < 20; ++i) {
    const double x1 = 0.1 * i - 1.0;
    const int a = i % 2;
    recs.push_back(make(Source::Trial, a, (a - 0.5) * (1.5 - 2.0 * x1), x1));
  }
  const CombinedSample s(std::move(recs), {0, 1});
  const EstimateResult r = estimate_cov_adj_rt(s, HteModel(HteKind::Linear, 2));
  EXPECT_NEAR(r.psi[0], 1.5, 1e-12);
  EXPECT_NEAR(r.psi[1], -2.0, 1e-12);
  EXPECT_EQ(r.method, Method::CovAdjRt);
}

TEST(CovAdjRt, InterceptOnlyIsUnivariateOls) {
  const CombinedSample s = fixtures::small_sample(41, 90, 10);
  std::vector<Record> recs = s.records();
  const CombinedSample s1(recs, {0});
  double num = 0.0, den = 0.0;
  for (const Record& r : s1.records()) {
    if (!r.is_trial()) continue;
    num += r.outcome * (r.treatment - 0.5);
    den += (r.treatment - 0.5) * (r.treatment - 0.5);
  }
  const EstimateResult r = estimate_cov_adj_rt(s1, HteModel(HteKind::Linear, 1));
  EXPECT_NEAR(r.psi[0], num / den, 1e-12);
}

TEST(CovAdjRt, RankDeficientAndWrongFamily) {
  std::vector<Record> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(make(Source::Trial, i % 2, 1.0 * i, 1.0));  // x1 == intercept
  const CombinedSample s(std::move(recs), {0, 1});
  EXPECT_THROW(estimate_cov_adj_rt(s, HteModel(HteKind::Linear, 2)), ConvergenceFailure);
  const CombinedSample ok = fixtures::small_sample(42, 50, 10);
  EXPECT_THROW(estimate_cov_adj_rt(ok, HteModel(HteKind::RiskDifference, 2)), InvalidArgument);
}

TEST(EstimateRt, ConstantTreatmentIsSingular) {
  std::vector<Record> recs;
  for (int i = 0; i < 30; ++i) recs.push_back(make(Source::Trial, 1, 0.3 * i, 0.05 * i));
  for (int i = 0; i < 30; ++i) recs.push_back(make(Source::RealWorld, i % 2, 0.3 * i, 0.05 * i));
  const CombinedSample s(std::move(recs), {0, 1});
  EXPECT_THROW(estimate_rt(s, HteModel(HteKind::Linear, 2), kHalf), SingularInformation);
}

TEST(EstimateRt, SolvesTrialEquationAndVarianceIsPsd) {
  const CombinedSample s = fixtures::small_sample(43, 300, 300);
  const EstimateResult r = estimate_rt(s, HteModel(HteKind::Linear, 2), kHalf);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.psi[0], 1.0, 0.3);
  EXPECT_NEAR(r.psi[1], 0.5, 0.3);
  EXPECT_LT((r.variance - r.variance.transpose()).norm(), 1e-12);
  EXPECT_TRUE(linalg::is_psd(r.variance));
}

TEST(EstimateEff, EmptyRealWorldIsPrecondition) {
  const CombinedSample s = fixtures::small_sample(44, 100, 0);
  EXPECT_THROW(estimate_eff(s, HteModel(HteKind::Linear, 2), EstimatorSpec{}, kHalf), PreconditionError);
  EXPECT_THROW(estimate_elastic(s, HteModel(HteKind::Linear, 2), EstimatorSpec{}, kHalf), PreconditionError);
}

TEST(EstimateEff, RootSatisfiesPooledEquation) {
  const CombinedSample s = fixtures::small_sample(45, 200, 400);
  const HteModel model(HteKind::Linear, 2);
  const IntegrativeFit fit = fit_integrative(s, model, EstimatorSpec{}, kHalf);
  const ScoreContext ctx(model, fit.nuisance, s);
  EXPECT_LT(ee_sum(ctx, fit.eff.psi, Stratum::pooled()).norm(), 1e-8);
  EXPECT_LT(ee_sum(ctx, fit.rt.psi, Stratum::trial_only()).norm(), 1e-8);
  EXPECT_TRUE(linalg::is_psd(fit.eff.variance));
}

TEST(EstimateEff, RiskDifferenceRoot) {
  const CombinedSample s = fixtures::small_sample(46, 400, 600, true);
  const HteModel model(HteKind::RiskDifference, 2);
  const IntegrativeFit fit = fit_integrative(s, model, EstimatorSpec{}, kHalf);
  const ScoreContext ctx(model, fit.nuisance, s);
  EXPECT_LT(ee_sum(ctx, fit.eff.psi, Stratum::pooled()).norm(), 1e-8);
}

TEST(EstimateEff, DuplicatedTrialDataAsRealWorld) {
  // Real-world stratum = trial records relabelled: no confounding, so the
  // pooled estimator must be at least as precise.
  const CombinedSample base = fixtures::small_sample(47, 300, 0);
  std::vector<Record> recs = base.records();
  for (Record r : base.records()) {
    r.source = Source::RealWorld;
    recs.push_back(r);
  }
  const CombinedSample s(std::move(recs), {0, 1});
  const HteModel model(HteKind::Linear, 2);
  const IntegrativeFit fit = fit_integrative(s, model, EstimatorSpec{}, kHalf);
  const ScoreContext ctx(model, fit.nuisance, s);
  EXPECT_LT(ee_sum(ctx, fit.eff.psi, Stratum::pooled()).norm(), 1e-8);
  EXPECT_LT(fit.eff.variance.trace(), fit.rt.variance.trace());
}

TEST(EstimateElastic, BitwiseEqualsBranchEstimate) {
  const HteModel model(HteKind::Linear, 2);
  for (std::uint64_t seed = 50; seed < 56; ++seed) {
    const CombinedSample s = fixtures::small_sample(seed, 150, 300, false, seed % 2 ? 1.5 : 0.0);
    const IntegrativeFit fit = fit_integrative(s, model, EstimatorSpec{}, kHalf);
    for (double g : {0.01, 0.2, 0.5, 0.9, 0.99}) {
      EstimatorSpec spec;
      spec.gamma = g;
      const EstimateResult e = elastic_from_fit(fit, spec);
      ASSERT_TRUE(e.gate.has_value());
      const bool accept = e.gate->t_stat < threshold(2, g);
      EXPECT_EQ(e.gate->accepted, accept);
      const Vector& expected = accept ? fit.eff.psi : fit.rt.psi;
      EXPECT_TRUE(e.psi == expected) << "seed " << seed << " gamma " << g;
      EXPECT_EQ(e.method, Method::Elastic);
    }
  }
}

TEST(EstimateElastic, FullPipelineMatchesFit) {
  const CombinedSample s = fixtures::small_sample(57, 150, 300);
  const HteModel model(HteKind::Linear, 2);
  EstimatorSpec spec;
  spec.gamma = 0.3;
  const EstimateResult a = estimate_elastic(s, model, spec, kHalf);
  const EstimateResult b = elastic_from_fit(fit_integrative(s, model, spec, kHalf), spec);
  EXPECT_TRUE(a.psi == b.psi);
  EXPECT_TRUE(a.variance == b.variance);
  const EstimateResult again = estimate_elastic(s, model, spec, kHalf);
  EXPECT_TRUE(a.psi == again.psi);
}

TEST(EstimateElastic, AdaptiveGammaComesFromGrid) {
  const CombinedSample s = fixtures::small_sample(58, 150, 300);
  EstimatorSpec spec;
  spec.gamma_grid = {0.1, 0.4, 0.7};
  const EstimateResult e = estimate_elastic(s, HteModel(HteKind::Linear, 2), spec, kHalf);
  ASSERT_TRUE(e.gate.has_value());
  EXPECT_TRUE(e.gate->gamma == 0.1 || e.gate->gamma == 0.4 || e.gate->gamma == 0.7);
  EXPECT_EQ(default_gamma_grid().front(), 0.05);
  EXPECT_EQ(default_gamma_grid().back(), 0.95);
}

TEST(Bootstrap, RefusesElastic) {
  const CombinedSample s = fixtures::small_sample(59, 50, 50);
  EXPECT_THROW(bootstrap_variance(s, HteModel(HteKind::Linear, 2), Method::Elastic, BootstrapOptions{}),
               UnsupportedMethod);
  EXPECT_THROW(bootstrap_variance_serial(s, HteModel(HteKind::Linear, 2), Method::Elastic, BootstrapOptions{}),
               UnsupportedMethod);
}

TEST(Bootstrap, IdenticalRecordsGiveZeroVariance) {
  std::vector<Record> recs;
  for (int i = 0; i < 12; ++i) recs.push_back(make(Source::Trial, 1, 2.0, 0.0));
  const CombinedSample s(std::move(recs), {0});
  BootstrapOptions o;
  o.replicates = 20;
  const BootstrapResult r = bootstrap_variance(s, HteModel(HteKind::Linear, 1), Method::CovAdjRt, o);
  EXPECT_EQ(r.variance(0, 0), 0.0);
  EXPECT_EQ(r.successes, 20u);
}

TEST(Bootstrap, ParallelMatchesSerialAndIsReproducible) {
  const CombinedSample s = fixtures::small_sample(60, 120, 200);
  const HteModel model(HteKind::Linear, 2);
  BootstrapOptions o;
  o.replicates = 24;
  o.seed = 9;
  o.threads = 3;
  for (Method m : {Method::CovAdjRt, Method::Rt, Method::Eff}) {
    const BootstrapResult a = bootstrap_variance(s, model, m, o);
    const BootstrapResult b = bootstrap_variance_serial(s, model, m, o);
    const BootstrapResult c = bootstrap_variance(s, model, m, o);
    EXPECT_TRUE(a.variance == b.variance) << to_string(m);
    EXPECT_TRUE(a.variance == c.variance) << to_string(m);
    EXPECT_TRUE(linalg::is_psd(a.variance));
  }
}

TEST(RunEstimator, DispatchesEveryMethod) {
  const CombinedSample s = fixtures::small_sample(61, 150, 300);
  const HteModel model(HteKind::Linear, 2);
  EstimatorSpec spec;
  spec.gamma = 0.5;
  for (Method m : {Method::Rt, Method::Eff, Method::Elastic, Method::CovAdjRt}) {
    const EstimateResult r = run_estimator(s, model, m, spec, kHalf);
    EXPECT_EQ(r.method, m);
    EXPECT_EQ(r.psi.size(), 2);
  }
  EXPECT_EQ(to_string(Method::CovAdjRt), "covadj_rt");
}
