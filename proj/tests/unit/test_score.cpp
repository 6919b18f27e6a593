#include "elastic/errors.hpp"
#include "elastic/estimator.hpp"
#include "elastic/score.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace elastic;

namespace {

Record trial_record(int a, double y, double x1) {
  Record r;
  r.source = Source::Trial;
  r.treatment = a;
  r.outcome = y;
  r.covariates = Vector(2);
  r.covariates << 1.0, x1;
  return r;
}

struct Fitted {
  CombinedSample sample;
  HteModel model;
  NuisanceFit fit;
};

Fitted fitted(std::uint64_t seed, HteKind kind, std::size_t m = 150, std::size_t n = 300) {
  CombinedSample s = fixtures::small_sample(seed, m, n, kind == HteKind::RiskDifference);
  HteModel model(kind, 2);
  NuisanceFit fit = fit_nuisance(s, model, Vector::Zero(2), NuisanceOptions{}, TrialPropensity::constant(0.5));
  return {std::move(s), model, std::move(fit)};
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST(Ses, ZeroWhenOutcomeResidualVanishes) {
  const HteModel model(HteKind::Linear, 2);
  const NuisanceFit prelim = NuisanceFit::preliminary(TrialPropensity::constant(0.5), BasisSpec{});
  // mu = 0 under the preliminary nuisance, so y = 0 with a = 0 gives H - mu = 0.
  const CombinedSample s({trial_record(0, 0.0, 1.3), trial_record(1, 2.0, 0.4)}, {0, 1});
  const ScoreContext ctx(model, prelim, s);
  Vector psi(2);
  psi << 0.7, -0.2;
  EXPECT_EQ(ses(ctx, psi, 0), Vector::Zero(2));
}

TEST(Ses, ZeroWhenFittedMeanMatchesOutcome) {
  const Fitted f = fitted(11, HteKind::Linear);
  std::vector<Record> recs = f.sample.records();
  Record extra = recs.front();
  extra.treatment = 0;
  extra.outcome = f.fit.outcome_mean(extra);
  recs.push_back(extra);
  const CombinedSample s2(std::move(recs), {0, 1});
  const ScoreContext ctx(f.model, f.fit, s2);
  EXPECT_LT(ses(ctx, Vector::Ones(2), s2.size() - 1).norm(), 1e-14);
}

TEST(Ses, BilinearInOutcomeResidual) {
  // Scaling (H - mu) by c scales the score by c. With the preliminary
  // nuisance (mu = 0) and psi = 0, H - mu is the outcome itself.
  const HteModel model(HteKind::Linear, 2);
  const NuisanceFit prelim = NuisanceFit::preliminary(TrialPropensity::constant(0.5), BasisSpec{});
  for (double c : {-2.0, 0.5, 3.0}) {
    const CombinedSample a({trial_record(1, 1.7, 0.3)}, {0, 1});
    const CombinedSample b({trial_record(1, c * 1.7, 0.3)}, {0, 1});
    const ScoreContext ca(model, prelim, a), cb(model, prelim, b);
    EXPECT_TRUE(ses(cb, Vector::Zero(2), 0).isApprox(c * ses(ca, Vector::Zero(2), 0), 1e-14));
  }
}

TEST(EeSum, StrataPartitionAndElasticIndicator) {
  const Fitted f = fitted(12, HteKind::Linear);
  const ScoreContext ctx(f.model, f.fit, f.sample);
  Vector psi(2);
  psi << 0.9, 0.4;
  const Vector pooled = ee_sum(ctx, psi, Stratum::pooled());
  EXPECT_TRUE(ee_sum(ctx, psi, Stratum::elastic(true)) == pooled);
  EXPECT_TRUE(ee_sum(ctx, psi, Stratum::elastic(false)) == ee_sum(ctx, psi, Stratum::trial_only()));
  const Vector parts = ee_sum(ctx, psi, Stratum::trial_only()) + ee_sum(ctx, psi, Stratum::real_world_only());
  EXPECT_LT((pooled - parts).norm(), 1e-10 * std::max(1.0, pooled.norm()));
}

TEST(EeJacobian, SingleTrialRecord) {
  const HteModel model(HteKind::Linear, 2);
  const NuisanceFit prelim = NuisanceFit::preliminary(TrialPropensity::constant(0.5), BasisSpec{});
  const CombinedSample s({trial_record(1, 0.8, 2.0)}, {0, 1});
  const ScoreContext ctx(model, prelim, s);
  Vector z(2);
  z << 1.0, 2.0;
  const Matrix expected = -0.5 * z * z.transpose();
  EXPECT_TRUE(ee_jacobian(ctx, Vector::Zero(2), Stratum::trial_only()).isApprox(expected, 1e-14));
}

TEST(EeJacobian, LinearIsConstantInPsi) {
  const Fitted f = fitted(13, HteKind::Linear);
  const ScoreContext ctx(f.model, f.fit, f.sample);
  const Matrix j0 = ee_jacobian(ctx, Vector::Zero(2), Stratum::pooled());
  Vector psi(2);
  psi << 5.0, -3.0;
  EXPECT_LT(rel_err(ee_jacobian(ctx, psi, Stratum::pooled()), j0), 1e-14);
}

class JacobianFd : public ::testing::TestWithParam<HteKind> {};

TEST_P(JacobianFd, MatchesCentralDifferences) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const Fitted f = fitted(seed, GetParam(), 80, 120);
    const ScoreContext ctx(f.model, f.fit, f.sample);
    Rng rng = make_rng(seed, {7});
    NormalSource normal(rng);
    Vector psi(2);
    psi << 0.5 * normal(), 0.5 * normal();
    for (Stratum st : {Stratum::trial_only(), Stratum::pooled()}) {
      const Matrix analytic = ee_jacobian(ctx, psi, st);
      Matrix fd(2, 2);
      const double h = 1e-5;
      for (int k = 0; k < 2; ++k) {
        Vector up = psi, dn = psi;
        up[k] += h;
        dn[k] -= h;
        fd.col(k) = (ee_sum(ctx, up, st) - ee_sum(ctx, dn, st)) / (2 * h);
      }
      EXPECT_LT((analytic - fd).norm() / analytic.norm(), 1e-5) << "seed " << seed;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(BothFamilies, JacobianFd,
                         ::testing::Values(HteKind::Linear, HteKind::RiskDifference));

TEST(EeOuter, IsSumOfOuterProducts) {
  const Fitted f = fitted(14, HteKind::Linear, 30, 40);
  const ScoreContext ctx(f.model, f.fit, f.sample);
  const Vector psi = Vector::Ones(2);
  Matrix expected = Matrix::Zero(2, 2);
  for (std::size_t i = 0; i < f.sample.size(); ++i) {
    if (!f.sample[i].is_trial()) continue;
    const Vector s = ses(ctx, psi, i);
    expected += s * s.transpose();
  }
  EXPECT_LT(rel_err(ee_outer(ctx, psi, Stratum::trial_only()), expected), 1e-13);
}

TEST(VarianceBundleTest, ScalarExample) {
  const VarianceBundle b = make_variance_bundle(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(b.v_rt(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.v_eff(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(b.sigma_ss(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(b.gamma_mat(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.v_rt_minus_eff(0, 0), 0.5);
}

TEST(VarianceBundleTest, RandomSpdInputsSatisfyInvariants) {
  Rng rng = make_rng(15, {0});
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index p = 1 + trial % 4;
    const Matrix i_rt = fixtures::random_spd(rng, p);
    const Matrix i_rw = fixtures::random_spd(rng, p);
    const double rho = 0.1 + 3.0 * uniform01(rng);
    const VarianceBundle b = make_variance_bundle(i_rt, i_rw, rho);

    for (const Matrix* m : {&b.sigma_ss, &b.v_rt, &b.v_eff, &b.v_rt_minus_eff}) {
      EXPECT_LT((*m - m->transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
    EXPECT_EQ(Eigen::LLT<Matrix>(b.v_eff).info(), Eigen::Success);
    EXPECT_EQ(Eigen::LLT<Matrix>(b.v_rt).info(), Eigen::Success);
    EXPECT_EQ(Eigen::LLT<Matrix>(b.sigma_ss).info(), Eigen::Success);
    EXPECT_TRUE(linalg::is_psd(b.v_rt_minus_eff, 1e-10));

    // Sigma_SS = Gamma^T I_rt Gamma + I_rw, recomputed from the stored pieces.
    const Matrix ss = b.gamma_mat.transpose() * b.i_rt * b.gamma_mat + b.i_rw;
    EXPECT_LT((linalg::symmetrize(ss) - b.sigma_ss).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, ss.norm()));

    // Independent oracle: the inverses from a different factorization.
    const Matrix v_rt = (rho * i_rt).inverse();
    const Matrix v_eff = (rho * i_rt + i_rw).inverse();
    EXPECT_LT(rel_err(b.v_rt, v_rt), 1e-10);
    EXPECT_LT(rel_err(b.v_eff, v_eff), 1e-10);

    // Sorted eigenvalues of V_eff sit below those of V_rt.
    Eigen::SelfAdjointEigenSolver<Matrix> er(b.v_rt), ee(b.v_eff);
    for (Eigen::Index k = 0; k < p; ++k) EXPECT_LE(ee.eigenvalues()[k], er.eigenvalues()[k] + 1e-12);
  }
}

TEST(VarianceBundleTest, InvalidInputs) {
  EXPECT_THROW(make_variance_bundle(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.0), InvalidArgument);
  EXPECT_THROW(make_variance_bundle(Matrix::Ones(2, 2), Matrix::Identity(2, 2), 1.0), SingularInformation);
  EXPECT_THROW(make_variance_bundle(Matrix::Ones(1, 1), Matrix::Identity(2, 2), 1.0), InvalidArgument);
}

TEST(VarianceBundleTest, FromSampleMatchesOuterProducts) {
  const Fitted f = fitted(16, HteKind::Linear);
  const ScoreContext ctx(f.model, f.fit, f.sample);
  const Vector psi = Vector::Ones(2);
  const VarianceBundle b = variance_bundle(ctx, psi);
  const double m = static_cast<double>(f.sample.trial_count());
  const double n = static_cast<double>(f.sample.real_world_count());
  EXPECT_LT(rel_err(b.i_rt, ee_outer(ctx, psi, Stratum::trial_only()) / m), 1e-12);
  EXPECT_LT(rel_err(b.i_rw, ee_outer(ctx, psi, Stratum::real_world_only()) / n), 1e-12);
  EXPECT_DOUBLE_EQ(b.rho, m / n);
  EXPECT_EQ(b.p(), 2u);
}

TEST(VarianceBundleTest, EmptyRealWorldIsPrecondition) {
  CombinedSample s = fixtures::small_sample(17, 60, 0);
  const HteModel model(HteKind::Linear, 2);
  NuisanceOptions opts;
  const NuisanceFit fit = fit_nuisance(s, model, Vector::Zero(2), opts, TrialPropensity::constant(0.5));
  const ScoreContext ctx(model, fit, s);
  EXPECT_THROW(variance_bundle(ctx, Vector::Zero(2)), PreconditionError);
}
