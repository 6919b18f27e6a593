#pragma once

#include "elastic/gate.hpp"
#include "elastic/linalg.hpp"
#include "elastic/model.hpp"
#include "elastic/nuisance.hpp"
#include "elastic/score.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace elastic {

enum class Method { Rt, Eff, Elastic, CovAdjRt };

std::string_view to_string(Method m);

struct SolveResult {
  Vector psi;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;
};

using EquationFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

/// Damped Newton for equation(psi) = 0. Each step is halved (up to 20 times)
/// until the equation norm decreases. Converged when the norm < tol.
/// Throws SingularInformation on a singular Jacobian and ConvergenceFailure
/// (with the last iterate) after max_iter steps.
SolveResult solve_z(const EquationFn& equation, const JacobianFn& jacobian, const Vector& init, double tol = 1e-8,
                    int max_iter = 100);

/// Shared settings for the integrative estimators.
struct EstimatorSpec {
  NuisanceOptions nuisance;
  /// Fixed gamma in (0,1); nullopt selects gamma adaptively over gamma_grid.
  std::optional<double> gamma;
  std::vector<double> gamma_grid;  // empty = default grid
  double tol = 1e-8;
  int max_iter = 100;
};

/// {0.05, 0.10, ..., 0.95}.
std::vector<double> default_gamma_grid();

struct EstimateResult {
  Vector psi;
  Matrix variance;  // psi scale
  Method method = Method::Rt;
  std::optional<GateResult> gate;
  /// Information matrices at psi_rt (integrative estimators only).
  std::optional<VarianceBundle> bundle;
  int iterations = 0;
  bool converged = false;

  Vector standard_errors() const { return variance.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Trial-only efficient-score estimator: preliminary solve with mu = 0 and
/// sigma^2 = 1, trial nuisance fit at that root, then the full trial solve.
EstimateResult estimate_rt(const CombinedSample& sample, const HteModel& model, const TrialPropensity& e1,
                           const EstimatorSpec& spec = {});

/// Least squares of Y on (A - e1) Z over the trial records with an HC0
/// sandwich variance. Linear HTE only.
EstimateResult estimate_cov_adj_rt(const CombinedSample& sample, const HteModel& model,
                                   const TrialPropensity& e1 = TrialPropensity::constant(0.5));

/// Pooled efficient-score estimator (both strata).
EstimateResult estimate_eff(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                            const TrialPropensity& e1);

/// psi_eff when the gate accepts (T < c_gamma), psi_rt otherwise. The
/// variance is the analytic mixture MSE at eta_hat, divided by n.
EstimateResult estimate_elastic(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                                const TrialPropensity& e1);

/// Everything the integrative pipeline computes, for callers that need
/// several estimators from one sample without refitting.
struct IntegrativeFit {
  Vector psi_prelim;
  NuisanceFit nuisance;
  EstimateResult rt;
  EstimateResult eff;
  VarianceBundle bundle;
  GateResult gate;  // gamma fields filled when the elastic estimate is formed
};

IntegrativeFit fit_integrative(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                               const TrialPropensity& e1);

/// Elastic estimate from an existing integrative fit (gamma fixed or
/// selected per spec).
EstimateResult elastic_from_fit(const IntegrativeFit& fit, const EstimatorSpec& spec);

struct BootstrapOptions {
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = OpenMP default
};

struct BootstrapResult {
  Matrix variance;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

/// Stratified nonparametric bootstrap: records are resampled with
/// replacement within each stratum, the estimator rerun, and the empirical
/// covariance of the replicate estimates returned. Replicates whose
/// estimator throws are skipped and counted. Refuses Method::Elastic.
BootstrapResult bootstrap_variance(const CombinedSample& sample, const HteModel& model, Method method,
                                   const BootstrapOptions& options, const EstimatorSpec& spec = {},
                                   const TrialPropensity& e1 = TrialPropensity::constant(0.5));

/// Single-threaded reference with identical output.
BootstrapResult bootstrap_variance_serial(const CombinedSample& sample, const HteModel& model, Method method,
                                          const BootstrapOptions& options, const EstimatorSpec& spec = {},
                                          const TrialPropensity& e1 = TrialPropensity::constant(0.5));

/// Runs one estimator by method tag (not Elastic's CI machinery).
EstimateResult run_estimator(const CombinedSample& sample, const HteModel& model, Method method,
                             const EstimatorSpec& spec, const TrialPropensity& e1);

}  // namespace elastic
