#pragma once

#include "elastic/linalg.hpp"
#include "elastic/model.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace elastic {

/// Degree-2 polynomial sieve over the non-intercept covariates.
struct BasisSpec {
  bool include_squares = true;
  bool include_pairwise_interactions = true;
  /// Covariate indices left out of the basis entirely (index 0 is the
  /// intercept and is always kept).
  std::vector<std::size_t> omit_indices;
};

/// Features (1, x_j, x_j^2, x_j x_k for j < k) over the kept coordinates,
/// in that block order and ascending index within each block.
Vector build_basis(const Vector& x, const BasisSpec& spec);
std::size_t basis_size(std::size_t dim_x, const BasisSpec& spec);

/// Propensity clipping bound applied to every emitted propensity.
inline constexpr double kPropensityClip = 0.01;
/// Floor for estimated outcome variances.
inline constexpr double kVarianceFloor = 1e-8;

struct LogisticFit {
  Vector coef;
  int iterations = 0;
  bool converged = false;
  /// Some |coef| exceeded 30: the likelihood has no finite maximizer.
  bool separation = false;
};

/// Binomial maximum likelihood by iteratively reweighted least squares with
/// step-halving. Converged when max |coef change| < tol. A singular weighted
/// Gram matrix falls back to a 1e-8 ridge. Throws ConvergenceFailure
/// (carrying the last iterate) after max_iter iterations.
LogisticFit fit_logistic(const Matrix& features, const Vector& labels, int max_iter = 100, double tol = 1e-8);

/// Least squares via column-pivoted QR; rank deficiency falls back to a
/// 1e-10 ridge on the normal equations.
Vector fit_linear(const Matrix& features, const Vector& targets);

/// Known-by-design trial propensity e1(X): a constant, or each record's own
/// `trial_propensity` field.
class TrialPropensity {
 public:
  static TrialPropensity constant(double value);
  static TrialPropensity per_record();

  double operator()(const Record& r) const;
  bool is_constant() const noexcept { return constant_.has_value(); }
  double constant_value() const { return constant_.value(); }

 private:
  std::optional<double> constant_;
};

enum class VarianceModel {
  Auto,       ///< Bernoulli when every outcome is 0/1, otherwise StratumConstant
  StratumConstant,
  Bernoulli,  ///< sigma^2(X) = mu(X) {1 - mu(X)}
};

struct NuisanceOptions {
  BasisSpec basis;
  VarianceModel variance = VarianceModel::Auto;
  int logistic_max_iter = 100;
  double logistic_tol = 1e-8;
  /// When false only the trial nuisances are fitted (trial-only estimators
  /// never touch e0 or mu0).
  bool fit_real_world = true;
};

/// Fitted e_delta, mu_delta and sigma^2_delta.
class NuisanceFit {
 public:
  NuisanceFit() = default;

  double propensity(const Record& r) const;
  double outcome_mean(const Record& r) const;
  double outcome_variance(const Record& r) const;

  const BasisSpec& basis() const noexcept { return basis_; }
  const TrialPropensity& trial_propensity() const noexcept { return e1_; }
  const std::optional<Vector>& e0_coef() const noexcept { return e0_coef_; }
  const std::optional<Vector>& mu_coef(Source s) const noexcept {
    return s == Source::Trial ? mu1_coef_ : mu0_coef_;
  }
  double sigma2(Source s) const noexcept { return s == Source::Trial ? sigma2_1_ : sigma2_0_; }
  VarianceModel variance_model() const noexcept { return variance_; }
  bool e0_separation() const noexcept { return e0_separation_; }

  /// Working nuisance for the preliminary trial equation: mu = 0,
  /// sigma^2 = 1, e1 known.
  static NuisanceFit preliminary(const TrialPropensity& e1, const BasisSpec& basis);

  friend NuisanceFit fit_nuisance(const CombinedSample&, const HteModel&, const Vector&,
                                  const NuisanceOptions&, const TrialPropensity&);

 private:
  BasisSpec basis_;
  TrialPropensity e1_ = TrialPropensity::constant(0.5);
  std::optional<Vector> e0_coef_;
  std::optional<Vector> mu1_coef_;
  std::optional<Vector> mu0_coef_;
  double sigma2_1_ = 1.0;
  double sigma2_0_ = 1.0;
  VarianceModel variance_ = VarianceModel::StratumConstant;
  bool e0_separation_ = false;
};

/// e0 on the real-world records (skipped when that stratum is empty),
/// mu_delta per stratum with targets H at psi_prelim, and sigma^2_delta.
NuisanceFit fit_nuisance(const CombinedSample& sample, const HteModel& model, const Vector& psi_prelim,
                         const NuisanceOptions& options, const TrialPropensity& e1);

/// Feature matrix (rows = records in `rows`).
Matrix design_matrix(const CombinedSample& sample, const std::vector<std::size_t>& rows, const BasisSpec& spec);

}  // namespace elastic
