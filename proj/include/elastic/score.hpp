#pragma once

#include "elastic/linalg.hpp"
#include "elastic/model.hpp"
#include "elastic/nuisance.hpp"

#include <cstddef>
#include <vector>

namespace elastic {

/// Which records enter an estimating-equation sum.
class Stratum {
 public:
  static constexpr Stratum trial_only() { return Stratum(true, false); }
  static constexpr Stratum real_world_only() { return Stratum(false, true); }
  static constexpr Stratum pooled() { return Stratum(true, true); }
  /// The elastic equation: trial records always, real-world records only
  /// when the gate accepted them.
  static constexpr Stratum elastic(bool gate_accepted) { return Stratum(true, gate_accepted); }

  constexpr bool includes(Source s) const noexcept { return s == Source::Trial ? trial_ : real_world_; }
  constexpr bool operator==(const Stratum&) const = default;

 private:
  constexpr Stratum(bool trial, bool rw) : trial_(trial), real_world_(rw) {}
  bool trial_;
  bool real_world_;
};

/// Model, fitted nuisances and sample bound together, with per-record
/// nuisance values evaluated once. Borrowed references must outlive the
/// context. Without a fitted e0 the real-world propensities are NaN, so only
/// trial-only sums are meaningful.
class ScoreContext {
 public:
  ScoreContext(const HteModel& model, const NuisanceFit& nuisance, const CombinedSample& sample);

  const HteModel& model() const noexcept { return *model_; }
  const NuisanceFit& nuisance() const noexcept { return *nuisance_; }
  const CombinedSample& sample() const noexcept { return *sample_; }

  double propensity(std::size_t i) const { return e_[i]; }
  double outcome_mean(std::size_t i) const { return mu_[i]; }
  double outcome_variance(std::size_t i) const { return sigma2_[i]; }

 private:
  const HteModel* model_;
  const NuisanceFit* nuisance_;
  const CombinedSample* sample_;
  std::vector<double> e_;
  std::vector<double> mu_;
  std::vector<double> sigma2_;
};

/// S_psi(V_i) = q*(X, delta) {H_psi - mu_delta(X)} {A - e_delta(X)} with
/// q* = (d tau / d psi) / sigma^2_delta(X).
Vector ses(const ScoreContext& ctx, const Vector& psi, std::size_t record);

/// Sum of ses over the records selected by the stratum.
Vector ee_sum(const ScoreContext& ctx, const Vector& psi, Stratum stratum);

/// d ee_sum / d psi (nuisances held fixed).
Matrix ee_jacobian(const ScoreContext& ctx, const Vector& psi, Stratum stratum);

/// sum ses ses^T over the stratum (sandwich meat).
Matrix ee_outer(const ScoreContext& ctx, const Vector& psi, Stratum stratum);

/// Information and variance matrices on the sqrt(n) scale (n = real-world
/// size), evaluated at the trial-only estimate.
struct VarianceBundle {
  Matrix i_rt;
  Matrix i_rw;
  Matrix sigma_ss;
  Matrix gamma_mat;
  Matrix v_rt;
  Matrix v_eff;
  Matrix v_rt_minus_eff;
  double rho = 0.0;
  std::size_t trial_count = 0;
  std::size_t real_world_count = 0;

  std::size_t p() const noexcept { return static_cast<std::size_t>(i_rt.rows()); }
};

/// Bundle from already-estimated information matrices (used by the mixture
/// tooling and by tests).
VarianceBundle make_variance_bundle(const Matrix& i_rt, const Matrix& i_rw, double rho,
                                    std::size_t trial_count = 0, std::size_t real_world_count = 0);

/// I_rt = m^-1 sum_{delta=1} S S^T, I_rw = n^-1 sum_{delta=0} S S^T at
/// psi_hat, then Gamma, Sigma_SS, V_rt, V_eff and their difference.
VarianceBundle variance_bundle(const ScoreContext& ctx, const Vector& psi_hat);

}  // namespace elastic
