#include "elastic/score.hpp"

#include "elastic/errors.hpp"

#include <cmath>
#include <limits>

namespace elastic {

ScoreContext::ScoreContext(const HteModel& model, const NuisanceFit& nuisance, const CombinedSample& sample)
    : model_(&model), nuisance_(&nuisance), sample_(&sample) {
  if (sample.dim_z() != model.p) {
    throw InvalidArgument("model dimension does not match the sample's effect modifiers");
  }
  const std::size_t n = sample.size();
  e_.resize(n);
  mu_.resize(n);
  sigma2_.resize(n);
  const bool has_e0 = nuisance.e0_coef().has_value();
  for (std::size_t i = 0; i < n; ++i) {
    const Record& r = sample[i];
    e_[i] = (r.is_trial() || has_e0) ? nuisance.propensity(r) : std::numeric_limits<double>::quiet_NaN();
    mu_[i] = nuisance.outcome_mean(r);
    sigma2_[i] = nuisance.outcome_variance(r);
  }
}

Vector ses(const ScoreContext& ctx, const Vector& psi, std::size_t i) {
  const Record& r = ctx.sample()[i];
  const auto z = ctx.sample().z(i);
  const double h = h_residual(ctx.model(), psi, r, z);
  const double factor = (h - ctx.outcome_mean(i)) * (r.treatment - ctx.propensity(i)) / ctx.outcome_variance(i);
  return tau_grad(ctx.model(), psi, z) * factor;
}

Vector ee_sum(const ScoreContext& ctx, const Vector& psi, Stratum stratum) {
  Vector total = Vector::Zero(static_cast<Eigen::Index>(ctx.model().p));
  const CombinedSample& s = ctx.sample();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (stratum.includes(s[i].source)) total += ses(ctx, psi, i);
  }
  return total;
}

Matrix ee_jacobian(const ScoreContext& ctx, const Vector& psi, Stratum stratum) {
  const auto p = static_cast<Eigen::Index>(ctx.model().p);
  Matrix jac = Matrix::Zero(p, p);
  const CombinedSample& s = ctx.sample();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Record& r = s[i];
    if (!stratum.includes(r.source)) continue;
    const auto z = s.z(i);
    const double resid_a = (r.treatment - ctx.propensity(i)) / ctx.outcome_variance(i);
    if (resid_a == 0.0) continue;
    // d/dpsi [grad tau * (H - mu)] = curvature * z z^T * (H - mu) - A * grad tau grad tau^T
    const Vector g = tau_grad(ctx.model(), psi, z);
    jac.noalias() -= (resid_a * r.treatment) * g * g.transpose();
    const double curv = tau_curvature(ctx.model(), psi, z);
    if (curv != 0.0) {
      const double h = h_residual(ctx.model(), psi, r, z) - ctx.outcome_mean(i);
      jac.noalias() += (resid_a * curv * h) * z * z.transpose();
    }
  }
  return jac;
}

Matrix ee_outer(const ScoreContext& ctx, const Vector& psi, Stratum stratum) {
  const auto p = static_cast<Eigen::Index>(ctx.model().p);
  Matrix out = Matrix::Zero(p, p);
  const CombinedSample& s = ctx.sample();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!stratum.includes(s[i].source)) continue;
    const Vector v = ses(ctx, psi, i);
    out.noalias() += v * v.transpose();
  }
  return linalg::symmetrize(out);
}

VarianceBundle make_variance_bundle(const Matrix& i_rt, const Matrix& i_rw, double rho, std::size_t trial_count,
                                    std::size_t real_world_count) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive and finite");
  if (i_rt.rows() != i_rt.cols() || i_rw.rows() != i_rw.cols() || i_rt.rows() != i_rw.rows()) {
    throw InvalidArgument("information matrices must be square and of equal size");
  }
  VarianceBundle b;
  b.i_rt = linalg::symmetrize(i_rt);
  b.i_rw = linalg::symmetrize(i_rw);
  b.rho = rho;
  b.trial_count = trial_count;
  b.real_world_count = real_world_count;

  const Matrix i_rt_inv = linalg::spd_inverse(b.i_rt);  // throws on a singular trial information
  b.gamma_mat = i_rt_inv * b.i_rw / std::sqrt(rho);
  b.sigma_ss = linalg::symmetrize(b.gamma_mat.transpose() * b.i_rt * b.gamma_mat + b.i_rw);
  b.v_rt = linalg::symmetrize(i_rt_inv / rho);
  b.v_eff = linalg::spd_inverse(rho * b.i_rt + b.i_rw);
  b.v_rt_minus_eff = linalg::symmetrize(b.v_rt - b.v_eff);
  return b;
}

VarianceBundle variance_bundle(const ScoreContext& ctx, const Vector& psi_hat) {
  const CombinedSample& s = ctx.sample();
  const std::size_t m = s.trial_count();
  const std::size_t n = s.real_world_count();
  if (m == 0) throw PreconditionError("rt stratum empty: trial information undefined");
  if (n == 0) throw PreconditionError("rw stratum empty: real-world information undefined");
  const Matrix i_rt = ee_outer(ctx, psi_hat, Stratum::trial_only()) / static_cast<double>(m);
  const Matrix i_rw = ee_outer(ctx, psi_hat, Stratum::real_world_only()) / static_cast<double>(n);
  try {
    return make_variance_bundle(i_rt, i_rw, s.rho(), m, n);
  } catch (const SingularInformation&) {
    throw SingularInformation("trial information matrix is singular (trial too small or Z degenerate)");
  }
}

}  // namespace elastic
