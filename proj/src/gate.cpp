#include "elastic/gate.hpp"

#include "elastic/errors.hpp"
#include "elastic/special_functions.hpp"

#include <algorithm>
#include <cmath>

namespace elastic {

double quadratic_statistic(const Vector& eta_hat, const Matrix& sigma_ss) {
  if (eta_hat.size() != sigma_ss.rows() || sigma_ss.rows() != sigma_ss.cols()) {
    throw InvalidArgument("gate: eta and Sigma_SS dimensions differ");
  }
  Vector solved;
  try {
    solved = linalg::spd_solve(linalg::symmetrize(sigma_ss), eta_hat);
  } catch (const SingularInformation&) {
    throw SingularInformation("Sigma_SS is numerically singular; gate statistic undefined");
  }
  return std::max(0.0, eta_hat.dot(solved));
}

GateResult test_statistic(const ScoreContext& ctx, const Vector& psi_rt, const VarianceBundle& bundle) {
  const std::size_t n = ctx.sample().real_world_count();
  if (n == 0) throw PreconditionError("rw stratum empty: gate statistic undefined");
  GateResult g;
  g.eta_hat = ee_sum(ctx, psi_rt, Stratum::real_world_only()) / std::sqrt(static_cast<double>(n));
  g.sigma_ss_hat = bundle.sigma_ss;
  g.t_stat = quadratic_statistic(g.eta_hat, g.sigma_ss_hat);
  g.p_value = std::clamp(1.0 - chi2_cdf(g.t_stat, static_cast<double>(g.eta_hat.size())), 0.0, 1.0);
  return g;
}

double threshold(std::size_t p, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  if (p == 0) throw InvalidArgument("gate dimension must be >= 1");
  return chi2_quantile(1.0 - gamma, static_cast<double>(p));
}

bool decide(double t_stat, double c_gamma) { return t_stat < c_gamma; }

GateResult apply_gamma(GateResult gate, double gamma) {
  gate.gamma = gamma;
  gate.c_gamma = threshold(static_cast<std::size_t>(gate.eta_hat.size()), gamma);
  gate.accepted = decide(gate.t_stat, gate.c_gamma);
  return gate;
}

}  // namespace elastic
