#pragma once

#include "elastic/linalg.hpp"
#include "elastic/score.hpp"

namespace elastic {

struct GateResult {
  double t_stat = 0.0;
  Vector eta_hat;
  Matrix sigma_ss_hat;
  double gamma = 0.0;
  double c_gamma = 0.0;
  bool accepted = false;
  double p_value = 1.0;
};

/// eta_hat = n^{-1/2} sum_{delta=0} ses(psi_rt) and T = eta_hat^T Sigma_SS^{-1} eta_hat.
/// Only t_stat, eta_hat, sigma_ss_hat and p_value are filled in.
GateResult test_statistic(const ScoreContext& ctx, const Vector& psi_rt, const VarianceBundle& bundle);

/// T from a given eta_hat and Sigma_SS (Cholesky solve).
double quadratic_statistic(const Vector& eta_hat, const Matrix& sigma_ss);

/// c_gamma: the (1 - gamma) quantile of chi^2_p.
double threshold(std::size_t p, double gamma);

/// Strict: accepted iff t_stat < c_gamma.
bool decide(double t_stat, double c_gamma);

/// Completes a GateResult for a particular gamma.
GateResult apply_gamma(GateResult gate, double gamma);

}  // namespace elastic
