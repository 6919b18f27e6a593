#pragma once

#include "elastic/linalg.hpp"
#include "elastic/score.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace elastic {

/// Limiting law M(gamma; eta) of n^{1/2}(psi_elas - psi0):
///
///   W = V_eff^{1/2} Z2 - 1(|Z1|^2 >= c_gamma) L Z1,
///   Z1 ~ N(mu1, I), mu1 = Sigma_SS^{-1/2} eta,
///   Z2 ~ N(mu2, I), mu2 = V_eff^{1/2} eta,   L = V_eff Sigma_SS^{1/2},
///
/// so that L L^T = V_rt - V_eff and L mu1 = V_eff eta. The truncated branch
/// has probability xi = 1 - F_p(c_gamma; lambda), lambda = eta^T Sigma_SS^{-1} eta.
struct MixtureSpec {
  Matrix v_rt;
  Matrix v_eff;
  Matrix v_rt_minus_eff;
  Matrix sigma_ss;
  double gamma = 0.5;
  Vector eta;

  Matrix sqrt_v_eff;
  Matrix sqrt_v_rt_minus_eff;
  Matrix inv_sqrt_sigma_ss;
  Matrix loading;  // L

  double c_gamma = 0.0;  // +inf at gamma = 0, 0 at gamma = 1
  double lambda = 0.0;
  double xi = 1.0;
  Vector mu1;
  Vector mu2;

  std::size_t p() const noexcept { return static_cast<std::size_t>(eta.size()); }
};

/// gamma in [0, 1]; the endpoints give the pure-eff (0) and pure-rt (1) laws.
MixtureSpec make_mixture_spec(const VarianceBundle& bundle, double gamma, const Vector& eta);

struct TruncatedDraws {
  Matrix draws;  // count x p
  std::size_t proposals = 0;
  double acceptance_rate = 1.0;
};

/// Rejection sampler for N(mu1, I) conditioned on |z|^2 >= c. Throws
/// InfeasibleTruncation when the acceptance probability 1 - F_p(c; |mu1|^2)
/// is below 1e-6.
TruncatedDraws sample_truncated(const Vector& mu1, double c, std::size_t count, std::uint64_t seed);

struct MixtureDraws {
  Matrix draws;                               // M x p
  std::vector<std::uint8_t> component_flags;  // 1 = truncated branch
  std::uint64_t seed = 0;
  std::size_t proposals = 0;  // rejection proposals spent on the truncated branch

  double branch_fraction() const;
};

/// Branch-wise sampler: Bernoulli(xi) picks the truncated branch, whose Z1
/// comes from the rejection sampler. Draws are produced in fixed-size chunks
/// with per-chunk RNG streams, so the result does not depend on threads.
MixtureDraws sample_mixture(const MixtureSpec& spec, std::size_t count, std::uint64_t seed, int threads = 0);
MixtureDraws sample_mixture_serial(const MixtureSpec& spec, std::size_t count, std::uint64_t seed);

/// Base normals shared across spec variations (common random numbers).
struct CrnBase {
  Matrix n1;  // M x p
  Matrix n2;  // M x p
  std::uint64_t seed = 0;
};

CrnBase make_crn_base(std::size_t p, std::size_t count, std::uint64_t seed);

/// Joint representation with Z1 = mu1 + N1, Z2 = mu2 + N2 from the shared
/// base; no rejection needed, and draws move smoothly with (gamma, eta).
MixtureDraws sample_mixture_crn(const MixtureSpec& spec, const CrnBase& base);

struct MixtureMoments {
  Vector bias;
  Matrix mse;
};

/// bias = V_eff eta F_{p+2}(c; lambda),
/// mse  = V_eff + V_rt-eff {1 - F_{p+2}(c; lambda)}
///        + V_eff eta eta^T V_eff {2 F_{p+2}(c; lambda) - F_{p+4}(c; lambda)}.
MixtureMoments analytic_bias_mse(const MixtureSpec& spec);

/// Type-7 empirical quantile of a column.
double mixture_quantile(const MixtureDraws& draws, std::size_t coordinate, double prob);

/// Type-7 quantiles of a sample, computed with selection on a scratch copy.
std::vector<double> type7_quantiles(std::vector<double> values, const std::vector<double>& probs);

}  // namespace elastic
