#include "elastic/inference.hpp"

#include "elastic/errors.hpp"
#include "elastic/mixture.hpp"
#include "elastic/random.hpp"
#include "elastic/special_functions.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace elastic {

std::string_view to_string(CiBranch b) {
  return b == CiBranch::LocalAlternative ? "local_alternative" : "fixed_alternative";
}

namespace {

// Signed quantity stored as (sign, log|value|).
struct SignedLog {
  int sign = 0;
  double log_abs = -std::numeric_limits<double>::infinity();
};

bool less(const SignedLog& a, const SignedLog& b) {
  if (a.sign != b.sign) return a.sign < b.sign;
  if (a.sign == 0) return false;
  return a.sign > 0 ? a.log_abs < b.log_abs : a.log_abs > b.log_abs;
}

// tr mse(gamma) - tr V_rt = F2 {(2s - t) - s F4/F2}, with t = tr V_rt-eff
// and s = eta^T V_eff^2 eta.
SignedLog trace_excess(double c, double p, double lambda, double t, double s) {
  const double lf2 = log_noncentral_chi2_cdf(c, p + 2.0, lambda);
  const double lf4 = log_noncentral_chi2_cdf(c, p + 4.0, lambda);
  if (!std::isfinite(lf2)) return {};
  const double ratio = std::isfinite(lf4) ? std::exp(std::min(0.0, lf4 - lf2)) : 0.0;
  const double bracket = (2.0 * s - t) - s * ratio;
  if (bracket == 0.0) return {};
  return {bracket > 0 ? 1 : -1, lf2 + std::log(std::abs(bracket))};
}

}  // namespace

double select_gamma(const VarianceBundle& bundle, const Vector& eta_hat, const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidArgument("gamma grid is empty");
  for (double g : grid) {
    if (!(g > 0.0 && g < 1.0)) throw InvalidArgument("gamma grid values must lie in (0, 1)");
  }
  if (static_cast<std::size_t>(eta_hat.size()) != bundle.p()) throw InvalidArgument("eta dimension mismatch");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  const auto p = static_cast<double>(bundle.p());
  const double lambda = linalg::inverse_quadratic_form(bundle.sigma_ss, eta_hat);
  const double t = bundle.v_rt_minus_eff.trace();
  const double s = (bundle.v_eff * eta_hat).squaredNorm();

  double best_gamma = sorted.front();
  SignedLog best = trace_excess(chi2_quantile(1.0 - best_gamma, p), p, lambda, t, s);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const SignedLog v = trace_excess(chi2_quantile(1.0 - sorted[i], p), p, lambda, t, s);
    if (less(v, best)) {
      best = v;
      best_gamma = sorted[i];
    }
  }
  return best_gamma;
}

namespace {

struct EtaBounds {
  Vector lo;
  Vector hi;
};

EtaBounds quantile_bounds(const MixtureSpec& spec, const CrnBase& base, double a_lo, double a_hi) {
  const MixtureDraws d = sample_mixture_crn(spec, base);
  const auto p = static_cast<Eigen::Index>(spec.p());
  EtaBounds b{Vector(p), Vector(p)};
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto col = d.draws.col(k);
    const auto q = type7_quantiles(std::vector<double>(col.data(), col.data() + col.size()), {a_lo, a_hi});
    b.lo[k] = q[0];
    b.hi[k] = q[1];
  }
  return b;
}

// eta_hat followed by L - 1 points uniform in
// {eta : (eta - eta_hat)^T Sigma^{-1} (eta - eta_hat) <= r2}.
std::vector<Vector> eta_search_points(const Vector& eta_hat, const Matrix& sigma_ss, double r2, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<Vector> pts;
  pts.reserve(count);
  pts.push_back(eta_hat);
  const Matrix root = linalg::sym_sqrt(sigma_ss);
  const auto p = eta_hat.size();
  Rng rng = make_rng(seed, {11});
  NormalSource normal(rng);
  const double r = std::sqrt(r2);
  for (std::size_t i = 1; i < count; ++i) {
    Vector dir(p);
    double norm = 0.0;
    do {
      for (Eigen::Index k = 0; k < p; ++k) dir[k] = normal();
      norm = dir.norm();
    } while (norm == 0.0);
    const double radius = r * std::pow(uniform01(rng), 1.0 / static_cast<double>(p));
    pts.push_back(eta_hat + root * (dir * (radius / norm)));
  }
  return pts;
}

ElasticCi elastic_ci_impl(const VarianceBundle& bundle, const GateResult& gate, const Vector& psi_elas,
                          const ElasticCiOptions& opt, bool parallel) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (opt.eta_points < 2) throw InvalidArgument("elastic CI needs at least 2 eta search points");
  if (opt.draws < 2) throw InvalidArgument("elastic CI needs at least 2 mixture draws");
  if (!(gate.gamma > 0.0 && gate.gamma < 1.0)) throw InvalidArgument("gate gamma must be set in (0, 1)");
  const auto p = static_cast<Eigen::Index>(bundle.p());
  if (psi_elas.size() != p || gate.eta_hat.size() != p) throw InvalidArgument("elastic CI dimension mismatch");
  const std::size_t n = bundle.real_world_count;
  if (n < 2) throw PreconditionError("elastic CI needs a real-world sample size >= 2");
  const double root_n = std::sqrt(static_cast<double>(n));

  ElasticCi ci;
  ci.alpha = opt.alpha;
  ci.kappa_n = std::sqrt(std::log(static_cast<double>(n)));
  ci.lower.resize(p);
  ci.upper.resize(p);

  if (gate.t_stat > ci.kappa_n) {
    ci.branch = CiBranch::FixedAlternative;
    const double z = normal_quantile(1.0 - 0.5 * opt.alpha);
    for (Eigen::Index k = 0; k < p; ++k) {
      const double half = z * std::sqrt(std::max(0.0, bundle.v_rt(k, k)) / static_cast<double>(n));
      ci.lower[k] = psi_elas[k] - half;
      ci.upper[k] = psi_elas[k] + half;
    }
    ci.plugin_lower = ci.lower;
    ci.plugin_upper = ci.upper;
    return ci;
  }

  ci.branch = CiBranch::LocalAlternative;
  const double alpha_t = 1.0 - std::sqrt(1.0 - opt.alpha);
  const double r2 = chi2_quantile(1.0 - alpha_t, static_cast<double>(p));
  const std::vector<Vector> etas = eta_search_points(gate.eta_hat, bundle.sigma_ss, r2, opt.eta_points, opt.seed);
  const CrnBase base = make_crn_base(static_cast<std::size_t>(p), opt.draws, derive_seed(opt.seed, {12}));

  std::vector<EtaBounds> bounds(etas.size());
  const auto run = [&](std::size_t j) {
    bounds[j] = quantile_bounds(make_mixture_spec(bundle, gate.gamma, etas[j]), base, 0.5 * alpha_t,
                                1.0 - 0.5 * alpha_t);
  };
  if (parallel) {
    const int nt = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (long j = 0; j < static_cast<long>(etas.size()); ++j) run(static_cast<std::size_t>(j));
  } else {
    for (std::size_t j = 0; j < etas.size(); ++j) run(j);
  }

  Vector q_lo = bounds.front().lo;
  Vector q_hi = bounds.front().hi;
  for (const auto& b : bounds) {
    q_lo = q_lo.cwiseMin(b.lo);
    q_hi = q_hi.cwiseMax(b.hi);
  }
  // W ~ n^{1/2}(psi_hat - psi0), so psi0 lies in [psi_hat - q_hi/sqrt n, psi_hat - q_lo/sqrt n].
  ci.lower = psi_elas - q_hi / root_n;
  ci.upper = psi_elas - q_lo / root_n;
  ci.plugin_lower = psi_elas - bounds.front().hi / root_n;
  ci.plugin_upper = psi_elas - bounds.front().lo / root_n;
  return ci;
}

}  // namespace

ElasticCi elastic_ci(const VarianceBundle& bundle, const GateResult& gate, const Vector& psi_elas,
                     const ElasticCiOptions& options) {
  return elastic_ci_impl(bundle, gate, psi_elas, options, true);
}

ElasticCi elastic_ci_serial(const VarianceBundle& bundle, const GateResult& gate, const Vector& psi_elas,
                            const ElasticCiOptions& options) {
  return elastic_ci_impl(bundle, gate, psi_elas, options, false);
}

}  // namespace elastic
