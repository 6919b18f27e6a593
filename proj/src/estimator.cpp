#include "elastic/estimator.hpp"

#include "elastic/errors.hpp"
#include "elastic/inference.hpp"
#include "elastic/mixture.hpp"
#include "elastic/random.hpp"

#include <omp.h>

#include <cmath>
#include <string>

namespace elastic {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Rt:
      return "rt";
    case Method::Eff:
      return "eff";
    case Method::Elastic:
      return "elastic";
    case Method::CovAdjRt:
      return "covadj_rt";
  }
  return "unknown";
}

std::vector<double> default_gamma_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 19; ++k) g.push_back(k / 20.0);
  return g;
}

SolveResult solve_z(const EquationFn& equation, const JacobianFn& jacobian, const Vector& init, double tol,
                    int max_iter) {
  SolveResult out;
  out.psi = init;
  Vector f = equation(out.psi);
  double norm = f.norm();
  if (!std::isfinite(norm)) throw ConvergenceFailure("estimating equation is not finite at the initial value", init);

  while (norm >= tol) {
    if (out.iterations >= max_iter) {
      throw ConvergenceFailure("Newton solver hit " + std::to_string(max_iter) + " iterations (|ee| = " +
                                   std::to_string(norm) + ")",
                               out.psi);
    }
    const Vector step = linalg::general_solve(jacobian(out.psi), -f);
    double t = 1.0;
    Vector cand = out.psi + step;
    Vector f_cand = equation(cand);
    double n_cand = f_cand.norm();
    for (int h = 0; h < 20 && !(n_cand < norm); ++h) {
      t *= 0.5;
      cand = out.psi + t * step;
      f_cand = equation(cand);
      n_cand = f_cand.norm();
    }
    ++out.iterations;
    if (!(n_cand < norm)) {
      throw ConvergenceFailure("Newton line search could not decrease |ee| = " + std::to_string(norm), out.psi);
    }
    out.psi = std::move(cand);
    f = std::move(f_cand);
    norm = n_cand;
  }
  out.converged = true;
  out.residual_norm = norm;
  return out;
}

namespace {

void require_trial_treatment_variation(const CombinedSample& sample) {
  const auto rows = sample.indices_of(Source::Trial);
  if (rows.empty()) throw PreconditionError("rt stratum empty: trial estimator undefined");
  const int first = sample[rows.front()].treatment;
  for (std::size_t i : rows) {
    if (sample[i].treatment != first) return;
  }
  throw SingularInformation("treatment is constant in the trial stratum; the effect is not identified");
}

Matrix sandwich(const ScoreContext& ctx, const Vector& psi, Stratum stratum) {
  const Matrix bread_inv = linalg::general_inverse(ee_jacobian(ctx, psi, stratum));
  return linalg::symmetrize(bread_inv * ee_outer(ctx, psi, stratum) * bread_inv.transpose());
}

EstimateResult solve_stratum(const ScoreContext& ctx, const Vector& init, Stratum stratum, Method method,
                             const EstimatorSpec& spec) {
  const SolveResult s = solve_z([&](const Vector& psi) { return ee_sum(ctx, psi, stratum); },
                                [&](const Vector& psi) { return ee_jacobian(ctx, psi, stratum); }, init, spec.tol,
                                spec.max_iter);
  EstimateResult r;
  r.psi = s.psi;
  r.method = method;
  r.iterations = s.iterations;
  r.converged = s.converged;
  r.variance = sandwich(ctx, r.psi, stratum);
  return r;
}

Vector preliminary_psi(const CombinedSample& sample, const HteModel& model, const TrialPropensity& e1,
                       const EstimatorSpec& spec) {
  const NuisanceFit working = NuisanceFit::preliminary(e1, spec.nuisance.basis);
  const ScoreContext ctx(model, working, sample);
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(model.p));
  return solve_z([&](const Vector& psi) { return ee_sum(ctx, psi, Stratum::trial_only()); },
                 [&](const Vector& psi) { return ee_jacobian(ctx, psi, Stratum::trial_only()); }, zero, spec.tol,
                 spec.max_iter)
      .psi;
}

}  // namespace

EstimateResult estimate_rt(const CombinedSample& sample, const HteModel& model, const TrialPropensity& e1,
                           const EstimatorSpec& spec) {
  require_trial_treatment_variation(sample);
  const Vector psi_p = preliminary_psi(sample, model, e1, spec);
  NuisanceOptions opts = spec.nuisance;
  opts.fit_real_world = false;
  const NuisanceFit nuisance = fit_nuisance(sample, model, psi_p, opts, e1);
  const ScoreContext ctx(model, nuisance, sample);
  return solve_stratum(ctx, psi_p, Stratum::trial_only(), Method::Rt, spec);
}

EstimateResult estimate_cov_adj_rt(const CombinedSample& sample, const HteModel& model, const TrialPropensity& e1) {
  if (model.kind != HteKind::Linear) throw InvalidArgument("covariate adjustment requires the linear HTE model");
  if (sample.dim_z() != model.p) throw InvalidArgument("model dimension does not match the effect modifiers");
  const auto rows = sample.indices_of(Source::Trial);
  if (rows.empty()) throw PreconditionError("rt stratum empty: covariate adjustment undefined");

  const auto p = static_cast<Eigen::Index>(model.p);
  Matrix x(static_cast<Eigen::Index>(rows.size()), p);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Record& r = sample[rows[i]];
    x.row(static_cast<Eigen::Index>(i)) = (r.treatment - e1(r)) * sample.z(rows[i]).transpose();
    y[static_cast<Eigen::Index>(i)] = r.outcome;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (x.rows() < p || qr.rank() < p) {
    throw ConvergenceFailure("covariate-adjustment design is rank deficient", Vector::Zero(p));
  }
  EstimateResult out;
  out.method = Method::CovAdjRt;
  out.psi = qr.solve(y);
  const Vector resid = y - x * out.psi;
  const Matrix bread = linalg::spd_inverse(x.transpose() * x);
  const Matrix meat = x.transpose() * resid.cwiseAbs2().asDiagonal() * x;
  out.variance = linalg::symmetrize(bread * meat * bread);
  out.converged = true;
  return out;
}

IntegrativeFit fit_integrative(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                               const TrialPropensity& e1) {
  if (sample.real_world_count() == 0) throw PreconditionError("rw stratum empty: integrative estimator undefined");
  require_trial_treatment_variation(sample);

  IntegrativeFit fit;
  fit.psi_prelim = preliminary_psi(sample, model, e1, spec);
  fit.nuisance = fit_nuisance(sample, model, fit.psi_prelim, spec.nuisance, e1);
  const ScoreContext ctx(model, fit.nuisance, sample);
  fit.rt = solve_stratum(ctx, fit.psi_prelim, Stratum::trial_only(), Method::Rt, spec);
  fit.eff = solve_stratum(ctx, fit.psi_prelim, Stratum::pooled(), Method::Eff, spec);
  fit.bundle = variance_bundle(ctx, fit.rt.psi);
  fit.gate = test_statistic(ctx, fit.rt.psi, fit.bundle);
  fit.rt.bundle = fit.bundle;
  fit.eff.bundle = fit.bundle;
  return fit;
}

EstimateResult estimate_eff(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                            const TrialPropensity& e1) {
  if (sample.real_world_count() == 0) throw PreconditionError("rw stratum empty: pooled estimator undefined");
  require_trial_treatment_variation(sample);
  const Vector psi_p = preliminary_psi(sample, model, e1, spec);
  const NuisanceFit nuisance = fit_nuisance(sample, model, psi_p, spec.nuisance, e1);
  const ScoreContext ctx(model, nuisance, sample);
  return solve_stratum(ctx, psi_p, Stratum::pooled(), Method::Eff, spec);
}

EstimateResult elastic_from_fit(const IntegrativeFit& fit, const EstimatorSpec& spec) {
  GateResult gate = fit.gate;
  double gamma = 0.0;
  if (spec.gamma) {
    gamma = *spec.gamma;
  } else {
    gamma = select_gamma(fit.bundle, gate.eta_hat, spec.gamma_grid.empty() ? default_gamma_grid() : spec.gamma_grid);
  }
  gate = apply_gamma(std::move(gate), gamma);

  const EstimateResult& chosen = gate.accepted ? fit.eff : fit.rt;
  EstimateResult out;
  out.psi = chosen.psi;
  out.method = Method::Elastic;
  out.iterations = chosen.iterations;
  out.converged = chosen.converged;
  const MixtureMoments mom = analytic_bias_mse(make_mixture_spec(fit.bundle, gamma, gate.eta_hat));
  out.variance = mom.mse / static_cast<double>(fit.bundle.real_world_count);
  out.gate = std::move(gate);
  out.bundle = fit.bundle;
  return out;
}

EstimateResult estimate_elastic(const CombinedSample& sample, const HteModel& model, const EstimatorSpec& spec,
                                const TrialPropensity& e1) {
  if (spec.gamma && !(*spec.gamma > 0.0 && *spec.gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  return elastic_from_fit(fit_integrative(sample, model, spec, e1), spec);
}

EstimateResult run_estimator(const CombinedSample& sample, const HteModel& model, Method method,
                             const EstimatorSpec& spec, const TrialPropensity& e1) {
  switch (method) {
    case Method::Rt:
      return estimate_rt(sample, model, e1, spec);
    case Method::Eff:
      return estimate_eff(sample, model, spec, e1);
    case Method::Elastic:
      return estimate_elastic(sample, model, spec, e1);
    case Method::CovAdjRt:
      return estimate_cov_adj_rt(sample, model, e1);
  }
  throw InvalidArgument("unknown method");
}

namespace {

CombinedSample resample_stratified(const CombinedSample& sample, Rng& rng) {
  std::vector<Record> out;
  out.reserve(sample.size());
  for (Source s : {Source::Trial, Source::RealWorld}) {
    const auto rows = sample.indices_of(s);
    if (rows.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    for (std::size_t k = 0; k < rows.size(); ++k) out.push_back(sample[rows[pick(rng)]]);
  }
  return CombinedSample(std::move(out), sample.z_index());
}

struct ReplicateSlot {
  Vector psi;
  bool ok = false;
};

ReplicateSlot bootstrap_replicate(const CombinedSample& sample, const HteModel& model, Method method,
                                  const BootstrapOptions& options, const EstimatorSpec& spec,
                                  const TrialPropensity& e1, std::size_t b) {
  ReplicateSlot slot;
  try {
    Rng rng = make_rng(options.seed, {b});
    const CombinedSample boot = resample_stratified(sample, rng);
    slot.psi = run_estimator(boot, model, method, spec, e1).psi;
    slot.ok = slot.psi.allFinite();
  } catch (const Error&) {
    slot.ok = false;
  }
  return slot;
}

void check_bootstrap_request(Method method, const BootstrapOptions& options) {
  if (method == Method::Elastic) {
    throw UnsupportedMethod(
        "bootstrap is inconsistent for the elastic estimator (non-regular pre-test limit); use the elastic CI");
  }
  if (options.replicates < 2) throw InvalidArgument("bootstrap needs at least 2 replicates");
}

BootstrapResult summarize(const std::vector<ReplicateSlot>& slots, std::size_t p) {
  BootstrapResult out;
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(p));
  for (const auto& s : slots) {
    if (!s.ok) {
      ++out.failures;
      continue;
    }
    ++out.successes;
    mean += s.psi;
  }
  if (out.successes < 2) {
    throw DegenerateCase("fewer than 2 bootstrap replicates succeeded (" + std::to_string(out.failures) +
                         " failed)");
  }
  mean /= static_cast<double>(out.successes);
  out.variance = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (const auto& s : slots) {
    if (!s.ok) continue;
    const Vector d = s.psi - mean;
    out.variance.noalias() += d * d.transpose();
  }
  out.variance /= static_cast<double>(out.successes - 1);
  return out;
}

}  // namespace

BootstrapResult bootstrap_variance(const CombinedSample& sample, const HteModel& model, Method method,
                                   const BootstrapOptions& options, const EstimatorSpec& spec,
                                   const TrialPropensity& e1) {
  check_bootstrap_request(method, options);
  std::vector<ReplicateSlot> slots(options.replicates);
  const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
  const auto count = static_cast<long>(options.replicates);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long b = 0; b < count; ++b) {
    slots[static_cast<std::size_t>(b)] =
        bootstrap_replicate(sample, model, method, options, spec, e1, static_cast<std::size_t>(b));
  }
  return summarize(slots, model.p);
}

BootstrapResult bootstrap_variance_serial(const CombinedSample& sample, const HteModel& model, Method method,
                                          const BootstrapOptions& options, const EstimatorSpec& spec,
                                          const TrialPropensity& e1) {
  check_bootstrap_request(method, options);
  std::vector<ReplicateSlot> slots(options.replicates);
  for (std::size_t b = 0; b < options.replicates; ++b) {
    slots[b] = bootstrap_replicate(sample, model, method, options, spec, e1, b);
  }
  return summarize(slots, model.p);
}

}  // namespace elastic
