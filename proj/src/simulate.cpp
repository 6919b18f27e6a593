#include "elastic/simulate.hpp"

#include "elastic/errors.hpp"
#include "elastic/random.hpp"
#include "elastic/special_functions.hpp"

#include <omp.h>

#include <cmath>
#include <numeric>

namespace elastic {

namespace {

double expit(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

double linear4(const std::array<double, 4>& c, double x1, double x2, double x3) {
  return c[0] + c[1] * x1 + c[2] * x2 + c[3] * x3;
}

}  // namespace

void DgpConfig::validate() const {
  if (population_size < rw_sample_size) throw InvalidArgument("population_size must be >= rw_sample_size");
  if (!std::isfinite(b)) throw InvalidArgument("confounding strength b must be finite");
  if (psi_true.size() != 3) throw InvalidArgument("psi_true must have 3 entries (Z = (1, X1, X2))");
  if (!(e1_value > 0.0 && e1_value < 1.0)) throw InvalidArgument("e1 must lie in (0, 1)");
  if (max_retries < 1) throw InvalidArgument("max_retries must be >= 1");
}

std::string_view to_string(StudyEstimator e) {
  switch (e) {
    case StudyEstimator::Rt:
      return "rt";
    case StudyEstimator::Eff:
      return "eff";
    case StudyEstimator::Elastic:
      return "elastic";
  }
  return "unknown";
}

CombinedSample generate_replication(const DgpConfig& cfg, std::uint64_t rep_index) {
  cfg.validate();
  const std::size_t big_n = cfg.population_size;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Rng rng = make_rng(cfg.seed, {cfg.b_index, rep_index, static_cast<std::uint64_t>(attempt)});
    NormalSource normal(rng);

    std::vector<double> x1(big_n), x2(big_n), x3(big_n);
    for (std::size_t i = 0; i < big_n; ++i) {
      x1[i] = normal();
      x2[i] = normal();
      x3[i] = normal();
    }
    std::vector<std::size_t> trial;
    for (std::size_t i = 0; i < big_n; ++i) {
      if (uniform01(rng) < expit(linear4(cfg.selection_coefs, x1[i], x2[i], x3[i]))) trial.push_back(i);
    }
    // Partial Fisher-Yates: the first rw_sample_size slots form a simple
    // random sample without replacement.
    std::vector<std::size_t> perm(big_n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < cfg.rw_sample_size; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, big_n - 1);
      std::swap(perm[k], perm[pick(rng)]);
    }
    if (trial.empty()) continue;

    const auto dim = cfg.omit_x3 ? 3 : 4;
    std::vector<Record> records;
    records.reserve(trial.size() + cfg.rw_sample_size);
    const auto emit = [&](std::size_t i, Source src, int a) {
      Record r;
      r.source = src;
      r.treatment = a;
      const double tau = cfg.psi_true[0] + cfg.psi_true[1] * x1[i] + cfg.psi_true[2] * x2[i];
      r.outcome = x1[i] + cfg.b * x3[i] + a * tau + normal();
      r.covariates.resize(dim);
      r.covariates << 1.0, x1[i], x2[i];
      if (!cfg.omit_x3) r.covariates[3] = x3[i];
      if (src == Source::Trial) r.trial_propensity = cfg.e1_value;
      records.push_back(std::move(r));
    };
    for (std::size_t i : trial) emit(i, Source::Trial, uniform01(rng) < cfg.e1_value ? 1 : 0);
    for (std::size_t k = 0; k < cfg.rw_sample_size; ++k) {
      const std::size_t i = perm[k];
      emit(i, Source::RealWorld, uniform01(rng) < expit(linear4(cfg.e0_logit_coefs, x1[i], x2[i], x3[i])) ? 1 : 0);
    }
    return CombinedSample(std::move(records), dgp_effect_modifiers());
  }
  throw PreconditionError("no trial records selected after " + std::to_string(cfg.max_retries) + " attempts");
}

ReplicationRecord run_replication(const StudyConfig& cfg, std::size_t b_index, std::size_t rep) {
  ReplicationRecord rec;
  rec.b_index = b_index;
  rec.rep = rep;
  try {
    DgpConfig dgp = cfg.dgp;
    dgp.b = cfg.b_grid.at(b_index);
    dgp.b_index = b_index;
    dgp.seed = cfg.seed;
    const CombinedSample sample = generate_replication(dgp, rep);
    rec.trial_size = sample.trial_count();
    const HteModel model(HteKind::Linear, 3);
    const TrialPropensity e1 = TrialPropensity::constant(dgp.e1_value);
    const double z = normal_quantile(1.0 - 0.5 * cfg.alpha);
    const std::uint64_t cell_seed = derive_seed(cfg.seed, {b_index, rep, 0xB007});

    const auto wald = [&](std::size_t slot, const Vector& psi, Method method) {
      rec.estimate[slot] = psi;
      BootstrapOptions bo;
      bo.replicates = cfg.bootstrap_reps;
      bo.seed = derive_seed(cell_seed, {static_cast<std::uint64_t>(method)});
      bo.threads = 1;
      const Vector sd = bootstrap_variance_serial(sample, model, method, bo, cfg.spec, e1)
                            .variance.diagonal()
                            .cwiseMax(0.0)
                            .cwiseSqrt();
      rec.ci_lower[slot] = psi - z * sd;
      rec.ci_upper[slot] = psi + z * sd;
    };

    const EstimateResult covadj = estimate_cov_adj_rt(sample, model, e1);
    wald(0, covadj.psi, Method::CovAdjRt);

    const IntegrativeFit fit = fit_integrative(sample, model, cfg.spec, e1);
    wald(1, fit.eff.psi, Method::Eff);

    const EstimateResult elas = elastic_from_fit(fit, cfg.spec);
    rec.estimate[2] = elas.psi;
    rec.gamma = elas.gate->gamma;
    rec.t_stat = elas.gate->t_stat;
    rec.accepted = elas.gate->accepted;
    ElasticCiOptions co;
    co.alpha = cfg.alpha;
    co.draws = cfg.ci_draws;
    co.eta_points = cfg.ci_eta_points;
    co.seed = derive_seed(cell_seed, {0xC1});
    co.threads = 1;
    const ElasticCi ci = elastic_ci_serial(*elas.bundle, *elas.gate, elas.psi, co);
    rec.ci_lower[2] = ci.lower;
    rec.ci_upper[2] = ci.upper;
    rec.ci_branch = ci.branch;
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

StudyResult aggregate_study(const StudyConfig& cfg, std::vector<ReplicationRecord> records) {
  if (records.size() != cfg.reps * cfg.b_grid.size()) {
    throw InvalidArgument("study has " + std::to_string(records.size()) + " records, expected " +
                          std::to_string(cfg.reps * cfg.b_grid.size()));
  }
  for (const auto& r : records) {
    if (r.b_index >= cfg.b_grid.size()) throw InvalidArgument("replication record b index out of range");
  }
  StudyResult res;
  res.psi_true = cfg.dgp.psi_true;
  const auto p = cfg.dgp.psi_true.size();
  std::size_t failures = 0;
  for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
    StudySummary s;
    s.b = cfg.b_grid[bi];
    std::array<Vector, 3> sum_err, sum_sq, covered;
    for (auto& v : sum_err) v = Vector::Zero(p);
    for (auto& v : sum_sq) v = Vector::Zero(p);
    for (auto& v : covered) v = Vector::Zero(p);
    double sum_gamma = 0.0, sum_accept = 0.0, sum_m = 0.0;
    for (const auto& r : records) {
      if (r.b_index != bi) continue;
      if (!r.ok) {
        ++s.failures;
        continue;
      }
      ++s.replications;
      for (std::size_t e = 0; e < 3; ++e) {
        const Vector err = r.estimate[e] - res.psi_true;
        sum_err[e] += err;
        sum_sq[e] += err.cwiseAbs2();
        for (Eigen::Index k = 0; k < p; ++k) {
          if (r.ci_lower[e][k] <= res.psi_true[k] && res.psi_true[k] <= r.ci_upper[e][k]) covered[e][k] += 1.0;
        }
      }
      sum_gamma += r.gamma;
      sum_accept += r.accepted ? 1.0 : 0.0;
      sum_m += static_cast<double>(r.trial_size);
    }
    failures += s.failures;
    const double ok = static_cast<double>(s.replications);
    for (std::size_t e = 0; e < 3; ++e) {
      CellSummary& c = s.cells[e];
      if (s.replications == 0) {
        c.bias = c.mse = c.mse_ratio = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      c.bias = sum_err[e] / ok;
      c.mse = sum_sq[e] / ok;
      if (s.replications >= 2) c.coverage = covered[e] / ok;
    }
    for (std::size_t e = 0; e < 3; ++e) {
      s.cells[e].mse_ratio = 100.0 * s.cells[e].mse.cwiseQuotient(s.cells[0].mse);
    }
    if (s.replications > 0) {
      s.mean_gamma = sum_gamma / ok;
      s.gate_accept_rate = sum_accept / ok;
      s.mean_trial_size = sum_m / ok;
    }
    res.per_b.push_back(std::move(s));
  }
  const double total = static_cast<double>(records.size());
  if (total > 0 && static_cast<double>(failures) / total > cfg.max_failure_rate) {
    std::string first;
    for (const auto& r : records) {
      if (!r.ok) {
        first = r.error;
        break;
      }
    }
    throw ConvergenceFailure("replication failure budget exceeded: " + std::to_string(failures) + " of " +
                             std::to_string(records.size()) + " failed (first: " + first + ")");
  }
  res.records = std::move(records);
  return res;
}

namespace {

void check_study(const StudyConfig& cfg) {
  if (cfg.reps < 1) throw InvalidArgument("reps must be >= 1");
  if (cfg.b_grid.empty()) throw InvalidArgument("b grid is empty");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  cfg.dgp.validate();
}

}  // namespace

StudyResult run_study(const StudyConfig& cfg) {
  check_study(cfg);
  const std::size_t cells = cfg.b_grid.size() * cfg.reps;
  std::vector<ReplicationRecord> records(cells);
  const int nt = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (long c = 0; c < static_cast<long>(cells); ++c) {
    const auto cell = static_cast<std::size_t>(c);
    records[cell] = run_replication(cfg, cell / cfg.reps, cell % cfg.reps);
  }
  return aggregate_study(cfg, std::move(records));
}

StudyResult run_study_serial(const StudyConfig& cfg) {
  check_study(cfg);
  std::vector<ReplicationRecord> records;
  records.reserve(cfg.b_grid.size() * cfg.reps);
  for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
    for (std::size_t r = 0; r < cfg.reps; ++r) records.push_back(run_replication(cfg, bi, r));
  }
  return aggregate_study(cfg, std::move(records));
}

std::vector<MseRatioRow> mse_ratio_table(const StudyResult& result) {
  std::vector<MseRatioRow> rows;
  for (const auto& s : result.per_b) {
    const Vector& rt = s.cells[0].mse;
    for (Eigen::Index k = 0; k < rt.size(); ++k) {
      if (!(rt[k] > 0.0)) throw DegenerateCase("rt MSE is zero (or undefined) at b = " + std::to_string(s.b));
    }
    for (StudyEstimator e : kStudyEstimators) {
      const Vector& m = s.cells[static_cast<std::size_t>(e)].mse;
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        rows.push_back({s.b, e, static_cast<std::size_t>(k), 100.0 * m[k] / rt[k]});
      }
    }
  }
  return rows;
}

}  // namespace elastic
