#pragma once

#include "elastic/estimator.hpp"
#include "elastic/inference.hpp"
#include "elastic/linalg.hpp"
#include "elastic/model.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace elastic {

/// Population model: X1, X2, X3 ~ N(0, 1),
/// Y(a) = X1 + b X3 + a (psi1 + psi2 X1 + psi3 X2) + eps(a),
/// trial selection logit = selection_coefs . (1, X1, X2, X3) with e1 known,
/// real-world simple random sample with logit e0 = e0_logit_coefs . (1, X1, X2, X3).
struct DgpConfig {
  std::size_t population_size = 100000;
  Vector psi_true = Vector::Ones(3);
  double b = 0.0;
  std::array<double, 4> selection_coefs{-6.5, 1.0, 1.0, 0.0};
  std::size_t rw_sample_size = 1000;
  double e1_value = 0.5;
  std::array<double, 4> e0_logit_coefs{1.0, -2.0, 0.0, -2.0};
  /// Drop X3 from the emitted covariates (it still drives the outcome and
  /// the real-world treatment): the unmeasured-confounding setting.
  bool omit_x3 = true;
  std::uint64_t seed = 0;
  /// Stream key for the b value (its position in a study grid).
  std::uint64_t b_index = 0;
  int max_retries = 20;

  void validate() const;
};

/// Effect modifiers Z = (1, X1, X2) are columns {0, 1, 2} of the emitted X.
inline const std::vector<std::size_t>& dgp_effect_modifiers() {
  static const std::vector<std::size_t> z{0, 1, 2};
  return z;
}

/// One simulated data set: trial records first, then real-world records.
/// A draw with no trial selections is redrawn from a fresh stream (bounded
/// by max_retries; exhausting them raises PreconditionError).
CombinedSample generate_replication(const DgpConfig& cfg, std::uint64_t rep_index);

enum class StudyEstimator : int { Rt = 0, Eff = 1, Elastic = 2 };
inline constexpr std::array<StudyEstimator, 3> kStudyEstimators{StudyEstimator::Rt, StudyEstimator::Eff,
                                                                StudyEstimator::Elastic};
std::string_view to_string(StudyEstimator e);

struct StudyConfig {
  DgpConfig dgp;
  std::vector<double> b_grid{0.10, 0.17, 0.29, 0.51, 0.89, 1.54, 2.69};
  std::size_t reps = 500;
  double alpha = 0.05;
  std::size_t bootstrap_reps = 100;
  std::size_t ci_draws = 100000;
  std::size_t ci_eta_points = 200;
  EstimatorSpec spec;
  std::uint64_t seed = 0;
  int threads = 0;
  double max_failure_rate = 0.01;
};

/// Raw outcome of one (b, rep) cell.
struct ReplicationRecord {
  std::size_t b_index = 0;
  std::size_t rep = 0;
  bool ok = false;
  std::string error;
  std::size_t trial_size = 0;
  std::array<Vector, 3> estimate;
  std::array<Vector, 3> ci_lower;
  std::array<Vector, 3> ci_upper;
  double gamma = 0.0;
  double t_stat = 0.0;
  bool accepted = false;
  CiBranch ci_branch = CiBranch::LocalAlternative;
};

struct CellSummary {
  Vector bias;
  Vector mse;
  Vector mse_ratio;  // 100 * MSE / MSE(rt)
  /// Empirical CI coverage; nullopt with fewer than 2 successful replications.
  std::optional<Vector> coverage;
};

struct StudySummary {
  double b = 0.0;
  std::size_t replications = 0;
  std::size_t failures = 0;
  std::array<CellSummary, 3> cells;
  double mean_gamma = 0.0;
  double gate_accept_rate = 0.0;
  double mean_trial_size = 0.0;
};

struct StudyResult {
  Vector psi_true;
  std::vector<StudySummary> per_b;
  std::vector<ReplicationRecord> records;
};

/// Runs rt (covariate adjustment, bootstrap Wald CI), eff (bootstrap Wald
/// CI) and elastic (adaptive or fixed gamma, elastic CI) on every (b, rep).
/// Cells run in parallel into fixed slots; aggregation is serial, so the
/// result does not depend on the thread count. Throws ConvergenceFailure
/// when more than max_failure_rate of the cells fail.
StudyResult run_study(const StudyConfig& cfg);
StudyResult run_study_serial(const StudyConfig& cfg);

/// One cell, exposed for tests and the acceptance harness.
ReplicationRecord run_replication(const StudyConfig& cfg, std::size_t b_index, std::size_t rep);

/// Aggregates records (must cover exactly reps cells for every b).
StudyResult aggregate_study(const StudyConfig& cfg, std::vector<ReplicationRecord> records);

struct MseRatioRow {
  double b = 0.0;
  StudyEstimator estimator = StudyEstimator::Rt;
  std::size_t coordinate = 0;
  double ratio_x100 = 0.0;
};

/// 100 * MSE(estimator) / MSE(rt) for every (b, estimator, coordinate).
/// Throws DegenerateCase when an rt MSE is zero.
std::vector<MseRatioRow> mse_ratio_table(const StudyResult& result);

}  // namespace elastic
