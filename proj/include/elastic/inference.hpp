#pragma once

#include "elastic/gate.hpp"
#include "elastic/linalg.hpp"
#include "elastic/score.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace elastic {

/// Grid point minimizing tr mse(gamma; eta_hat). Ties go to the smaller
/// gamma. Comparisons are made on the excess over tr V_rt in log space, so
/// the choice stays meaningful when the noncentral CDFs underflow.
double select_gamma(const VarianceBundle& bundle, const Vector& eta_hat, const std::vector<double>& grid);

enum class CiBranch { LocalAlternative, FixedAlternative };

std::string_view to_string(CiBranch b);

struct ElasticCi {
  Vector lower;
  Vector upper;
  /// Interval from eta = eta_hat alone (LocalAlternative only; equals the
  /// reported interval in the FixedAlternative branch).
  Vector plugin_lower;
  Vector plugin_upper;
  CiBranch branch = CiBranch::LocalAlternative;
  double alpha = 0.05;
  double kappa_n = 0.0;
};

struct ElasticCiOptions {
  double alpha = 0.05;
  std::size_t draws = 100000;     // M
  std::size_t eta_points = 200;   // L
  std::uint64_t seed = 0;
  int threads = 0;
};

/// kappa_n = sqrt(log n). T > kappa_n: normal interval from V_rt. Otherwise
/// the least-favorable interval over the (1 - alpha~) confidence ellipsoid
/// for eta, alpha~ = 1 - sqrt(1 - alpha). gate.gamma must be set.
ElasticCi elastic_ci(const VarianceBundle& bundle, const GateResult& gate, const Vector& psi_elas,
                     const ElasticCiOptions& options);

/// Single-threaded reference with identical output.
ElasticCi elastic_ci_serial(const VarianceBundle& bundle, const GateResult& gate, const Vector& psi_elas,
                            const ElasticCiOptions& options);

}  // namespace elastic
