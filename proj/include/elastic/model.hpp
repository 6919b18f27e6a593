#pragma once

#include "elastic/linalg.hpp"

#include <cstddef>
#include <limits>
#include <string_view>
#include <vector>

namespace elastic {

/// Data source of a record. The numeric values match the usual delta
/// indicator (1 = randomized trial, 0 = real-world study).
enum class Source : int { RealWorld = 0, Trial = 1 };

struct Record {
  Source source = Source::Trial;
  int treatment = 0;        // A in {0, 1}
  double outcome = 0.0;     // Y; binary outcomes are stored as 0.0 / 1.0
  Vector covariates;        // X, first entry is the intercept 1
  /// Known-by-design trial propensity for this record. NaN means "use the
  /// constant supplied to the estimator".
  double trial_propensity = std::numeric_limits<double>::quiet_NaN();

  bool is_trial() const noexcept { return source == Source::Trial; }
};

/// Trial (delta = 1) and real-world (delta = 0) records sharing one
/// covariate layout and one effect-modifier selection Z = X[z_index].
///
/// Either stratum may be empty; estimators that need a stratum check for it
/// and raise PreconditionError.
class CombinedSample {
 public:
  CombinedSample(std::vector<Record> records, std::vector<std::size_t> z_index);

  const std::vector<Record>& records() const noexcept { return records_; }
  const Record& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }

  std::size_t trial_count() const noexcept { return m_; }
  std::size_t real_world_count() const noexcept { return n_; }
  /// rho = m / n. Throws PreconditionError when the real-world stratum is empty.
  double rho() const;

  std::size_t dim_x() const noexcept { return dim_x_; }
  std::size_t dim_z() const noexcept { return z_index_.size(); }
  const std::vector<std::size_t>& z_index() const noexcept { return z_index_; }

  /// Effect-modifier vector of record i (row i of the cached Z matrix).
  Eigen::Ref<const Vector> z(std::size_t i) const { return z_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& z_matrix() const noexcept {
    return z_;
  }

  /// Indices of records in a stratum, in storage order.
  std::vector<std::size_t> indices_of(Source s) const;

 private:
  std::vector<Record> records_;
  std::vector<std::size_t> z_index_;
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::size_t dim_x_ = 0;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z_;
};

enum class HteKind { Linear, RiskDifference };

std::string_view to_string(HteKind kind);

/// Parametric HTE family tau_psi(Z).
struct HteModel {
  HteKind kind = HteKind::Linear;
  std::size_t p = 1;

  HteModel() = default;
  HteModel(HteKind k, std::size_t dim);
};

using PsiVector = Vector;

/// tau_psi(z). Linear: z^T psi. RiskDifference: (e^s - 1)/(e^s + 1) with
/// s = z^T psi, evaluated as tanh(s / 2).
double tau(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z);

/// d tau / d psi.
Vector tau_grad(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z);

/// Scalar c with d^2 tau / d psi d psi^T = c * z z^T (zero for Linear).
double tau_curvature(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z);

/// H_psi = Y - tau_psi(Z) A.
double h_residual(const HteModel& model, const Vector& psi, const Record& record,
                  Eigen::Ref<const Vector> z);

}  // namespace elastic
