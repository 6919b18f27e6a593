#include "elastic/model.hpp"

#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace elastic {

CombinedSample::CombinedSample(std::vector<Record> records, std::vector<std::size_t> z_index)
    : records_(std::move(records)), z_index_(std::move(z_index)) {
  if (records_.empty()) {
    throw InvalidArgument("sample has no records");
  }
  if (z_index_.empty()) {
    throw InvalidArgument("effect-modifier selection is empty");
  }
  dim_x_ = static_cast<std::size_t>(records_.front().covariates.size());
  if (dim_x_ == 0) {
    throw InvalidArgument("records carry no covariates");
  }
  for (std::size_t k = 0; k < z_index_.size(); ++k) {
    if (z_index_[k] >= dim_x_) {
      throw InvalidArgument("effect-modifier index " + std::to_string(z_index_[k]) + " out of range");
    }
    if (k > 0 && z_index_[k] <= z_index_[k - 1]) {
      throw InvalidArgument("effect-modifier indices must be strictly increasing");
    }
  }
  if (z_index_.front() != 0) {
    throw InvalidArgument("effect modifiers must start with the intercept column");
  }

  z_.resize(static_cast<Eigen::Index>(records_.size()), static_cast<Eigen::Index>(z_index_.size()));
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const Record& r = records_[i];
    if (static_cast<std::size_t>(r.covariates.size()) != dim_x_) {
      throw InvalidArgument("record " + std::to_string(i) + " has a different covariate dimension");
    }
    if (r.covariates[0] != 1.0) {
      throw InvalidArgument("record " + std::to_string(i) + ": first covariate must be the intercept 1");
    }
    if (r.treatment != 0 && r.treatment != 1) {
      throw InvalidArgument("record " + std::to_string(i) + ": treatment must be 0 or 1");
    }
    if (!std::isfinite(r.outcome) || !r.covariates.allFinite()) {
      throw InvalidArgument("record " + std::to_string(i) + " has non-finite values");
    }
    (r.is_trial() ? m_ : n_) += 1;
    for (std::size_t k = 0; k < z_index_.size(); ++k) {
      z_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          r.covariates[static_cast<Eigen::Index>(z_index_[k])];
    }
  }
}

double CombinedSample::rho() const {
  if (n_ == 0) {
    throw PreconditionError("rw stratum empty: rho = m/n undefined");
  }
  return static_cast<double>(m_) / static_cast<double>(n_);
}

std::vector<std::size_t> CombinedSample::indices_of(Source s) const {
  std::vector<std::size_t> out;
  out.reserve(s == Source::Trial ? m_ : n_);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].source == s) out.push_back(i);
  }
  return out;
}

std::string_view to_string(HteKind kind) {
  switch (kind) {
    case HteKind::Linear:
      return "linear";
    case HteKind::RiskDifference:
      return "risk_difference";
  }
  return "unknown";
}

HteModel::HteModel(HteKind k, std::size_t dim) : kind(k), p(dim) {
  if (dim == 0) throw InvalidArgument("HTE parameter dimension must be >= 1");
}

namespace {

double linear_index(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z) {
  if (static_cast<std::size_t>(psi.size()) != model.p || static_cast<std::size_t>(z.size()) != model.p) {
    throw InvalidArgument("dimension mismatch: model p = " + std::to_string(model.p) +
                          ", psi has " + std::to_string(psi.size()) + ", z has " + std::to_string(z.size()));
  }
  return z.dot(psi);
}

// 2 e^s / (e^s + 1)^2 written in e^{-|s|} so it stays positive for large |s|.
double risk_difference_slope(double s) {
  const double e = std::exp(-std::abs(s));
  return 2.0 * e / ((1.0 + e) * (1.0 + e));
}

}  // namespace

double tau(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z) {
  const double s = linear_index(model, psi, z);
  if (model.kind == HteKind::Linear) return s;
  // tanh saturates to +-1 in double precision for |s| > ~38; keep the open interval.
  constexpr double kEdge = 1.0 - 0x1p-53;
  return std::clamp(std::tanh(0.5 * s), -kEdge, kEdge);
}

Vector tau_grad(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z) {
  const double s = linear_index(model, psi, z);
  if (model.kind == HteKind::Linear) return z;
  return z * risk_difference_slope(s);
}

double tau_curvature(const HteModel& model, const Vector& psi, Eigen::Ref<const Vector> z) {
  const double s = linear_index(model, psi, z);
  if (model.kind == HteKind::Linear) return 0.0;
  return -std::tanh(0.5 * s) * risk_difference_slope(s);
}

double h_residual(const HteModel& model, const Vector& psi, const Record& record,
                  Eigen::Ref<const Vector> z) {
  return record.outcome - tau(model, psi, z) * record.treatment;
}

}  // namespace elastic
