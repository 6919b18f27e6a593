#include "elastic/nuisance.hpp"

#include "elastic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace elastic {

namespace {

std::vector<std::size_t> kept_coordinates(std::size_t dim_x, const BasisSpec& spec) {
  std::vector<std::size_t> kept;
  for (std::size_t j : spec.omit_indices) {
    if (j >= dim_x) throw InvalidArgument("basis omit index " + std::to_string(j) + " out of range");
  }
  for (std::size_t j = 1; j < dim_x; ++j) {
    if (std::find(spec.omit_indices.begin(), spec.omit_indices.end(), j) == spec.omit_indices.end()) {
      kept.push_back(j);
    }
  }
  return kept;
}

double expit(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double clip_probability(double p) { return std::clamp(p, kPropensityClip, 1.0 - kPropensityClip); }

// sum y*eta - log(1 + e^eta), evaluated without overflow.
double binomial_loglik(const Vector& eta, const Vector& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta[i];
    ll += y[i] * t - (std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))));
  }
  return ll;
}

}  // namespace

std::size_t basis_size(std::size_t dim_x, const BasisSpec& spec) {
  const std::size_t k = kept_coordinates(dim_x, spec).size();
  return 1 + k + (spec.include_squares ? k : 0) + (spec.include_pairwise_interactions && k > 1 ? k * (k - 1) / 2 : 0);
}

Vector build_basis(const Vector& x, const BasisSpec& spec) {
  const std::vector<std::size_t> kept = kept_coordinates(static_cast<std::size_t>(x.size()), spec);
  Vector f(static_cast<Eigen::Index>(basis_size(static_cast<std::size_t>(x.size()), spec)));
  Eigen::Index c = 0;
  f[c++] = 1.0;
  for (std::size_t j : kept) f[c++] = x[static_cast<Eigen::Index>(j)];
  if (spec.include_squares) {
    for (std::size_t j : kept) {
      const double v = x[static_cast<Eigen::Index>(j)];
      f[c++] = v * v;
    }
  }
  if (spec.include_pairwise_interactions) {
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        f[c++] = x[static_cast<Eigen::Index>(kept[a])] * x[static_cast<Eigen::Index>(kept[b])];
      }
    }
  }
  return f;
}

Matrix design_matrix(const CombinedSample& sample, const std::vector<std::size_t>& rows, const BasisSpec& spec) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(basis_size(sample.dim_x(), spec)));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = build_basis(sample[rows[i]].covariates, spec).transpose();
  }
  return out;
}

LogisticFit fit_logistic(const Matrix& features, const Vector& labels, int max_iter, double tol) {
  if (features.cols() < 1) throw InvalidArgument("logistic fit needs at least one feature column");
  if (features.rows() != labels.size()) throw InvalidArgument("logistic fit: rows and labels differ in length");
  if (features.rows() == 0) throw InvalidArgument("logistic fit: no rows");

  const Eigen::Index k = features.cols();
  LogisticFit fit;
  fit.coef = Vector::Zero(k);
  Vector eta = features * fit.coef;
  double ll = binomial_loglik(eta, labels);

  for (int iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    Vector prob(eta.size());
    Vector w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob[i] = expit(eta[i]);
      w[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
    }
    const Vector grad = features.transpose() * (labels - prob);
    const Matrix gram = features.transpose() * w.asDiagonal() * features;

    Eigen::LDLT<Matrix> ldlt(gram);
    Vector step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-14) {
      step = ldlt.solve(grad);
    } else {
      step = (gram + 1e-8 * Matrix::Identity(k, k)).ldlt().solve(grad);
    }

    // Step-halving keeps the log-likelihood non-decreasing.
    double t = 1.0;
    Vector trial = fit.coef + step;
    Vector trial_eta = features * trial;
    double trial_ll = binomial_loglik(trial_eta, labels);
    for (int h = 0; h < 30 && !(trial_ll >= ll - 1e-12 * std::abs(ll)); ++h) {
      t *= 0.5;
      trial = fit.coef + t * step;
      trial_eta = features * trial;
      trial_ll = binomial_loglik(trial_eta, labels);
    }

    const double change = (trial - fit.coef).cwiseAbs().maxCoeff();
    fit.coef = std::move(trial);
    eta = std::move(trial_eta);
    ll = trial_ll;

    if (fit.coef.cwiseAbs().maxCoeff() > 30.0) {
      fit.separation = true;
      return fit;
    }
    if (change < tol) {
      fit.converged = true;
      return fit;
    }
  }
  throw ConvergenceFailure("logistic IRLS did not converge in " + std::to_string(max_iter) + " iterations",
                           fit.coef);
}

Vector fit_linear(const Matrix& features, const Vector& targets) {
  if (features.rows() != targets.size()) throw InvalidArgument("linear fit: rows and targets differ in length");
  if (features.rows() < features.cols()) {
    throw InvalidArgument("linear fit needs rows >= columns (" + std::to_string(features.rows()) + " < " +
                          std::to_string(features.cols()) + ")");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(features);
  if (qr.rank() == features.cols()) {
    return qr.solve(targets);
  }
  const Eigen::Index k = features.cols();
  const Matrix gram = features.transpose() * features + 1e-10 * Matrix::Identity(k, k);
  Eigen::LDLT<Matrix> ldlt(gram);
  Vector coef = ldlt.solve(features.transpose() * targets);
  if (ldlt.info() != Eigen::Success || !coef.allFinite()) {
    throw ConvergenceFailure("linear fit is rank deficient beyond the ridge fallback", coef);
  }
  return coef;
}

TrialPropensity TrialPropensity::constant(double value) {
  if (!(value > 0.0 && value < 1.0)) throw InvalidArgument("trial propensity must lie in (0, 1)");
  TrialPropensity e;
  e.constant_ = value;
  return e;
}

TrialPropensity TrialPropensity::per_record() { return TrialPropensity{}; }

double TrialPropensity::operator()(const Record& r) const {
  if (constant_) return *constant_;
  if (!std::isfinite(r.trial_propensity)) {
    throw InvalidArgument("record carries no trial propensity and no constant was supplied");
  }
  return r.trial_propensity;
}

double NuisanceFit::propensity(const Record& r) const {
  if (r.is_trial()) return clip_probability(e1_(r));
  if (!e0_coef_) throw PreconditionError("real-world propensity was not fitted (rw stratum empty)");
  return clip_probability(expit(build_basis(r.covariates, basis_).dot(*e0_coef_)));
}

double NuisanceFit::outcome_mean(const Record& r) const {
  const auto& coef = mu_coef(r.source);
  if (!coef) return 0.0;
  return build_basis(r.covariates, basis_).dot(*coef);
}

double NuisanceFit::outcome_variance(const Record& r) const {
  if (variance_ == VarianceModel::Bernoulli) {
    const double mu = clip_probability(outcome_mean(r));
    return std::max(mu * (1.0 - mu), kVarianceFloor);
  }
  return sigma2(r.source);
}

NuisanceFit NuisanceFit::preliminary(const TrialPropensity& e1, const BasisSpec& basis) {
  NuisanceFit f;
  f.basis_ = basis;
  f.e1_ = e1;
  f.sigma2_1_ = 1.0;
  f.sigma2_0_ = 1.0;
  f.variance_ = VarianceModel::StratumConstant;
  return f;
}

NuisanceFit fit_nuisance(const CombinedSample& sample, const HteModel& model, const Vector& psi_prelim,
                         const NuisanceOptions& options, const TrialPropensity& e1) {
  if (!psi_prelim.allFinite()) throw InvalidArgument("preliminary psi is not finite");
  NuisanceFit fit;
  fit.basis_ = options.basis;
  fit.e1_ = e1;

  bool binary = true;
  for (const Record& r : sample.records()) {
    if (r.outcome != 0.0 && r.outcome != 1.0) {
      binary = false;
      break;
    }
  }
  fit.variance_ = options.variance == VarianceModel::Auto
                      ? (binary ? VarianceModel::Bernoulli : VarianceModel::StratumConstant)
                      : options.variance;

  for (Source s : {Source::Trial, Source::RealWorld}) {
    const std::vector<std::size_t> rows = sample.indices_of(s);
    if (rows.empty() || (s == Source::RealWorld && !options.fit_real_world)) continue;
    const Matrix x = design_matrix(sample, rows, options.basis);

    if (s == Source::RealWorld) {
      Vector labels(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) labels[static_cast<Eigen::Index>(i)] = sample[rows[i]].treatment;
      LogisticFit lf = fit_logistic(x, labels, options.logistic_max_iter, options.logistic_tol);
      fit.e0_coef_ = lf.coef;
      fit.e0_separation_ = lf.separation;
    }

    Vector h(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      h[static_cast<Eigen::Index>(i)] = h_residual(model, psi_prelim, sample[rows[i]], sample.z(rows[i]));
    }
    Vector coef = fit_linear(x, h);
    const double mse = (h - x * coef).squaredNorm() / static_cast<double>(rows.size());
    (s == Source::Trial ? fit.mu1_coef_ : fit.mu0_coef_) = std::move(coef);
    (s == Source::Trial ? fit.sigma2_1_ : fit.sigma2_0_) = std::max(mse, kVarianceFloor);
  }
  return fit;
}

}  // namespace elastic
