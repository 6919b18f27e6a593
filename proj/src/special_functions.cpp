#include "elastic/special_functions.hpp"

#include "elastic/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace elastic {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_chi2_args(double x, double p, double lambda) {
  if (std::isnan(x) || x < 0.0) throw InvalidArgument("chi-square argument must be >= 0");
  if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidArgument("chi-square degrees of freedom must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("non-centrality must be finite and >= 0");
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

double log_gamma_p(double a, double x) {
  if (x <= 0.0) return kNegInf;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) {
    // x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    double term = 1.0;
    double sum = 1.0;
    for (int n = 1; n < 100000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return a * std::log(x) - x - std::lgamma(a + 1.0) + std::log(sum);
  }
  return std::log1p(-boost::math::gamma_q(a, x));
}

double chi2_cdf(double x, double p) {
  check_chi2_args(x, p, 0.0);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * p, 0.5 * x);
}

double log_noncentral_chi2_cdf(double x, double p, double lambda) {
  check_chi2_args(x, p, lambda);
  if (x == 0.0) return kNegInf;
  if (std::isinf(x)) return 0.0;
  if (lambda == 0.0) return log_gamma_p(0.5 * p, 0.5 * x);

  const double half = 0.5 * lambda;
  const double log_half = std::log(half);
  double log_weight = -half;  // log Poisson(0; lambda/2)
  double cum_weight = 0.0;
  double acc = kNegInf;
  double peak = kNegInf;
  // Summands are unimodal in j (log-concave Poisson weight times a
  // log-concave central CDF), so once past the peak and negligible relative
  // to the running total, the rest cannot matter.
  const double j_max = std::floor(half) + 50.0 * std::sqrt(half) + 1000.0;
  for (long j = 0; static_cast<double>(j) <= j_max; ++j) {
    if (j > 0) log_weight += log_half - std::log(static_cast<double>(j));
    const double term = log_weight + log_gamma_p(0.5 * p + static_cast<double>(j), 0.5 * x);
    acc = log_add(acc, term);
    peak = std::max(peak, term);
    cum_weight += std::exp(log_weight);
    if (cum_weight > 1.0 - 1e-12) break;
    if (term < peak && term < acc - 40.0) break;
  }
  return std::min(acc, 0.0);
}

double noncentral_chi2_cdf(double x, double p, double lambda) {
  check_chi2_args(x, p, lambda);
  if (lambda == 0.0) return chi2_cdf(x, p);
  return std::exp(log_noncentral_chi2_cdf(x, p, lambda));
}

double normal_cdf(double x) {
  if (std::isnan(x)) throw InvalidArgument("normal_cdf of NaN");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("normal quantile needs prob in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

double chi2_quantile(double prob, double p) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("chi-square quantile needs prob in (0, 1)");
  if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidArgument("chi-square degrees of freedom must be >= 1");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(p), prob);
}

}  // namespace elastic
