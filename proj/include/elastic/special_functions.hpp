#pragma once

namespace elastic {

/// P(chi^2_p <= x), via the regularized lower incomplete gamma P(p/2, x/2).
double chi2_cdf(double x, double p);

/// P(chi^2_p(lambda) <= x): Poisson(lambda/2)-weighted sum of central CDFs,
/// truncated once the accumulated Poisson weight exceeds 1 - 1e-12 or the
/// remaining terms are negligible.
double noncentral_chi2_cdf(double x, double p, double lambda);

/// log P(chi^2_p(lambda) <= x), accurate where the CDF itself underflows
/// (x far below lambda). Returns -inf at x = 0.
double log_noncentral_chi2_cdf(double x, double p, double lambda);

/// log P(a, x) for the regularized lower incomplete gamma function.
double log_gamma_p(double a, double x);

double normal_cdf(double x);
double normal_quantile(double prob);

/// (prob)-quantile of the central chi-square with p degrees of freedom.
double chi2_quantile(double prob, double p);

}  // namespace elastic
