#pragma once

#include "elastic/model.hpp"
#include "elastic/random.hpp"

#include <cmath>
#include <vector>

namespace elastic::fixtures {

// Small linear-HTE sample with Z = (1, X1) and X = (1, X1, X2).
inline CombinedSample small_sample(std::uint64_t seed, std::size_t m, std::size_t n, bool binary = false,
                                   double confounding = 0.0) {
  Rng rng = make_rng(seed, {99});
  NormalSource normal(rng);
  std::vector<Record> recs;
  for (std::size_t i = 0; i < m + n; ++i) {
    Record r;
    r.source = i < m ? Source::Trial : Source::RealWorld;
    const double x1 = normal(), x2 = normal(), u = normal();
    r.covariates = Vector(3);
    r.covariates << 1.0, x1, x2;
    const double e = r.is_trial() ? 0.5 : 1.0 / (1.0 + std::exp(-(0.3 * x1 - 0.2 * x2 + confounding * u)));
    r.treatment = uniform01(rng) < e ? 1 : 0;
    if (binary) {
      const double p0 = 1.0 / (1.0 + std::exp(-(-0.2 + 0.5 * x1)));
      const double p1 = std::min(0.99, std::max(0.01, p0 + 0.2 + 0.1 * x1));
      r.outcome = uniform01(rng) < (r.treatment ? p1 : p0) ? 1.0 : 0.0;
    } else {
      r.outcome = x1 + 0.5 * x2 + r.treatment * (1.0 + 0.5 * x1) + confounding * u + normal();
    }
    recs.push_back(std::move(r));
  }
  return CombinedSample(std::move(recs), {0, 1});
}

inline Matrix random_spd(Rng& rng, Eigen::Index p, double ridge = 0.5) {
  NormalSource normal(rng);
  Matrix a(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = normal();
  return a * a.transpose() / static_cast<double>(p) + ridge * Matrix::Identity(p, p);
}

}  // namespace elastic::fixtures
