#include "elastic/mixture.hpp"

#include "elastic/errors.hpp"
#include "elastic/random.hpp"
#include "elastic/special_functions.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace elastic {

namespace {

constexpr std::size_t kChunk = 4096;
constexpr double kMinAcceptance = 1e-6;

// Stream key separating the branch sampler from the truncated sampler.
constexpr std::uint64_t kMixtureStream = 1;
constexpr std::uint64_t kTruncatedStream = 2;
constexpr std::uint64_t kCrnStream = 3;

double truncation_mass(const Vector& mu1, double c) {
  if (c <= 0.0) return 1.0;
  if (std::isinf(c)) return 0.0;
  return 1.0 - noncentral_chi2_cdf(c, static_cast<double>(mu1.size()), mu1.squaredNorm());
}

// One accepted draw from N(mu1, I) restricted to |z|^2 >= c; adds the number
// of proposals to `proposals`.
Vector draw_truncated(NormalSource& normal, const Vector& mu1, double c, std::size_t& proposals) {
  Vector z(mu1.size());
  for (;;) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = mu1[k] + normal();
    ++proposals;
    if (z.squaredNorm() >= c) return z;
  }
}

void check_feasible(const Vector& mu1, double c) {
  const double mass = truncation_mass(mu1, c);
  if (mass < kMinAcceptance) {
    throw InfeasibleTruncation("truncation |Z1|^2 >= " + std::to_string(c) + " has acceptance probability " +
                               std::to_string(mass) + " < 1e-6");
  }
}

struct ChunkOut {
  std::size_t proposals = 0;
};

// Fills rows [begin, end) of the mixture draws from the chunk's own stream.
ChunkOut mixture_chunk(const MixtureSpec& spec, std::uint64_t seed, std::size_t chunk, std::size_t begin,
                       std::size_t end, MixtureDraws& out) {
  Rng rng = make_rng(seed, {kMixtureStream, chunk});
  NormalSource normal(rng);
  ChunkOut res;
  const auto p = static_cast<Eigen::Index>(spec.p());
  Vector z2(p);
  for (std::size_t i = begin; i < end; ++i) {
    const bool truncated = uniform01(rng) < spec.xi;
    for (Eigen::Index k = 0; k < p; ++k) z2[k] = spec.mu2[k] + normal();
    Vector w = spec.sqrt_v_eff * z2;
    if (truncated) w -= spec.loading * draw_truncated(normal, spec.mu1, spec.c_gamma, res.proposals);
    out.draws.row(static_cast<Eigen::Index>(i)) = w.transpose();
    out.component_flags[i] = truncated ? 1 : 0;
  }
  return res;
}

MixtureDraws mixture_impl(const MixtureSpec& spec, std::size_t count, std::uint64_t seed, int threads, bool parallel) {
  if (spec.xi > 0.0) check_feasible(spec.mu1, spec.c_gamma);
  MixtureDraws out;
  out.seed = seed;
  out.draws.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(spec.p()));
  out.component_flags.assign(count, 0);
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  std::vector<std::size_t> proposals(chunks, 0);
  const auto run = [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    proposals[c] = mixture_chunk(spec, seed, c, begin, std::min(count, begin + kChunk), out).proposals;
  };
  if (parallel) {
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (long c = 0; c < static_cast<long>(chunks); ++c) run(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  }
  for (std::size_t v : proposals) out.proposals += v;
  return out;
}

}  // namespace

MixtureSpec make_mixture_spec(const VarianceBundle& bundle, double gamma, const Vector& eta) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("mixture gamma must lie in [0, 1]");
  if (static_cast<std::size_t>(eta.size()) != bundle.p()) throw InvalidArgument("eta dimension mismatch");
  if (!eta.allFinite()) throw InvalidArgument("eta must be finite");
  MixtureSpec s;
  s.v_rt = bundle.v_rt;
  s.v_eff = bundle.v_eff;
  s.v_rt_minus_eff = bundle.v_rt_minus_eff;
  s.sigma_ss = bundle.sigma_ss;
  s.gamma = gamma;
  s.eta = eta;
  s.sqrt_v_eff = linalg::sym_sqrt(s.v_eff);
  s.sqrt_v_rt_minus_eff = linalg::sym_sqrt(s.v_rt_minus_eff);
  s.inv_sqrt_sigma_ss = linalg::sym_inv_sqrt(s.sigma_ss);
  s.loading = s.v_eff * linalg::sym_sqrt(s.sigma_ss);
  const auto p = static_cast<double>(eta.size());
  if (gamma == 0.0) {
    s.c_gamma = std::numeric_limits<double>::infinity();
  } else if (gamma == 1.0) {
    s.c_gamma = 0.0;
  } else {
    s.c_gamma = chi2_quantile(1.0 - gamma, p);
  }
  s.mu1 = s.inv_sqrt_sigma_ss * eta;
  s.mu2 = s.sqrt_v_eff * eta;
  s.lambda = s.mu1.squaredNorm();
  s.xi = truncation_mass(s.mu1, s.c_gamma);
  return s;
}

TruncatedDraws sample_truncated(const Vector& mu1, double c, std::size_t count, std::uint64_t seed) {
  if (std::isnan(c) || c < 0.0) throw InvalidArgument("truncation bound must be >= 0");
  if (mu1.size() == 0) throw InvalidArgument("truncated sampler needs p >= 1");
  check_feasible(mu1, c);
  TruncatedDraws out;
  out.draws.resize(static_cast<Eigen::Index>(count), mu1.size());
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    Rng rng = make_rng(seed, {kTruncatedStream, ch});
    NormalSource normal(rng);
    for (std::size_t i = ch * kChunk; i < std::min(count, (ch + 1) * kChunk); ++i) {
      out.draws.row(static_cast<Eigen::Index>(i)) = draw_truncated(normal, mu1, c, out.proposals).transpose();
    }
  }
  out.acceptance_rate = out.proposals == 0 ? 1.0 : static_cast<double>(count) / static_cast<double>(out.proposals);
  return out;
}

double MixtureDraws::branch_fraction() const {
  if (component_flags.empty()) return 0.0;
  std::size_t k = 0;
  for (auto f : component_flags) k += f;
  return static_cast<double>(k) / static_cast<double>(component_flags.size());
}

MixtureDraws sample_mixture(const MixtureSpec& spec, std::size_t count, std::uint64_t seed, int threads) {
  return mixture_impl(spec, count, seed, threads, true);
}

MixtureDraws sample_mixture_serial(const MixtureSpec& spec, std::size_t count, std::uint64_t seed) {
  return mixture_impl(spec, count, seed, 1, false);
}

CrnBase make_crn_base(std::size_t p, std::size_t count, std::uint64_t seed) {
  CrnBase base;
  base.seed = seed;
  base.n1.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(p));
  base.n2.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(p));
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    Rng rng = make_rng(seed, {kCrnStream, ch});
    NormalSource normal(rng);
    for (std::size_t i = ch * kChunk; i < std::min(count, (ch + 1) * kChunk); ++i) {
      for (std::size_t k = 0; k < p; ++k) base.n1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = normal();
      for (std::size_t k = 0; k < p; ++k) base.n2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = normal();
    }
  }
  return base;
}

MixtureDraws sample_mixture_crn(const MixtureSpec& spec, const CrnBase& base) {
  if (static_cast<std::size_t>(base.n1.cols()) != spec.p()) throw InvalidArgument("CRN base dimension mismatch");
  MixtureDraws out;
  out.seed = base.seed;
  const Eigen::Index m = base.n1.rows();
  const Vector shift = spec.v_eff * spec.eta;  // V_eff^{1/2} mu2 = L mu1 = V_eff eta
  // Rows: w = S (mu2 + n2) - 1(|mu1 + n1|^2 >= c) L (mu1 + n1)
  out.draws = base.n2 * spec.sqrt_v_eff;  // S symmetric
  out.draws.rowwise() += shift.transpose();
  const Matrix z1 = base.n1.rowwise() + spec.mu1.transpose();
  const Vector norms = z1.rowwise().squaredNorm();
  out.component_flags.assign(static_cast<std::size_t>(m), 0);
  const Matrix lt = spec.loading.transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (norms[i] >= spec.c_gamma) {
      out.draws.row(i) -= z1.row(i) * lt;
      out.component_flags[static_cast<std::size_t>(i)] = 1;
    }
  }
  return out;
}

MixtureMoments analytic_bias_mse(const MixtureSpec& spec) {
  const auto p = static_cast<double>(spec.p());
  double f2 = 1.0;  // c = inf
  double f4 = 1.0;
  if (spec.c_gamma <= 0.0) {
    f2 = f4 = 0.0;
  } else if (std::isfinite(spec.c_gamma)) {
    f2 = noncentral_chi2_cdf(spec.c_gamma, p + 2.0, spec.lambda);
    f4 = noncentral_chi2_cdf(spec.c_gamma, p + 4.0, spec.lambda);
  }
  MixtureMoments m;
  const Vector ve_eta = spec.v_eff * spec.eta;
  m.bias = ve_eta * f2;
  m.mse = spec.v_eff + spec.v_rt_minus_eff * (1.0 - f2) + ve_eta * ve_eta.transpose() * (2.0 * f2 - f4);
  m.mse = linalg::symmetrize(m.mse);
  if (!m.bias.allFinite() || !m.mse.allFinite()) throw DegenerateCase("mixture moments are not finite");
  return m;
}

std::vector<double> type7_quantiles(std::vector<double> values, const std::vector<double>& probs) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::vector<double> out;
  out.reserve(probs.size());
  const double n1 = static_cast<double>(values.size() - 1);
  for (double prob : probs) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument("quantile probability must lie in [0, 1]");
    const double h = n1 * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double x_lo = values[lo];
    double x_hi = x_lo;
    if (lo + 1 < values.size()) {
      x_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    }
    out.push_back(x_lo + (h - static_cast<double>(lo)) * (x_hi - x_lo));
  }
  return out;
}

double mixture_quantile(const MixtureDraws& draws, std::size_t coordinate, double prob) {
  if (coordinate >= static_cast<std::size_t>(draws.draws.cols())) throw InvalidArgument("coordinate out of range");
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("quantile probability must lie in (0, 1)");
  const auto col = draws.draws.col(static_cast<Eigen::Index>(coordinate));
  return type7_quantiles(std::vector<double>(col.data(), col.data() + col.size()), {prob}).front();
}

}  // namespace elastic
