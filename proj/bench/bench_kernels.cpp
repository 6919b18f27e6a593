#include "elastic/estimator.hpp"
#include "elastic/inference.hpp"
#include "elastic/mixture.hpp"
#include "elastic/simulate.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace elastic;

VarianceBundle toy_bundle() {
  Matrix i_rt(3, 3);
  i_rt << 1.0, 0.2, 0.1, 0.2, 1.5, 0.3, 0.1, 0.3, 2.0;
  return make_variance_bundle(i_rt, 1.5 * Matrix::Identity(3, 3), 0.3, 300, 1000);
}

// range(0): 0 = serial reference, otherwise the OpenMP kernel with that many threads.
void BM_SampleMixture(benchmark::State& state) {
  const MixtureSpec spec = make_mixture_spec(toy_bundle(), 0.3, Vector::Constant(3, 0.5));
  for (auto _ : state) {
    const MixtureDraws d = state.range(0) == 0 ? sample_mixture_serial(spec, 200000, 1)
                                               : sample_mixture(spec, 200000, 1, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(d.draws.data());
  }
}
BENCHMARK(BM_SampleMixture)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ElasticCi(benchmark::State& state) {
  const VarianceBundle b = toy_bundle();
  GateResult g;
  g.eta_hat = Vector::Constant(3, 0.3);
  g.sigma_ss_hat = b.sigma_ss;
  g.t_stat = 0.5;
  g = apply_gamma(g, 0.2);
  ElasticCiOptions o;
  o.draws = 20000;
  o.eta_points = 50;
  o.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const ElasticCi ci = state.range(0) == 0 ? elastic_ci_serial(b, g, Vector::Ones(3), o)
                                             : elastic_ci(b, g, Vector::Ones(3), o);
    benchmark::DoNotOptimize(ci.lower.data());
  }
}
BENCHMARK(BM_ElasticCi)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  DgpConfig dgp;
  dgp.seed = 3;
  const CombinedSample sample = generate_replication(dgp, 0);
  const HteModel model(HteKind::Linear, 3);
  BootstrapOptions o;
  o.replicates = 20;
  o.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const BootstrapResult r =
        state.range(0) == 0 ? bootstrap_variance_serial(sample, model, Method::Eff, o, {}, TrialPropensity::constant(0.5))
                            : bootstrap_variance(sample, model, Method::Eff, o, {}, TrialPropensity::constant(0.5));
    benchmark::DoNotOptimize(r.variance.data());
  }
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Study(benchmark::State& state) {
  StudyConfig cfg;
  cfg.b_grid = {0.1, 2.69};
  cfg.reps = 2;
  cfg.bootstrap_reps = 10;
  cfg.ci_draws = 5000;
  cfg.ci_eta_points = 20;
  cfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const StudyResult r = state.range(0) == 0 ? run_study_serial(cfg) : run_study(cfg);
    benchmark::DoNotOptimize(r.per_b.data());
  }
}
BENCHMARK(BM_Study)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
