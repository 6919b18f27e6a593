#include "elastic/cli/commands.hpp"
#include "elastic/errors.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <iostream>

namespace {

using elastic::cli::CommandOptions;

void add_common(CLI::App* cmd, CommandOptions& o, bool needs_data) {
  if (needs_data) cmd->add_option("--data", o.data, "Input CSV (source, treatment, outcome, covariates)");
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--out", o.out, "Output directory (overrides output.dir)");
  cmd->add_option("--seed", o.seed, "Random seed (overrides config seed)");
  cmd->add_option("--threads", o.threads, "Worker threads (overrides ELASTIC_HTE_THREADS)");
  cmd->add_option("--reps", o.reps, "Monte Carlo replications (simulate)");
  cmd->add_option("--gamma", o.gamma, "Gate level: 'adaptive' or a value in (0, 1)");
  cmd->add_option("--alpha", o.alpha, "1 - confidence level");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elastic integrative estimation of heterogeneous treatment effects"};
  app.require_subcommand(1);
  CommandOptions opts;
  auto* estimate = app.add_subcommand("estimate", "Estimate rt / eff / elastic HTE parameters from a CSV");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study over confounding strengths");
  auto* mixture = app.add_subcommand("mixture", "Sample the elastic estimator's limiting mixture law");
  auto* gate = app.add_subcommand("gate", "Test statistic and gate decisions for a data set");
  add_common(estimate, opts, true);
  add_common(simulate, opts, false);
  add_common(mixture, opts, false);
  add_common(gate, opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : elastic::cli::kExitInput;
  }

  try {
    omp_set_num_threads(elastic::cli::resolve_threads(opts.threads));
    if (estimate->parsed()) return elastic::cli::cmd_estimate(opts, std::cerr);
    if (simulate->parsed()) return elastic::cli::cmd_simulate(opts, std::cerr);
    if (mixture->parsed()) return elastic::cli::cmd_mixture(opts, std::cerr);
    return elastic::cli::cmd_gate(opts, std::cerr);
  } catch (const elastic::ConvergenceFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.last_iterate().size() > 0) std::cerr << "last iterate: " << e.last_iterate().transpose() << "\n";
    return elastic::cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return elastic::cli::exit_code_for(e);
  }
}
