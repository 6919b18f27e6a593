#pragma once

#include "elastic/cli/config.hpp"

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>

namespace elastic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// Command-line overrides layered on top of the configuration file.
struct CommandOptions {
  std::optional<std::string> data;
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> reps;
  std::optional<std::string> gamma;
  std::optional<double> alpha;
};

/// Each command writes its report files and returns kExitOk; failures are
/// thrown and mapped by exit_code_for.
int cmd_estimate(const CommandOptions& opts, std::ostream& log);
int cmd_simulate(const CommandOptions& opts, std::ostream& log);
int cmd_mixture(const CommandOptions& opts, std::ostream& log);
int cmd_gate(const CommandOptions& opts, std::ostream& log);

/// 2 for input, configuration and precondition errors; 3 for numerical
/// failures (convergence, singular information, infeasible truncation,
/// degenerate closed forms).
int exit_code_for(const std::exception& e);

/// Thread count: flag, else ELASTIC_HTE_THREADS, else all cores.
int resolve_threads(std::optional<int> flag);

}  // namespace elastic::cli
