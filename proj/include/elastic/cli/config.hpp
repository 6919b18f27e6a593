#pragma once

#include "elastic/errors.hpp"
#include "elastic/model.hpp"
#include "elastic/nuisance.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace elastic::cli {

/// Schema violations in a configuration file; what() lists every problem,
/// one per line, prefixed by its JSON path (or the parse position).
class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(const std::vector<std::string>& problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct StudySection {
  std::vector<double> b_grid{0.10, 0.17, 0.29, 0.51, 0.89, 1.54, 2.69};
  std::size_t reps = 500;
  std::size_t bootstrap_reps = 100;
  std::size_t population_size = 100000;
  std::size_t rw_sample_size = 1000;
  bool omit_x3 = true;
  bool write_replications = true;
};

struct MixtureSection {
  std::size_t p = 1;
  std::vector<std::vector<double>> i_rt{{1.0}};
  std::vector<std::vector<double>> i_rw{{1.0}};
  double rho = 1.0;
  /// One or more gamma values in [0, 1] (a sweep writes one block each).
  std::vector<double> gammas{0.8};
  std::vector<double> eta{0.0};
  std::size_t draws = 100000;
  std::size_t density_points = 201;
};

struct RunConfig {
  HteKind kind = HteKind::Linear;
  /// Covariate columns in X order; empty = every column except source,
  /// treatment, outcome and a propensity column.
  std::vector<std::string> covariates;
  std::vector<std::string> effect_modifiers;
  BasisSpec basis;
  VarianceModel variance = VarianceModel::Auto;
  /// Constant e1 or the name of a per-row propensity column.
  std::variant<double, std::string> trial_propensity = 0.5;
  /// nullopt = adaptive selection over gamma_grid.
  std::optional<double> gamma;
  std::vector<double> gamma_grid;
  /// gamma values tabulated by the gate command.
  std::vector<double> report_gammas{0.01, 0.05, 0.10, 0.20, 0.50};
  double alpha = 0.05;
  std::size_t ci_draws = 100000;
  std::size_t ci_eta_points = 200;
  std::vector<std::string> standardize;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  StudySection study;
  MixtureSection mixture;
};

/// Parses and validates JSON configuration text. Unknown keys, wrong types
/// and out-of-range values are all collected before throwing ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Parses a --gamma flag value: "adaptive" or a number in (0, 1).
std::optional<double> parse_gamma_flag(const std::string& value);

}  // namespace elastic::cli
