#pragma once

#include "elastic/model.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace elastic::cli {

/// Parsed CSV: header plus string cells, with the 1-based file line of
/// every row kept for diagnostics.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Column position, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

/// RFC 4180 subset: comma separated, optional double quotes with "" escapes,
/// no embedded newlines. Blank lines are skipped. Throws InvalidArgument
/// with the line number on ragged rows.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

/// Quotes a cell only when it contains a comma, quote or surrounding space.
std::string csv_escape(const std::string& cell);
void write_csv(std::ostream& out, const CsvTable& table);

/// Shortest round-trip decimal form of a double ("nan", "inf" for specials).
std::string format_double(double v);

struct DatasetSpec {
  /// Covariate columns in X order (the intercept is prepended).
  std::vector<std::string> covariates;
  /// Effect modifiers (subset of covariates; the intercept is always first).
  std::vector<std::string> effect_modifiers;
  /// Per-record trial propensity column, if any.
  std::optional<std::string> propensity_column;
  /// Covariates to standardize to mean 0, SD 1 (over all accepted rows).
  std::vector<std::string> standardize;
};

struct AffineMap {
  std::string column;
  double mean = 0.0;
  double sd = 1.0;  // standardized = (raw - mean) / sd
};

struct LoadedDataset {
  CombinedSample sample;
  std::vector<std::string> z_names;  // "(intercept)", then effect modifiers
  std::vector<AffineMap> standardization;
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;
  std::vector<std::string> rejections;  // "line N: reason"
};

/// Builds records from a table with columns source ("rt"/"rw"), treatment
/// (0/1), outcome and the listed covariates. Rows with missing or
/// unparseable required values are rejected and counted; structural
/// problems (missing columns, unknown names, invalid source or treatment
/// codes) raise InvalidArgument with line numbers.
LoadedDataset load_dataset(const CsvTable& table, const DatasetSpec& spec);

/// Serializes a sample back to the dataset layout (for round trips and for
/// exporting simulated data).
CsvTable dataset_table(const CombinedSample& sample, const std::vector<std::string>& covariate_names);

}  // namespace elastic::cli
