#include "elastic/cli/csv.hpp"

#include "elastic/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace elastic::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      cells.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw InvalidArgument("line " + std::to_string(line_no) + ": unterminated quoted field");
  cells.push_back(was_quoted ? cur : trim(cur));
  return cells;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN"; }

std::optional<double> parse_double(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t require_column(const CsvTable& t, const std::string& name) {
  const auto c = t.column(name);
  if (!c) throw InvalidArgument("line 1: required column '" + name + "' not found in header");
  return *c;
}

}  // namespace

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, line_no);
    if (t.header.empty()) {
      t.header = std::move(cells);
      for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i].empty()) throw InvalidArgument("line " + std::to_string(line_no) + ": empty column name");
        if (std::count(t.header.begin(), t.header.end(), t.header[i]) > 1) {
          throw InvalidArgument("line " + std::to_string(line_no) + ": duplicate column '" + t.header[i] + "'");
        }
      }
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw InvalidArgument("CSV input is empty (no header line)");
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open data file '" + path + "'");
  return parse_csv(in);
}

std::string csv_escape(const std::string& cell) {
  const bool needs = cell.find_first_of(",\"\n") != std::string::npos ||
                     (!cell.empty() && (cell.front() == ' ' || cell.back() == ' '));
  if (!needs) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  const auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(cells[i]);
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }
  return std::string(buf, ptr);
}

LoadedDataset load_dataset(const CsvTable& table, const DatasetSpec& spec) {
  const std::size_t c_source = require_column(table, "source");
  const std::size_t c_treat = require_column(table, "treatment");
  const std::size_t c_out = require_column(table, "outcome");
  std::vector<std::size_t> c_cov;
  for (const auto& name : spec.covariates) c_cov.push_back(require_column(table, name));
  std::optional<std::size_t> c_prop;
  if (spec.propensity_column) c_prop = require_column(table, *spec.propensity_column);

  std::vector<std::size_t> z_index{0};
  std::vector<std::string> z_names{"(intercept)"};
  for (const auto& name : spec.effect_modifiers) {
    const auto it = std::find(spec.covariates.begin(), spec.covariates.end(), name);
    if (it == spec.covariates.end()) {
      throw InvalidArgument("effect modifier '" + name + "' is not among the covariates");
    }
    z_index.push_back(1 + static_cast<std::size_t>(it - spec.covariates.begin()));
    z_names.push_back(name);
  }
  {
    auto sorted = z_index;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("effect modifiers contain duplicates");
    }
    if (sorted != z_index) throw InvalidArgument("effect modifiers must follow the covariate order");
  }

  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;
  std::vector<std::string> rejections;
  std::vector<AffineMap> standardization;
  std::vector<Record> records;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = "line " + std::to_string(table.line_numbers[i]);
    ++rows_read;

    std::string missing;
    for (std::size_t c : std::vector<std::size_t>{c_source, c_treat, c_out}) {
      if (is_missing(row[c])) missing = table.header[c];
    }
    for (std::size_t c : c_cov) {
      if (is_missing(row[c])) missing = table.header[c];
    }
    if (missing.empty() && c_prop && row[c_source] == "rt" && is_missing(row[*c_prop])) missing = table.header[*c_prop];
    if (!missing.empty()) {
      ++rows_rejected;
      rejections.push_back(where + ": missing value in '" + missing + "'");
      continue;
    }

    Record r;
    if (row[c_source] == "rt") {
      r.source = Source::Trial;
    } else if (row[c_source] == "rw") {
      r.source = Source::RealWorld;
    } else {
      throw InvalidArgument(where + ": source must be 'rt' or 'rw', got '" + row[c_source] + "'");
    }
    if (row[c_treat] == "0") {
      r.treatment = 0;
    } else if (row[c_treat] == "1") {
      r.treatment = 1;
    } else {
      throw InvalidArgument(where + ": treatment must be 0 or 1, got '" + row[c_treat] + "'");
    }
    const auto y = parse_double(row[c_out]);
    if (!y) throw InvalidArgument(where + ": outcome '" + row[c_out] + "' is not a finite number");
    r.outcome = *y;
    r.covariates.resize(static_cast<Eigen::Index>(1 + c_cov.size()));
    r.covariates[0] = 1.0;
    for (std::size_t k = 0; k < c_cov.size(); ++k) {
      const auto v = parse_double(row[c_cov[k]]);
      if (!v) {
        throw InvalidArgument(where + ": covariate '" + table.header[c_cov[k]] + "' value '" + row[c_cov[k]] +
                              "' is not a finite number");
      }
      r.covariates[static_cast<Eigen::Index>(k + 1)] = *v;
    }
    if (c_prop && r.is_trial()) {
      const auto e = parse_double(row[*c_prop]);
      if (!e || !(*e > 0.0 && *e < 1.0)) {
        throw InvalidArgument(where + ": trial propensity must lie in (0, 1), got '" + row[*c_prop] + "'");
      }
      r.trial_propensity = *e;
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw InvalidArgument("no usable rows in the data file");

  for (const auto& name : spec.standardize) {
    const auto it = std::find(spec.covariates.begin(), spec.covariates.end(), name);
    if (it == spec.covariates.end()) throw InvalidArgument("cannot standardize unknown covariate '" + name + "'");
    const auto k = static_cast<Eigen::Index>(1 + (it - spec.covariates.begin()));
    double mean = 0.0;
    for (const auto& r : records) mean += r.covariates[k];
    mean /= static_cast<double>(records.size());
    double ss = 0.0;
    for (const auto& r : records) ss += (r.covariates[k] - mean) * (r.covariates[k] - mean);
    const double sd = records.size() > 1 ? std::sqrt(ss / static_cast<double>(records.size() - 1)) : 0.0;
    if (!(sd > 0.0)) throw InvalidArgument("cannot standardize constant covariate '" + name + "'");
    for (auto& r : records) r.covariates[k] = (r.covariates[k] - mean) / sd;
    standardization.push_back({name, mean, sd});
  }

  return LoadedDataset{CombinedSample(std::move(records), z_index), std::move(z_names), std::move(standardization),
                       rows_read, rows_rejected, std::move(rejections)};
}

CsvTable dataset_table(const CombinedSample& sample, const std::vector<std::string>& covariate_names) {
  if (covariate_names.size() + 1 != sample.dim_x()) {
    throw InvalidArgument("covariate names do not match the sample's covariate dimension");
  }
  CsvTable t;
  t.header = {"source", "treatment", "outcome"};
  t.header.insert(t.header.end(), covariate_names.begin(), covariate_names.end());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Record& r = sample[i];
    std::vector<std::string> row{r.is_trial() ? "rt" : "rw", std::to_string(r.treatment), format_double(r.outcome)};
    for (Eigen::Index k = 1; k < r.covariates.size(); ++k) row.push_back(format_double(r.covariates[k]));
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(i + 2);
  }
  return t;
}

}  // namespace elastic::cli
