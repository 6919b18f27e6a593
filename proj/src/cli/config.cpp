#include "elastic/cli/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace elastic::cli {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string out = "invalid configuration:";
  for (const auto& s : v) out += "\n  " + s;
  return out;
}

// Collects problems while walking the document.
class Reader {
 public:
  std::vector<std::string> problems;

  void allow_keys(const json& obj, const std::string& path, const std::set<std::string>& keys) {
    if (!obj.is_object()) {
      problems.push_back(path + ": expected an object");
      return;
    }
    for (const auto& [k, _] : obj.items()) {
      if (!keys.count(k)) problems.push_back(path + "/" + k + ": unknown key");
    }
  }

  const json* child(const json& obj, const std::string& key) {
    if (!obj.is_object()) return nullptr;
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  void number(const json& obj, const std::string& path, const std::string& key, double& out, double lo, double hi,
              bool open_lo = false, bool open_hi = false) {
    const json* v = child(obj, key);
    if (!v) return;
    if (!v->is_number()) {
      problems.push_back(path + "/" + key + ": expected a number");
      return;
    }
    const double x = v->get<double>();
    const bool ok = (open_lo ? x > lo : x >= lo) && (open_hi ? x < hi : x <= hi);
    if (!ok) {
      problems.push_back(path + "/" + key + ": value " + v->dump() + " out of range " + (open_lo ? "(" : "[") +
                         std::to_string(lo) + ", " + std::to_string(hi) + (open_hi ? ")" : "]"));
      return;
    }
    out = x;
  }

  template <class UInt>
  void count(const json& obj, const std::string& path, const std::string& key, UInt& out, UInt min_value) {
    const json* v = child(obj, key);
    if (!v) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
      problems.push_back(path + "/" + key + ": expected a non-negative integer");
      return;
    }
    const auto x = v->get<unsigned long long>();
    if (x < min_value) {
      problems.push_back(path + "/" + key + ": must be >= " + std::to_string(min_value));
      return;
    }
    out = static_cast<UInt>(x);
  }

  void boolean(const json& obj, const std::string& path, const std::string& key, bool& out) {
    const json* v = child(obj, key);
    if (!v) return;
    if (!v->is_boolean()) {
      problems.push_back(path + "/" + key + ": expected true or false");
      return;
    }
    out = v->get<bool>();
  }

  void string(const json& obj, const std::string& path, const std::string& key, std::string& out) {
    const json* v = child(obj, key);
    if (!v) return;
    if (!v->is_string()) {
      problems.push_back(path + "/" + key + ": expected a string");
      return;
    }
    out = v->get<std::string>();
  }

  void strings(const json& obj, const std::string& path, const std::string& key, std::vector<std::string>& out) {
    const json* v = child(obj, key);
    if (!v) return;
    if (!v->is_array()) {
      problems.push_back(path + "/" + key + ": expected an array of strings");
      return;
    }
    std::vector<std::string> tmp;
    for (const auto& e : *v) {
      if (!e.is_string()) {
        problems.push_back(path + "/" + key + ": expected an array of strings");
        return;
      }
      tmp.push_back(e.get<std::string>());
    }
    out = std::move(tmp);
  }

  void numbers(const json& obj, const std::string& path, const std::string& key, std::vector<double>& out, double lo,
               double hi, bool open, bool nonempty = true) {
    const json* v = child(obj, key);
    if (!v) return;
    std::vector<double> tmp;
    if (!v->is_array()) {
      problems.push_back(path + "/" + key + ": expected an array of numbers");
      return;
    }
    for (const auto& e : *v) {
      if (!e.is_number()) {
        problems.push_back(path + "/" + key + ": expected an array of numbers");
        return;
      }
      const double x = e.get<double>();
      if (open ? !(x > lo && x < hi) : !(x >= lo && x <= hi)) {
        problems.push_back(path + "/" + key + ": value " + e.dump() + " out of range");
        return;
      }
      tmp.push_back(x);
    }
    if (nonempty && tmp.empty()) {
      problems.push_back(path + "/" + key + ": must not be empty");
      return;
    }
    out = std::move(tmp);
  }

  void matrix(const json& obj, const std::string& path, const std::string& key,
              std::vector<std::vector<double>>& out) {
    const json* v = child(obj, key);
    if (!v) return;
    std::vector<std::vector<double>> tmp;
    bool ok = v->is_array() && !v->empty();
    if (ok) {
      for (const auto& row : *v) {
        if (!row.is_array() || row.size() != v->size()) {
          ok = false;
          break;
        }
        std::vector<double> r;
        for (const auto& e : row) {
          if (!e.is_number()) {
            ok = false;
            break;
          }
          r.push_back(e.get<double>());
        }
        tmp.push_back(std::move(r));
      }
    }
    if (!ok) {
      problems.push_back(path + "/" + key + ": expected a non-empty square matrix (array of numeric rows)");
      return;
    }
    out = std::move(tmp);
  }
};

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : InvalidArgument(join_lines(problems)), problems_(problems) {}

std::optional<double> parse_gamma_flag(const std::string& value) {
  if (value == "adaptive") return std::nullopt;
  double g = 0.0;
  try {
    std::size_t used = 0;
    g = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw InvalidArgument("--gamma must be 'adaptive' or a number in (0, 1), got '" + value + "'");
  }
  if (!(g > 0.0 && g < 1.0)) throw InvalidArgument("--gamma must lie in (0, 1), got '" + value + "'");
  return g;
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("parse error: ") + e.what()});
  }
  Reader rd;
  RunConfig cfg;
  rd.allow_keys(doc, "", {"model", "covariates", "nuisance", "trial", "gate", "ci", "standardize", "seed", "output",
                          "study", "mixture"});
  if (!rd.problems.empty() && !doc.is_object()) throw ConfigError(rd.problems);

  if (const json* m = rd.child(doc, "model")) {
    rd.allow_keys(*m, "/model", {"kind", "effect_modifiers"});
    std::string kind = "linear";
    rd.string(*m, "/model", "kind", kind);
    if (kind == "linear") {
      cfg.kind = HteKind::Linear;
    } else if (kind == "risk_difference") {
      cfg.kind = HteKind::RiskDifference;
    } else {
      rd.problems.push_back("/model/kind: expected \"linear\" or \"risk_difference\", got \"" + kind + "\"");
    }
    rd.strings(*m, "/model", "effect_modifiers", cfg.effect_modifiers);
  }
  rd.strings(doc, "", "covariates", cfg.covariates);

  if (const json* n = rd.child(doc, "nuisance")) {
    rd.allow_keys(*n, "/nuisance", {"basis", "variance"});
    if (const json* b = rd.child(*n, "basis")) {
      rd.allow_keys(*b, "/nuisance/basis", {"squares", "interactions"});
      rd.boolean(*b, "/nuisance/basis", "squares", cfg.basis.include_squares);
      rd.boolean(*b, "/nuisance/basis", "interactions", cfg.basis.include_pairwise_interactions);
    }
    std::string var = "auto";
    rd.string(*n, "/nuisance", "variance", var);
    if (var == "auto") {
      cfg.variance = VarianceModel::Auto;
    } else if (var == "constant") {
      cfg.variance = VarianceModel::StratumConstant;
    } else if (var == "bernoulli") {
      cfg.variance = VarianceModel::Bernoulli;
    } else {
      rd.problems.push_back("/nuisance/variance: expected \"auto\", \"constant\" or \"bernoulli\"");
    }
  }

  if (const json* t = rd.child(doc, "trial")) {
    rd.allow_keys(*t, "/trial", {"propensity"});
    if (const json* e = rd.child(*t, "propensity")) {
      if (e->is_number()) {
        double v = 0.5;
        rd.number(*t, "/trial", "propensity", v, 0.0, 1.0, true, true);
        cfg.trial_propensity = v;
      } else if (e->is_string()) {
        cfg.trial_propensity = e->get<std::string>();
      } else {
        rd.problems.push_back("/trial/propensity: expected a number in (0, 1) or a column name");
      }
    }
  }

  if (const json* g = rd.child(doc, "gate")) {
    rd.allow_keys(*g, "/gate", {"gamma", "grid", "report_gammas"});
    if (const json* v = rd.child(*g, "gamma")) {
      if (v->is_string() && v->get<std::string>() == "adaptive") {
        cfg.gamma.reset();
      } else if (v->is_number()) {
        double x = 0.05;
        rd.number(*g, "/gate", "gamma", x, 0.0, 1.0, true, true);
        cfg.gamma = x;
      } else {
        rd.problems.push_back("/gate/gamma: expected \"adaptive\" or a number in (0, 1)");
      }
    }
    rd.numbers(*g, "/gate", "grid", cfg.gamma_grid, 0.0, 1.0, true);
    rd.numbers(*g, "/gate", "report_gammas", cfg.report_gammas, 0.0, 1.0, true);
  }

  if (const json* c = rd.child(doc, "ci")) {
    rd.allow_keys(*c, "/ci", {"alpha", "M", "L"});
    rd.number(*c, "/ci", "alpha", cfg.alpha, 0.0, 1.0, true, true);
    rd.count(*c, "/ci", "M", cfg.ci_draws, std::size_t{2});
    rd.count(*c, "/ci", "L", cfg.ci_eta_points, std::size_t{2});
  }

  rd.strings(doc, "", "standardize", cfg.standardize);
  rd.count(doc, "", "seed", cfg.seed, std::uint64_t{0});

  if (const json* o = rd.child(doc, "output")) {
    rd.allow_keys(*o, "/output", {"dir"});
    rd.string(*o, "/output", "dir", cfg.output_dir);
  }

  if (const json* s = rd.child(doc, "study")) {
    const std::string p = "/study";
    rd.allow_keys(*s, p, {"b_grid", "reps", "bootstrap_reps", "population_size", "rw_sample_size", "omit_x3",
                          "write_replications"});
    rd.numbers(*s, p, "b_grid", cfg.study.b_grid, -1e6, 1e6, false);
    rd.count(*s, p, "reps", cfg.study.reps, std::size_t{1});
    rd.count(*s, p, "bootstrap_reps", cfg.study.bootstrap_reps, std::size_t{2});
    rd.count(*s, p, "population_size", cfg.study.population_size, std::size_t{1});
    rd.count(*s, p, "rw_sample_size", cfg.study.rw_sample_size, std::size_t{1});
    rd.boolean(*s, p, "omit_x3", cfg.study.omit_x3);
    rd.boolean(*s, p, "write_replications", cfg.study.write_replications);
    if (cfg.study.population_size < cfg.study.rw_sample_size) {
      rd.problems.push_back("/study/population_size: must be >= rw_sample_size");
    }
  }

  if (const json* mx = rd.child(doc, "mixture")) {
    const std::string p = "/mixture";
    MixtureSection& m = cfg.mixture;
    rd.allow_keys(*mx, p, {"p", "i_rt", "i_rw", "rho", "gamma", "eta", "M", "density_points"});
    rd.count(*mx, p, "p", m.p, std::size_t{1});
    rd.matrix(*mx, p, "i_rt", m.i_rt);
    rd.matrix(*mx, p, "i_rw", m.i_rw);
    rd.number(*mx, p, "rho", m.rho, 0.0, 1e12, true);
    if (const json* g = rd.child(*mx, "gamma")) {
      if (g->is_number()) {
        double x = 0.8;
        rd.number(*mx, p, "gamma", x, 0.0, 1.0);
        m.gammas = {x};
      } else {
        rd.numbers(*mx, p, "gamma", m.gammas, 0.0, 1.0, false);
      }
    }
    rd.numbers(*mx, p, "eta", m.eta, -1e12, 1e12, false);
    rd.count(*mx, p, "M", m.draws, std::size_t{2});
    rd.count(*mx, p, "density_points", m.density_points, std::size_t{2});
    if (m.i_rt.size() != m.p || m.i_rw.size() != m.p || m.eta.size() != m.p) {
      rd.problems.push_back(p + ": i_rt, i_rw and eta must all have dimension p = " + std::to_string(m.p));
    }
  }

  if (!rd.problems.empty()) throw ConfigError(rd.problems);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace elastic::cli
