#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splr/bench.hpp"

namespace splr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* version = "1.0.0";
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_failure = 3;

/// Bad command line, config file or input table. Maps to exit code 2.
class config_error : public error {
public:
  using error::error;
};

// ---------------------------------------------------------------------------
// text i/o

/// 17 significant digits; nan and inf spelled out.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data() + (t[0] == '+' ? 1 : 0);
  const auto res = std::from_chars(first, t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

/// Comma-separated numbers, one sample per line. A first line that does not
/// parse is taken as a header. Blank lines are ignored.
inline matrix read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path.string() + ": cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw config_error(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + trim(cell) + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw config_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw config_error(path.string() + ": no data rows");
  matrix m(static_cast<index_t>(rows.size()), static_cast<index_t>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<index_t>(i), static_cast<index_t>(k)) = rows[i][k];
  return m;
}

/// Writes through a temporary file and a rename so readers never see a partial file.
inline void write_atomically(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw error(tmp.string() + ": cannot write");
    out << text;
    if (!out) throw error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

/// Rows of json scalars. Numbers print with 17 digits in csv, null as nan.
struct table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  std::string csv() const {
    std::string s;
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
    s += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) s += ",";
        const auto& v = r[i];
        if (v.is_string()) s += v.get<std::string>();
        else if (v.is_number_integer()) s += std::to_string(v.get<long long>());
        else if (v.is_number()) s += number(v.get<double>());
        else if (v.is_boolean()) s += v.get<bool>() ? "true" : "false";
        else s += "nan";
      }
      s += "\n";
    }
    return s;
  }

  json to_json() const {
    json out = json::array();
    for (const auto& r : rows) {
      json o = json::object();
      for (std::size_t i = 0; i < r.size(); ++i) {
        const auto& v = r[i];
        o[columns[i]] = v.is_number_float() && !std::isfinite(v.get<double>()) ? json(nullptr) : v;
      }
      out.push_back(std::move(o));
    }
    return out;
  }

  std::string render(const std::string& format) const { return format == "json" ? to_json().dump(1) + "\n" : csv(); }
};

// ---------------------------------------------------------------------------
// config

struct run_config {
  json echo;                   // the config as run, with resolved seed and absolute paths
  benchmark_function function; // analytic benchmark or tabulated samples
  std::string function_label;
  tensor_basis basis;
  index_t samples = 0;
  greedy_config greedy;
  bool select_rank = true;
  index_t validation_samples = 1000;
  std::uint64_t seed = 1;
  std::size_t repetitions = 11;
};

namespace detail {

inline const json* find(const json& j, const std::string& key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline long long integer(const json& j, const std::string& key, const std::string& where, long long fallback,
                         long long min) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) throw config_error(where + "/" + key + ": expected an integer");
  const auto x = v->get<long long>();
  if (x < min) throw config_error(where + "/" + key + ": must be >= " + std::to_string(min));
  return x;
}

inline double real(const json& j, const std::string& key, const std::string& where, double fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw config_error(where + "/" + key + ": expected a number");
  return v->get<double>();
}

inline bool boolean(const json& j, const std::string& key, const std::string& where, bool fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw config_error(where + "/" + key + ": expected true or false");
  return v->get<bool>();
}

inline std::string choice(const json& j, const std::string& key, const std::string& where, const std::string& fallback,
                          const std::vector<std::string>& allowed) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) throw config_error(where + "/" + key + ": expected a string");
  const auto s = v->get<std::string>();
  if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw config_error(where + "/" + key + ": '" + s + "' is not one of " + list);
  }
  return s;
}

inline void known_keys(const json& j, const std::string& where, const std::vector<std::string>& keys) {
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw config_error(where + "/" + k + ": unknown key");
}

inline regularization parse_backend(const std::string& s) {
  if (s == "ols") return regularization::ols;
  if (s == "l2_cv") return regularization::l2_cv;
  return regularization::l1_loo;
}

inline update_mode parse_update(const std::string& s) {
  if (s == "ols") return update_mode::ols;
  if (s == "none") return update_mode::none;
  return update_mode::l1_loo;
}

inline benchmark_function parse_function(json& jf, const fs::path& base_dir) {
  if (jf.is_string()) {
    try {
      return benchmark_function::by_name(jf.get<std::string>());
    } catch (const invalid_argument& e) {
      throw config_error(std::string("/function: ") + e.what());
    }
  }
  if (!jf.is_object()) throw config_error("/function: expected a benchmark name or an object");
  known_keys(jf, "/function", {"name", "csv", "domain"});
  if (const json* name = find(jf, "name")) {
    if (find(jf, "csv")) throw config_error("/function: give either name or csv, not both");
    if (!name->is_string()) throw config_error("/function/name: expected a string");
    try {
      return benchmark_function::by_name(name->get<std::string>());
    } catch (const invalid_argument& e) {
      throw config_error(std::string("/function/name: ") + e.what());
    }
  }
  const json* csv = find(jf, "csv");
  if (!csv || !csv->is_string()) throw config_error("/function: needs a benchmark name or a csv path");
  fs::path path = csv->get<std::string>();
  if (path.is_relative()) path = base_dir / path;
  if (!fs::exists(path)) throw config_error("/function/csv: file not found: " + path.string());
  jf["csv"] = fs::absolute(path).lexically_normal().string();
  const matrix m = read_csv(path);
  if (m.cols() < 2) throw config_error("/function/csv: need at least one input column and the value column");
  sample_set rows;
  rows.points = m.leftCols(m.cols() - 1);
  rows.values = vector(m.col(m.cols() - 1));
  std::vector<interval> domain;
  if (const json* jd = find(jf, "domain")) {
    if (!jd->is_array()) throw config_error("/function/domain: expected an array of [lower, upper] pairs");
    for (std::size_t k = 0; k < jd->size(); ++k) {
      const auto& p = (*jd)[k];
      const std::string w = "/function/domain/" + std::to_string(k);
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw config_error(w + ": expected [lower, upper]");
      if (!(p[0].get<double>() < p[1].get<double>())) throw config_error(w + ": lower must be < upper");
      domain.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  }
  try {
    return benchmark_function::custom(std::move(rows), std::move(domain));
  } catch (const invalid_argument& e) {
    throw config_error(std::string("/function: ") + e.what());
  }
}

inline tensor_basis parse_basis(const json& jb, const benchmark_function& f) {
  const auto d = static_cast<std::size_t>(f.dimension());
  std::vector<json> entries;
  if (jb.is_object()) entries.assign(d, jb);
  else if (jb.is_array()) {
    if (jb.size() != d)
      throw config_error("/basis: expected " + std::to_string(d) + " entries (one per dimension), got " +
                         std::to_string(jb.size()));
    entries.assign(jb.begin(), jb.end());
  } else {
    throw config_error("/basis: expected an object or an array of objects");
  }
  std::vector<univariate_basis> factors;
  for (std::size_t k = 0; k < d; ++k) {
    json e = entries[k];
    const std::string where = jb.is_array() ? "/basis/" + std::to_string(k) : "/basis";
    if (!e.is_object()) throw config_error(where + ": expected an object");
    known_keys(e, where, {"kind", "degree", "pieces", "levels", "lower", "upper"});
    // bounds default to the function's interval in that dimension
    if (!e.contains("lower")) e["lower"] = f.domain[k].lower;
    if (!e.contains("upper")) e["upper"] = f.domain[k].upper;
    try {
      factors.push_back(basis_from_json(e, where));
    } catch (const malformed_document& ex) {
      throw config_error(ex.what());
    }
  }
  return tensor_basis(std::move(factors));
}

} // namespace detail

/// Builds a run from a parsed config document. Relative csv paths resolve
/// against `base_dir`.
inline run_config parse_config(json j, const fs::path& base_dir = ".") {
  if (!j.is_object()) throw config_error("/: expected an object");
  detail::known_keys(j, "", {"function", "basis", "samples", "max_rank", "als", "update", "cv_folds", "cv_seed",
                              "select_rank", "validation_samples", "seed", "repetitions", "grid", "path"});
  run_config c;
  if (!j.contains("function")) throw config_error("/function: missing");
  c.function = detail::parse_function(j["function"], base_dir);
  c.function_label = c.function.kind == benchmark_kind::custom ? "csv" : to_string(c.function.kind);
  if (!j.contains("basis")) throw config_error("/basis: missing");
  c.basis = detail::parse_basis(j["basis"], c.function);

  auto& g = c.greedy;
  g.max_rank = static_cast<int>(detail::integer(j, "max_rank", "", 10, 1));
  g.update = detail::parse_update(detail::choice(j, "update", "", "l1_loo", {"l1_loo", "ols", "none"}));
  g.cv_folds = static_cast<int>(detail::integer(j, "cv_folds", "", 3, 2));
  g.cv_seed = static_cast<std::uint64_t>(detail::integer(j, "cv_seed", "", 0, 0));
  if (const json* ja = detail::find(j, "als")) {
    if (!ja->is_object()) throw config_error("/als: expected an object");
    detail::known_keys(*ja, "/als", {"backend", "max_sweeps", "stagnation_tol", "rule", "residual_tol", "init", "seed",
                                     "ridge_folds"});
    g.als.backend = detail::parse_backend(detail::choice(*ja, "backend", "/als", "l1_loo", {"l1_loo", "l2_cv", "ols"}));
    g.als.max_sweeps = static_cast<int>(detail::integer(*ja, "max_sweeps", "/als", 10, 1));
    g.als.stagnation_tol = detail::real(*ja, "stagnation_tol", "/als", 1e-6);
    if (!(g.als.stagnation_tol > 0.0)) throw config_error("/als/stagnation_tol: must be > 0");
    g.als.rule = detail::choice(*ja, "rule", "/als", "stagnation", {"stagnation", "residual"}) == "residual"
                     ? stopping_rule::residual
                     : stopping_rule::stagnation;
    g.als.residual_tol = detail::real(*ja, "residual_tol", "/als", 0.0);
    g.als.init = detail::choice(*ja, "init", "/als", "correlated", {"correlated", "first_basis"}) == "first_basis"
                     ? factor_init::first_basis
                     : factor_init::correlated;
    g.als.seed = static_cast<std::uint64_t>(detail::integer(*ja, "seed", "/als", 0, 0));
    g.als.ridge_folds = static_cast<int>(detail::integer(*ja, "ridge_folds", "/als", 5, 2));
  }
  c.select_rank = detail::boolean(j, "select_rank", "", true);
  c.validation_samples = static_cast<index_t>(detail::integer(j, "validation_samples", "", 1000, 1));
  c.seed = static_cast<std::uint64_t>(detail::integer(j, "seed", "", 1, 0));
  c.repetitions = static_cast<std::size_t>(detail::integer(j, "repetitions", "", 11, 1));

  const json* js = detail::find(j, "samples");
  if (!js) {
    if (c.function.kind != benchmark_kind::custom) throw config_error("/samples: missing");
    c.samples = c.function.table->size();
  } else if (js->is_number_integer()) {
    c.samples = static_cast<index_t>(detail::integer(j, "samples", "", 0, 2));
  } else if (js->is_object()) {
    // Q = c d m (p + 1)^alpha with p + 1 the largest univariate basis size and m = max_rank
    detail::known_keys(*js, "/samples", {"c", "alpha"});
    const double cc = detail::real(*js, "c", "/samples", 1.0);
    const int alpha = static_cast<int>(detail::integer(*js, "alpha", "/samples", 2, 1));
    index_t n = 1;
    for (const auto& b : c.basis.factors()) n = std::max(n, b.size());
    try {
      c.samples = sample_rule(cc, c.basis.dimension(), g.max_rank, n - 1, alpha);
    } catch (const invalid_argument& e) {
      throw config_error(std::string("/samples: ") + e.what());
    }
  } else {
    throw config_error("/samples: expected an integer or {\"c\": .., \"alpha\": ..}");
  }
  if (c.select_rank && c.samples < 2 * g.cv_folds)
    throw config_error("/samples: rank selection needs at least 2 * cv_folds samples");
  c.echo = std::move(j);
  c.echo["seed"] = c.seed;
  return c;
}

/// Parses config text; syntax errors report line and column.
inline json parse_config_text(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw config_error(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

inline json load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

/// Expands `grid` (key -> list of values) into one config per cell, in
/// row-major order over the keys. Without a grid the config is its own cell.
inline std::vector<json> expand_grid(const json& config, std::vector<std::string>& keys) {
  keys.clear();
  const json* grid = detail::find(config, "grid");
  json base = config;
  base.erase("grid");
  if (!grid) return {base};
  if (!grid->is_object() || grid->empty()) throw config_error("/grid: empty grid");
  static const std::vector<std::string> allowed = {"degree", "pieces", "levels", "samples", "c",
                                                   "alpha",  "max_rank", "backend", "update"};
  for (const auto& [k, v] : grid->items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) throw config_error("/grid/" + k + ": unknown key");
    if (!v.is_array() || v.empty()) throw config_error("/grid/" + k + ": empty grid");
    keys.push_back(k);
  }
  std::vector<json> cells;
  std::vector<std::size_t> idx(keys.size(), 0);
  for (;;) {
    json cell = base;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const auto& key = keys[i];
      const json& value = (*grid)[key][idx[i]];
      if (key == "degree" || key == "pieces" || key == "levels") {
        if (!cell.contains("basis")) throw config_error("/basis: missing");
        auto& b = cell["basis"];
        if (b.is_array())
          for (auto& e : b) e[key] = value;
        else
          b[key] = value;
      } else if (key == "c" || key == "alpha") {
        if (!cell.contains("samples") || !cell["samples"].is_object()) cell["samples"] = json::object();
        cell["samples"][key] = value;
      } else if (key == "backend") {
        cell["als"][key] = value;
      } else {
        cell[key] = value;
      }
    }
    cells.push_back(std::move(cell));
    std::size_t i = keys.size();
    while (i > 0) {
      --i;
      if (++idx[i] < (*grid)[keys[i]].size()) break;
      idx[i] = 0;
      if (i == 0) return cells;
    }
  }
}

// ---------------------------------------------------------------------------
// reports

inline experiment make_experiment(const run_config& c) {
  experiment e;
  e.function = c.function;
  e.basis = c.basis;
  e.samples = c.samples;
  e.greedy = c.greedy;
  e.select_rank = c.select_rank;
  e.validation_samples = c.validation_samples;
  return e;
}

/// One row per rank m of the greedy sequence.
inline table rank_table(const run_config& c, const experiment_result& r) {
  table t;
  t.columns = {"m", "empirical_error", "cv_error", "validation_error", "sparsity"};
  for (index_t k = 0; k < c.basis.dimension(); ++k) t.columns.push_back("sparsity_" + std::to_string(k + 1));
  t.columns.insert(t.columns.end(), {"effective_rank", "term_sparsity", "sweeps"});
  const auto& rep = r.fit.report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t m = 1; m <= r.fit.models.size(); ++m) {
    const auto sp = sparsity_ratios(r.fit.models[m - 1]);
    std::vector<json> row = {static_cast<long long>(m), rep.empirical_error[m - 1],
                             m <= rep.cv_errors.size() ? rep.cv_errors[m - 1] : nan,
                             m <= r.validation_errors.size() ? r.validation_errors[m - 1] : nan, sp.total};
    for (double v : sp.per_dimension) row.emplace_back(v);
    row.emplace_back(static_cast<long long>(rep.effective_rank[m - 1]));
    row.emplace_back(rep.term_sparsity[m - 1]);
    row.emplace_back(static_cast<long long>(rep.sweeps[m - 1]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline json report_document(const run_config& c, const experiment_result* r, const table* ranks, double seconds,
                            const std::string& status, const std::string& message = "") {
  json doc;
  doc["format"] = "splr-report";
  doc["version"] = 1;
  doc["splr_version"] = version;
  doc["status"] = status;
  if (!message.empty()) doc["error"] = message;
  doc["config"] = c.echo;
  doc["seed"] = c.seed;
  doc["validation_seed"] = validation_seed(c.seed);
  doc["samples"] = c.samples;
  if (r) {
    doc["selected_rank"] = r->selected_rank;
    doc["stop_reason"] = r->fit.report.stop_reason;
    doc["validation_error"] = std::isfinite(r->validation_error) ? json(r->validation_error) : json(nullptr);
  }
  if (ranks) doc["ranks"] = ranks->to_json();
  doc["timing"] = {{"seconds", seconds}};
  return doc;
}

// ---------------------------------------------------------------------------
// verbs

struct options {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::string model;
  std::string points;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 0;
};

/// Output directory: --out, then SPLR_OUT_DIR, then the working directory.
inline fs::path output_dir(const options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("SPLR_OUT_DIR"); env && *env) return env;
  return ".";
}

/// Seed: --seed, then SPLR_SEED, then the config value.
inline void apply_seed(const options& o, json& config) {
  if (o.seed) {
    config["seed"] = *o.seed;
    return;
  }
  if (const char* env = std::getenv("SPLR_SEED"); env && *env) {
    std::uint64_t v = 0;
    const std::string s = env;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw config_error("SPLR_SEED: not an unsigned integer");
    config["seed"] = v;
  }
}

inline json load_options_config(const options& o, fs::path& base_dir) {
  if (o.config.empty()) throw config_error("--config is required");
  const fs::path path = o.config;
  if (!fs::exists(path)) throw config_error(path.string() + ": config file not found");
  base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  json j = load_config_file(path);
  if (!j.is_object()) throw config_error(path.string() + ": expected a JSON object");
  apply_seed(o, j);
  return j;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline int cmd_fit(const options& o, std::ostream& out) {
  fs::path base;
  const run_config c = parse_config(load_options_config(o, base), base);
  const fs::path dir = output_dir(o);
  const auto t0 = std::chrono::steady_clock::now();
  experiment_result r;
  try {
    r = run_experiment(make_experiment(c), c.seed);
  } catch (const std::exception& e) {
    write_atomically(dir / "report.json",
                     report_document(c, nullptr, nullptr, seconds_since(t0), "failed", e.what()).dump(1) + "\n");
    throw;
  }
  const table ranks = rank_table(c, r);
  write_atomically(dir / "model.json", serialize(r.model));
  write_atomically(dir / "report.json", report_document(c, &r, &ranks, seconds_since(t0), "ok").dump(1) + "\n");
  write_atomically(dir / (o.format == "json" ? "ranks.json" : "ranks.csv"), ranks.render(o.format));
  out << "selected_rank " << r.selected_rank << "\n";
  out << "validation_error " << number(r.validation_error) << "\n";
  return exit_ok;
}

inline int cmd_path(const options& o, std::ostream& out) {
  fs::path base;
  json j = load_options_config(o, base);
  const json* jp = detail::find(j, "path");
  if (!jp || !jp->is_object()) throw config_error("/path: missing (needs design or random)");
  detail::known_keys(*jp, "/path", {"design", "random", "max_steps"});
  const auto seed = static_cast<std::uint64_t>(detail::integer(j, "seed", "", 1, 0));
  const auto max_steps = static_cast<std::size_t>(detail::integer(*jp, "max_steps", "/path", 0, 0));
  matrix phi;
  vector z;
  if (const json* jd = detail::find(*jp, "design")) {
    if (!jd->is_string()) throw config_error("/path/design: expected a csv path");
    fs::path p = jd->get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw config_error("/path/design: file not found: " + p.string());
    const matrix m = read_csv(p);
    if (m.cols() < 2) throw config_error("/path/design: need design columns and the response column");
    phi = m.leftCols(m.cols() - 1);
    z = m.col(m.cols() - 1);
  } else if (const json* jr = detail::find(*jp, "random")) {
    // standard normal design and response; orthonormal=true replaces the design by its Q factor
    if (!jr->is_object()) throw config_error("/path/random: expected an object");
    detail::known_keys(*jr, "/path/random", {"rows", "cols", "orthonormal"});
    const auto rows = static_cast<index_t>(detail::integer(*jr, "rows", "/path/random", 30, 1));
    const auto cols = static_cast<index_t>(detail::integer(*jr, "cols", "/path/random", 8, 1));
    const bool orth = detail::boolean(*jr, "orthonormal", "/path/random", false);
    if (orth && cols > rows) throw config_error("/path/random: orthonormal design needs rows >= cols");
    counter_rng rng(seed);
    phi.resize(rows, cols);
    for (index_t i = 0; i < rows; ++i)
      for (index_t k = 0; k < cols; ++k) phi(i, k) = rng.normal();
    z.resize(rows);
    for (index_t i = 0; i < rows; ++i) z[i] = rng.normal();
    if (orth) {
      Eigen::HouseholderQR<matrix> qr(phi);
      phi = qr.householderQ() * matrix::Identity(rows, cols);
    }
  } else {
    throw config_error("/path: needs design or random");
  }
  auto path = lars_lasso_path(phi, z, max_steps);
  try {
    loo_select(path, phi, z);
  } catch (const all_steps_invalid&) {
  } catch (const constant_response&) {
  }
  table t;
  t.columns = {"step", "lambda", "l1_norm", "active_count", "loo_error"};
  for (std::size_t s = 0; s < path.steps.size(); ++s) {
    const auto& st = path.steps[s];
    t.rows.push_back({static_cast<long long>(s), st.lambda, st.coefficients.lpNorm<1>(),
                      static_cast<long long>(st.active_set.size()), st.loo_error});
  }
  const fs::path dir = output_dir(o);
  const fs::path file = dir / (o.format == "json" ? "path.json" : "path.csv");
  write_atomically(file, t.render(o.format));
  out << "steps " << path.steps.size() << "\n";
  return exit_ok;
}

inline int cmd_eval(const options& o, std::ostream& out) {
  if (o.model.empty()) throw config_error("--model is required");
  if (o.points.empty()) throw config_error("--points is required");
  std::ifstream in(o.model, std::ios::binary);
  if (!in) throw config_error(o.model + ": cannot open model");
  std::stringstream ss;
  ss << in.rdbuf();
  canonical_model model;
  try {
    model = deserialize(ss.str());
  } catch (const malformed_document& e) {
    throw config_error(o.model + ": " + e.what());
  }
  const matrix pts = read_csv(o.points);
  if (pts.cols() != model.basis.dimension())
    throw config_error(o.points + ": expected " + std::to_string(model.basis.dimension()) + " columns per point");
  const vector v = evaluate_batch(model, pts);
  table t;
  t.columns = {"value"};
  for (index_t i = 0; i < v.size(); ++i) t.rows.push_back({v[i]});
  const std::string text = t.render(o.format);
  if (!o.out.empty() || std::getenv("SPLR_OUT_DIR"))
    write_atomically(output_dir(o) / (o.format == "json" ? "values.json" : "values.csv"), text);
  else
    out << text;
  return exit_ok;
}

struct study_cell {
  json config;
  run_config run;
  study_summary summary;
};

inline int cmd_study(const options& o, std::ostream& out) {
  fs::path base;
  const json j = load_options_config(o, base);
  std::vector<std::string> keys;
  const auto cells_json = expand_grid(j, keys);
  std::vector<study_cell> cells;
  for (std::size_t i = 0; i < cells_json.size(); ++i) {
    try {
      cells.push_back({cells_json[i], parse_config(cells_json[i], base), {}});
    } catch (const config_error& e) {
      throw config_error("grid cell " + std::to_string(i) + ": " + e.what());
    }
  }
  const fs::path dir = output_dir(o);
  const unsigned jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());

  table t;
  t.columns = {"cell"};
  t.columns.insert(t.columns.end(), keys.begin(), keys.end());
  t.columns.insert(t.columns.end(), {"samples", "statistic", "value", "repetitions", "failed", "status"});
  auto cell_rows = [&](std::size_t i) {
    const auto& c = cells[i];
    const auto& s = c.summary;
    const std::string status = s.values.empty() ? "failed" : s.failed_seeds.empty() ? "ok" : "partial";
    std::vector<std::vector<json>> rows;
    for (const auto& [name, value] : {std::pair{"mean", s.mean}, std::pair{"min", s.min}, std::pair{"max", s.max}}) {
      std::vector<json> row = {static_cast<long long>(i)};
      for (const auto& k : keys) {
        json v;
        if (k == "degree" || k == "pieces" || k == "levels") {
          const auto& b = c.config["basis"];
          v = b.is_array() ? b[0][k] : b[k];
        } else if (k == "c" || k == "alpha") {
          v = c.config["samples"][k];
        } else if (k == "backend") {
          v = c.config["als"][k];
        } else {
          v = c.config[k];
        }
        row.push_back(v);
      }
      row.insert(row.end(), {json(static_cast<long long>(c.run.samples)), json(name), json(value),
                             json(static_cast<long long>(c.run.repetitions)),
                             json(static_cast<long long>(s.failed_seeds.size())), json(status)});
      rows.push_back(std::move(row));
    }
    return rows;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      auto& c = cells[i];
      c.summary = repetition_study(make_experiment(c.run), consecutive_seeds(c.run.seed, c.run.repetitions));
      table one;
      one.columns = t.columns;
      one.rows = cell_rows(i);
      char name[32];
      std::snprintf(name, sizeof name, "cell_%04zu.%s", i, o.format == "json" ? "json" : "csv");
      write_atomically(dir / "cells" / name, one.render(o.format));
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(jobs, cells.size());
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  bool any_ok = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    any_ok = any_ok || cells[i].summary.ok();
    for (auto& row : cell_rows(i)) t.rows.push_back(std::move(row));
  }
  write_atomically(dir / (o.format == "json" ? "study.json" : "study.csv"), t.render(o.format));
  out << "cells " << cells.size() << "\n";
  return any_ok ? exit_ok : exit_failure;
}

// ---------------------------------------------------------------------------
// entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sparse low-rank canonical tensor approximation from scattered samples"};
  app.set_version_flag("--version", std::string("splr ") + version);
  options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--out", o.out, "output directory (default: $SPLR_OUT_DIR or .)");
  app.add_option("--seed", seed, "seed override (default: $SPLR_SEED or the config seed)");
  app.add_option("--jobs", o.jobs, "study worker threads (default: logical cores)");
  app.add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--model", o.model, "model document (eval)");
  app.add_option("--points", o.points, "CSV of points, one per row (eval)");
  auto* fit = app.add_subcommand("fit", "fit a model; writes model.json, report.json and the per-rank table");
  auto* path = app.add_subcommand("path", "dump a Lasso path: step,lambda,l1_norm,active_count,loo_error");
  auto* study = app.add_subcommand(
      "study", "repetition study over a grid; rows: cell,<grid keys>,samples,statistic,value,repetitions,failed,status");
  auto* eval = app.add_subcommand("eval", "evaluate a saved model at points");
  for (auto* s : {fit, path, study, eval}) s->fallthrough();
  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }
  if (app.count("--seed")) o.seed = seed;
  try {
    if (fit->parsed()) return cmd_fit(o, out);
    if (path->parsed()) return cmd_path(o, out);
    if (study->parsed()) return cmd_study(o, out);
    return cmd_eval(o, out);
  } catch (const config_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv = {"splr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace splr::cli
