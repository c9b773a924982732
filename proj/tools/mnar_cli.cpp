#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mnar/mnar.h"

namespace {

using nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

enum class LogLevel { Off, Info, Debug };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MNAR_LOG");
    if (!env) return LogLevel::Off;
    const std::string v = env;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Off;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (log_level() == LogLevel::Off || level > log_level()) return;
  std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << msg << '\n';
}

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(mnar_status st, const std::string& context) {
  if (st != MNAR_OK) throw CliError(context + ": " + mnar_last_error());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 15);
  return std::string(buf, res.ptr);
}

ordered_json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(fmt(v));
}

std::optional<double> parse_number(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

struct MatrixHandle {
  mnar_matrix* ptr = nullptr;
  explicit MatrixHandle(const Matrix& m) {
    check(mnar_matrix_from_rows(m.rows, m.cols, m.data.data(), &ptr), "matrix");
  }
  ~MatrixHandle() { mnar_matrix_free(ptr); }
  MatrixHandle(const MatrixHandle&) = delete;
  MatrixHandle& operator=(const MatrixHandle&) = delete;
};

struct FitHandle {
  mnar_fit_result* ptr = nullptr;
  ~FitHandle() { mnar_fit_result_free(ptr); }
};

// ---------------------------------------------------------------- CSV

std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  char c;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && trim(row[0]).empty())) rows.push_back(row);
    row.clear();
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c == '\r') {
      continue;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw CliError(path + ":" + std::to_string(line) + ": unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Dataset {
  std::vector<std::string> header;
  Matrix y;
  Matrix mask;
};

Dataset load_dataset(const std::string& path, const std::string& na_token) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot open input file '" + path + "'");
  const auto rows = read_csv(in, path);
  if (rows.empty()) throw CliError(path + ": empty file (a header row is required)");
  Dataset d;
  d.header = rows[0];
  const std::size_t p = d.header.size();
  const std::size_t n = rows.size() - 1;
  if (n == 0) throw CliError(path + ": no data rows");
  d.y = {n, p, std::vector<double>(n * p, 0.0)};
  d.mask = {n, p, std::vector<double>(n * p, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    if (row.size() != p) {
      throw CliError(path + ": data row " + std::to_string(i + 1) + " has " + std::to_string(row.size()) +
                     " fields, expected " + std::to_string(p));
    }
    for (std::size_t j = 0; j < p; ++j) {
      const std::string cell = trim(row[j]);
      if (cell == na_token) {
        d.mask.data[i * p + j] = 0.0;
        continue;
      }
      const auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw CliError(path + ": cell (row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1) +
                       " '" + d.header[j] + "') is not numeric: '" + cell + "'");
      }
      d.y.data[i * p + j] = *v;
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i) any = d.mask.data[i * p + j] != 0.0;
    if (!any) {
      throw CliError(path + ": column " + std::to_string(j + 1) + " '" + d.header[j] + "' is fully missing");
    }
  }
  return d;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw CliError("failed writing '" + path + "'");
}

// ------------------------------------------------------------- config

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct Config {
  std::string path;
  std::vector<ConfigEntry> entries;
  std::optional<std::string> preset;
  std::optional<std::string> output_csv;
  std::optional<std::string> output_json;
};

Config read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open config file '" + path + "'");
  Config cfg;
  cfg.path = path;
  std::map<std::string, int> seen;
  std::optional<int> schema;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    const std::string where = path + ":" + std::to_string(line);
    if (eq == std::string::npos) throw CliError(where + ": expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (!value.empty() && value[0] != '"') {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    value = strip_quotes(value);
    if (key.empty()) throw CliError(where + ": missing key");
    if (auto it = seen.find(key); it != seen.end()) {
      throw CliError(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen[key] = line;
    if (key == "schema_version") {
      const auto v = parse_number(value);
      if (!v || *v != kSchemaVersion) {
        throw CliError(where + ": unsupported schema_version '" + value + "' (expected " +
                       std::to_string(kSchemaVersion) + ")");
      }
      schema = kSchemaVersion;
    } else if (key == "preset") {
      cfg.preset = value;
      cfg.entries.push_back({key, value, line});
    } else if (key == "output_csv") {
      cfg.output_csv = value;
    } else if (key == "output_json") {
      cfg.output_json = value;
    } else {
      cfg.entries.push_back({key, value, line});
    }
  }
  if (!schema) throw CliError(path + ": missing required key 'schema_version'");
  return cfg;
}

struct ScenarioHandle {
  mnar_scenario* ptr = nullptr;
  ~ScenarioHandle() { mnar_scenario_free(ptr); }
};

void build_scenario(const Config& cfg, ScenarioHandle& s) {
  const char* preset = cfg.preset ? cfg.preset->c_str() : nullptr;
  if (mnar_scenario_create(preset, &s.ptr) != MNAR_OK) {
    int line = 0;
    for (const auto& e : cfg.entries)
      if (e.key == "preset") line = e.line;
    throw CliError(cfg.path + ":" + std::to_string(line) + ": " + mnar_last_error());
  }
  for (const auto& e : cfg.entries) {
    if (e.key == "preset") continue;
    if (mnar_scenario_set(s.ptr, e.key.c_str(), e.value.c_str()) != MNAR_OK) {
      throw CliError(cfg.path + ":" + std::to_string(e.line) + ": " + mnar_last_error());
    }
  }
}

std::string scenario_value(const mnar_scenario* s, const char* key) {
  size_t needed = 0;
  check(mnar_scenario_get(s, key, nullptr, 0, &needed), "scenario");
  std::string buf(needed, '\0');
  check(mnar_scenario_get(s, key, buf.data(), buf.size(), nullptr), "scenario");
  buf.resize(needed - 1);
  return buf;
}

std::vector<std::pair<std::string, std::string>> scenario_pairs(const mnar_scenario* s) {
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t k = 0; k < mnar_scenario_key_count(); ++k) {
    const char* key = mnar_scenario_key(k);
    out.emplace_back(key, scenario_value(s, key));
  }
  return out;
}

std::string method_label(int id) {
  const char* name = mnar_method_name(id);
  return name ? name : "UNKNOWN";
}

// ----------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

int cmd_simulate(const SimulateArgs& args) {
  Config cfg = read_config(args.config);
  ScenarioHandle scenario;
  build_scenario(cfg, scenario);
  if (args.seed) check(mnar_scenario_set(scenario.ptr, "seed", std::to_string(*args.seed).c_str()), "--seed");
  if (args.threads) {
    check(mnar_scenario_set(scenario.ptr, "threads", std::to_string(*args.threads).c_str()), "--threads");
  }
  if (mnar_scenario_validate(scenario.ptr) != MNAR_OK) throw CliError(cfg.path + ": " + mnar_last_error());

  const std::string name = scenario_value(scenario.ptr, "name");
  std::string csv_path = cfg.output_csv.value_or(name + "_results.csv");
  std::string json_path = cfg.output_json.value_or(name + "_summary.json");
  if (!args.output.empty()) {
    csv_path = args.output + ".csv";
    json_path = args.output + ".json";
  }

  log(LogLevel::Info, "running campaign '" + name + "' with " + scenario_value(scenario.ptr, "replications") +
                          " replications");
  mnar_campaign_report* raw = nullptr;
  check(mnar_run_campaign(scenario.ptr, &raw), "simulate");
  std::unique_ptr<mnar_campaign_report, decltype(&mnar_campaign_report_free)> report(raw,
                                                                                    &mnar_campaign_report_free);
  const auto config = scenario_pairs(mnar_report_scenario(report.get()));

  std::ostringstream csv;
  csv << "# schema_version = " << kSchemaVersion << '\n';
  for (const auto& [k, v] : config) csv << "# " << k << " = " << v << '\n';
  csv << "method,replication,prediction_error,total_error,lambda,wall_time_s,lambda_total,error\n";
  ordered_json failures = ordered_json::array();
  for (size_t k = 0; k < mnar_report_record_count(report.get()); ++k) {
    mnar_record rec;
    check(mnar_report_record(report.get(), k, &rec), "report");
    csv << method_label(rec.method) << ',' << rec.replication << ','
        << (rec.has_prediction_error ? fmt(rec.prediction_error) : "NA") << ','
        << (rec.has_total_error ? fmt(rec.total_error) : "NA") << ','
        << (rec.has_lambda ? fmt(rec.lambda_prediction) : "NA") << ',' << fmt(rec.wall_time_s) << ','
        << (rec.has_lambda ? fmt(rec.lambda_total) : "NA") << ',' << csv_escape(rec.error) << '\n';
    if (!rec.ok) {
      failures.push_back({{"method", method_label(rec.method)}, {"replication", rec.replication},
                          {"error", rec.error}});
      log(LogLevel::Info, method_label(rec.method) + " failed on replication " + std::to_string(rec.replication) +
                              ": " + rec.error);
    }
  }

  ordered_json summary;
  summary["schema"] = "mnar-campaign-summary/1";
  ordered_json jcfg;
  jcfg["schema_version"] = kSchemaVersion;
  for (const auto& [k, v] : config) jcfg[k] = v;
  summary["config"] = jcfg;
  summary["seed"] = scenario_value(mnar_report_scenario(report.get()), "seed");
  ordered_json methods = ordered_json::array();
  for (size_t k = 0; k < mnar_report_summary_count(report.get()); ++k) {
    mnar_summary s;
    check(mnar_report_summary(report.get(), k, &s), "report");
    methods.push_back({{"method", method_label(s.method)},
                       {"succeeded", s.succeeded},
                       {"failed", s.failed},
                       {"prediction_error",
                        {{"q1", jnum(s.prediction_q1)},
                         {"median", jnum(s.prediction_median)},
                         {"q3", jnum(s.prediction_q3)},
                         {"count", s.prediction_count}}},
                       {"total_error",
                        {{"q1", jnum(s.total_q1)},
                         {"median", jnum(s.total_median)},
                         {"q3", jnum(s.total_q3)},
                         {"count", s.total_count}}}});
  }
  summary["methods"] = methods;
  ordered_json wins = ordered_json::array();
  for (size_t k = 0; k < mnar_report_win_rate_count(report.get()); ++k) {
    mnar_win_rate w;
    check(mnar_report_win_rate(report.get(), k, &w), "report");
    wins.push_back({{"method", method_label(w.method)},
                    {"versus", method_label(w.versus)},
                    {"prediction", jnum(w.prediction)},
                    {"total", jnum(w.total)},
                    {"pairs", w.pairs}});
  }
  summary["win_rates"] = wins;
  ordered_json rates = ordered_json::array();
  for (size_t k = 0; k < mnar_report_replication_count(report.get()); ++k) {
    rates.push_back(jnum(mnar_report_missing_rate(report.get(), k)));
  }
  summary["missing_rates"] = rates;
  summary["expected_missing_rate"] = jnum(mnar_report_expected_missing_rate(report.get()));
  summary["solved_center"] =
      mnar_report_has_solved_center(report.get()) ? jnum(mnar_report_solved_center(report.get())) : nullptr;
  summary["failures"] = failures;

  write_file(csv_path, csv.str());
  write_file(json_path, summary.dump(2) + "\n");
  log(LogLevel::Info, "wrote " + csv_path + " and " + json_path);
  std::cout << "wrote " << csv_path << " and " << json_path << '\n';
  return 0;
}

// ------------------------------------------------------ impute / grid

struct FitArgs {
  std::string input;
  std::string output;
  std::string sidecar;
  std::string method = "MAR_FISTA";
  std::optional<double> lambda;
  std::string lambda_grid;
  std::optional<double> sigma;
  bool estimate_sigma = false;
  std::optional<std::size_t> rank;
  std::uint64_t seed = 1;
  std::string na_token = "NA";
  unsigned threads = 0;
  bool scale_columns = false;
  int ns = 1000;
  int max_iters = 1000;
  int grid_size = 15;
  double holdout = 0.1;
};

struct Prepared {
  Dataset data;
  mnar_fit_options opts;
  std::optional<double> sigma2;
  std::string sigma2_source = "unused";
};

Prepared prepare(const FitArgs& a, bool need_lambda_choice) {
  Prepared p;
  p.data = load_dataset(a.input, a.na_token);
  log(LogLevel::Info, "read " + std::to_string(p.data.y.rows) + " x " + std::to_string(p.data.y.cols) + " from " +
                          a.input);
  mnar_fit_options_init(&p.opts);
  check(mnar_method_from_name(a.method.c_str(), &p.opts.method), "--method");
  if (a.lambda && !a.lambda_grid.empty()) throw CliError("--lambda and --lambda-grid are exclusive");
  if (!a.lambda_grid.empty() && a.lambda_grid != "auto") throw CliError("--lambda-grid only accepts 'auto'");
  if (a.lambda) {
    if (need_lambda_choice) throw CliError("grid sweeps the automatic grid; drop --lambda");
    p.opts.has_lambda = 1;
    p.opts.lambda = *a.lambda;
  }
  if (a.sigma && a.estimate_sigma) throw CliError("--sigma and --estimate-sigma are exclusive");
  if (a.estimate_sigma && !a.rank) throw CliError("--estimate-sigma needs --rank");
  const bool needs_sigma = p.opts.method == MNAR_MODEL_MCEM || p.opts.method == MNAR_MASK_EXPFAM;
  if (a.sigma) {
    if (!(*a.sigma > 0.0)) throw CliError("--sigma must be > 0");
    p.sigma2 = *a.sigma * *a.sigma;
    p.sigma2_source = "fixed";
  } else if (a.estimate_sigma) {
    MatrixHandle y(p.data.y);
    MatrixHandle mask(p.data.mask);
    double s2 = 0.0;
    check(mnar_estimate_sigma2(y.ptr, mask.ptr, *a.rank, &s2), "--estimate-sigma");
    p.sigma2 = s2;
    p.sigma2_source = "estimated";
    log(LogLevel::Info, "estimated sigma2 = " + fmt(s2));
  } else if (needs_sigma) {
    throw CliError(a.method + " needs --sigma <real> or --estimate-sigma --rank <r>");
  }
  if (p.sigma2) p.opts.sigma2 = *p.sigma2;
  p.opts.seed = a.seed;
  p.opts.threads = a.threads;
  p.opts.scale_columns = a.scale_columns ? 1 : 0;
  p.opts.mcem_ns = a.ns;
  p.opts.max_iters = a.max_iters;
  p.opts.grid_size = a.grid_size;
  p.opts.holdout_fraction = a.holdout;
  return p;
}

ordered_json options_json(const FitArgs& a, const Prepared& p) {
  ordered_json o;
  o["input"] = a.input;
  o["method"] = method_label(p.opts.method);
  o["na_token"] = a.na_token;
  o["seed"] = a.seed;
  o["sigma2"] = p.sigma2 ? jnum(*p.sigma2) : ordered_json(nullptr);
  o["sigma2_source"] = p.sigma2_source;
  o["rank"] = a.rank ? ordered_json(*a.rank) : ordered_json(nullptr);
  o["scale_columns"] = a.scale_columns;
  o["mcem_ns"] = a.ns;
  o["max_iters"] = a.max_iters;
  o["rel_tol"] = jnum(p.opts.rel_tol);
  o["grid_size"] = a.grid_size;
  o["grid_ratio"] = jnum(p.opts.grid_ratio);
  o["holdout_fraction"] = jnum(a.holdout);
  return o;
}

ordered_json sweep_json(const mnar_fit_result* r) {
  ordered_json pts = ordered_json::array();
  for (size_t k = 0; k < mnar_fit_sweep_count(r); ++k) {
    mnar_grid_point g;
    check(mnar_fit_sweep_point(r, k, &g), "sweep");
    pts.push_back({{"lambda", jnum(g.lambda)},
                   {"holdout_mse", g.ok ? jnum(g.score) : ordered_json(nullptr)},
                   {"rank", g.rank},
                   {"iterations", g.iterations},
                   {"ok", g.ok != 0},
                   {"error", g.error}});
  }
  return pts;
}

int cmd_impute(const FitArgs& a) {
  if (a.output.empty()) throw CliError("impute needs --output");
  Prepared p = prepare(a, false);
  MatrixHandle y(p.data.y);
  MatrixHandle mask(p.data.mask);
  FitHandle fit;
  check(mnar_fit(y.ptr, mask.ptr, &p.opts, &fit.ptr), "impute");

  const mnar_matrix* completed = mnar_fit_completed(fit.ptr);
  const std::size_t n = p.data.y.rows;
  const std::size_t cols = p.data.y.cols;
  std::vector<double> values(n * cols);
  check(mnar_matrix_copy_rows(completed, values.data(), values.size()), "impute");
  std::ostringstream csv;
  for (std::size_t j = 0; j < cols; ++j) csv << (j ? "," : "") << csv_escape(p.data.header[j]);
  csv << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cols; ++j) csv << (j ? "," : "") << fmt(values[i * cols + j]);
    csv << '\n';
  }

  ordered_json side;
  side["schema"] = "mnar-impute/1";
  side["config"] = options_json(a, p);
  side["output"] = a.output;
  side["method"] = method_label(mnar_fit_method(fit.ptr));
  side["lambda"] = mnar_fit_has_lambda(fit.ptr) ? jnum(mnar_fit_lambda(fit.ptr)) : ordered_json(nullptr);
  side["lambda_selection"] = p.opts.method == MNAR_MEAN_IMPUTE ? "none" : (p.opts.has_lambda ? "fixed" : "holdout");
  side["sigma2"] = p.sigma2 ? jnum(*p.sigma2) : ordered_json(nullptr);
  if (mnar_fit_phi_count(fit.ptr) > 0) {
    ordered_json phi = ordered_json::array();
    for (size_t k = 0; k < mnar_fit_phi_count(fit.ptr); ++k) {
      size_t col = 0;
      double slope = 0.0, center = 0.0;
      check(mnar_fit_phi(fit.ptr, k, &col, &slope, &center), "phi");
      phi.push_back({{"column", p.data.header[col]}, {"index", col}, {"slope", jnum(slope)}, {"center", jnum(center)}});
    }
    side["phi"] = phi;
    side["phi_sharing"] = mnar_fit_phi_shared(fit.ptr) ? "shared" : "per_column";
  } else {
    side["phi"] = nullptr;
  }
  side["iterations"] = mnar_fit_iterations(fit.ptr);
  side["converged"] = mnar_fit_converged(fit.ptr) != 0;
  side["seed"] = a.seed;
  side["missing_cells"] = [&] {
    std::size_t missing = 0;
    for (double m : p.data.mask.data) missing += m == 0.0;
    return missing;
  }();
  ordered_json warnings = ordered_json::array();
  for (size_t k = 0; k < mnar_fit_warning_count(fit.ptr); ++k) {
    warnings.push_back(mnar_fit_warning(fit.ptr, k));
    log(LogLevel::Info, std::string("warning: ") + mnar_fit_warning(fit.ptr, k));
  }
  side["warnings"] = warnings;
  if (mnar_fit_sweep_count(fit.ptr) > 0) side["sweep"] = sweep_json(fit.ptr);

  const std::string sidecar = a.sidecar.empty() ? a.output + ".json" : a.sidecar;
  write_file(a.output, csv.str());
  write_file(sidecar, side.dump(2) + "\n");
  log(LogLevel::Info, "wrote " + a.output + " and " + sidecar);
  return 0;
}

int cmd_grid(const FitArgs& a) {
  Prepared p = prepare(a, true);
  MatrixHandle y(p.data.y);
  MatrixHandle mask(p.data.mask);
  FitHandle fit;
  check(mnar_sweep(y.ptr, mask.ptr, &p.opts, &fit.ptr), "grid");
  const ordered_json cfg = options_json(a, p);
  std::ostringstream out;
  out << "# schema_version = " << kSchemaVersion << '\n';
  for (const auto& [k, v] : cfg.items()) out << "# " << k << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  out << "lambda,holdout_mse,rank,iterations,ok,error\n";
  double best = INFINITY;
  double best_lambda = NAN;
  for (size_t k = 0; k < mnar_fit_sweep_count(fit.ptr); ++k) {
    mnar_grid_point g;
    check(mnar_fit_sweep_point(fit.ptr, k, &g), "grid");
    out << fmt(g.lambda) << ',' << (g.ok ? fmt(g.score) : "NA") << ',' << g.rank << ',' << g.iterations << ','
        << (g.ok ? "true" : "false") << ',' << csv_escape(g.error) << '\n';
    if (g.ok && g.score < best) {
      best = g.score;
      best_lambda = g.lambda;
    }
  }
  if (a.output.empty()) {
    std::cout << out.str();
  } else {
    write_file(a.output, out.str());
  }
  log(LogLevel::Info, "best lambda " + fmt(best_lambda) + " (holdout mse " + fmt(best) + ")");
  return std::isnan(best_lambda) ? 1 : 0;
}

void add_fit_flags(CLI::App* sub, FitArgs& a) {
  sub->add_option("--input", a.input, "Input CSV with a header row")->required();
  sub->add_option("--method", a.method, "MODEL_MCEM, MASK_CONCAT, MASK_EXPFAM, MAR_FISTA, MAR_SOFTIMPUTE, MEAN_IMPUTE");
  sub->add_option("--sigma", a.sigma, "Noise standard deviation");
  sub->add_flag("--estimate-sigma", a.estimate_sigma, "Estimate the noise variance at --rank");
  sub->add_option("--rank", a.rank, "Rank used by --estimate-sigma");
  sub->add_option("--seed", a.seed, "Random seed");
  sub->add_option("--na-token", a.na_token, "Token marking a missing cell");
  sub->add_option("--threads", a.threads, "Worker cap (0 = all cores)");
  sub->add_flag("--scale-columns", a.scale_columns, "Standardise columns inside the model-based fit");
  sub->add_option("--ns", a.ns, "Monte Carlo draws per missing cell (MODEL_MCEM)");
  sub->add_option("--max-iters", a.max_iters, "Solver iteration cap");
  sub->add_option("--grid-size", a.grid_size, "Points in the automatic lambda grid");
  sub->add_option("--holdout", a.holdout, "Fraction of observed cells held out for lambda selection");
  sub->add_option("--lambda-grid", a.lambda_grid, "'auto': choose lambda on held-out cells");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank matrix completion with informative missing values"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation campaign from a scenario config");
  simulate->add_option("--config", sim.config, "Scenario config file")->required();
  simulate->add_option("--output", sim.output, "Output prefix (writes <prefix>.csv and <prefix>.json)");
  simulate->add_option("--seed", sim.seed, "Override the config seed");
  simulate->add_option("--threads", sim.threads, "Worker cap (0 = all cores)");

  FitArgs imp;
  auto* impute = app.add_subcommand("impute", "Impute the missing cells of a CSV dataset");
  add_fit_flags(impute, imp);
  impute->add_option("--output", imp.output, "Completed CSV")->required();
  impute->add_option("--sidecar", imp.sidecar, "Sidecar JSON path (default <output>.json)");
  impute->add_option("--lambda", imp.lambda, "Fixed penalty");

  FitArgs grd;
  auto* grid = app.add_subcommand("grid", "Held-out error over the automatic lambda grid");
  add_fit_flags(grid, grd);
  grid->add_option("--output", grd.output, "Write the sweep CSV here instead of stdout");

  app.add_subcommand("version", "Print the library version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (impute->parsed()) return cmd_impute(imp);
    if (grid->parsed()) return cmd_grid(grd);
    std::cout << "mnar " << mnar_version() << '\n';
    return 0;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
