#include "mnar/mnar.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mnar/error.hpp"
#include "mnar/impute.hpp"
#include "mnar/sim.hpp"

struct mnar_matrix {
  mnar::Matrix m;
};

struct mnar_fit_result {
  mnar::ImputeResult result;
  bool has_matrices = false;
  mnar_matrix completed;
  mnar_matrix estimate;
};

struct mnar_scenario {
  mnar::Scenario s;
};

struct mnar_campaign_report {
  mnar::CampaignReport report;
  mnar_scenario resolved;
};

namespace {

thread_local std::string g_last_error;

mnar_status status_for(mnar::ErrorCode code) {
  switch (code) {
    case mnar::ErrorCode::InvalidArgument: return MNAR_E_INVALID_ARGUMENT;
    case mnar::ErrorCode::DimensionMismatch: return MNAR_E_DIMENSION_MISMATCH;
    case mnar::ErrorCode::NumericalFailure: return MNAR_E_NUMERICAL_FAILURE;
    case mnar::ErrorCode::DegenerateWeights: return MNAR_E_DEGENERATE_WEIGHTS;
    case mnar::ErrorCode::Separation: return MNAR_E_SEPARATION;
    case mnar::ErrorCode::NotConverged: return MNAR_E_NOT_CONVERGED;
  }
  return MNAR_E_INTERNAL;
}

mnar_status set_error(mnar_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

struct KeyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class F>
mnar_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const mnar::Error& e) {
    return set_error(status_for(e.code()), e.what());
  } catch (const KeyError& e) {
    return set_error(MNAR_E_UNKNOWN_KEY, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MNAR_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MNAR_E_INTERNAL, e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 15);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(std::string_view key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    mnar::fail(mnar::ErrorCode::InvalidArgument,
               std::string(key) + ": expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(std::string_view key, const std::string& text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    mnar::fail(mnar::ErrorCode::InvalidArgument,
               std::string(key) + ": expected an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view key, const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    mnar::fail(mnar::ErrorCode::InvalidArgument,
               std::string(key) + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  mnar::fail(mnar::ErrorCode::InvalidArgument, std::string(key) + ": expected true or false");
}

std::string join_indices(const std::vector<mnar::Index>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(v[k]);
  }
  return out;
}

std::string_view family_name(mnar::MechanismFamily f) {
  switch (f) {
    case mnar::MechanismFamily::SelfMaskedLogistic: return "logistic";
    case mnar::MechanismFamily::SelfMaskedProbit: return "probit";
    case mnar::MechanismFamily::MarDriver: return "mar_driver";
  }
  return "logistic";
}

std::string_view sharing_name(mnar::SharingMode m) {
  return m == mnar::SharingMode::Shared ? "shared" : "per_column";
}

mnar::SharingMode parse_sharing(std::string_view key, const std::string& text) {
  if (text == "shared") return mnar::SharingMode::Shared;
  if (text == "per_column") return mnar::SharingMode::PerColumn;
  mnar::fail(mnar::ErrorCode::InvalidArgument, std::string(key) + ": expected shared or per_column");
}

struct KeyHandler {
  const char* key;
  std::function<void(mnar::Scenario&, const std::string&)> set;
  std::function<std::string(const mnar::Scenario&)> get;
};

const std::vector<KeyHandler>& key_table() {
  using mnar::Scenario;
  static const std::vector<KeyHandler> table = {
      {"name", [](Scenario& s, const std::string& v) { s.name = v; },
       [](const Scenario& s) { return s.name; }},
      {"n", [](Scenario& s, const std::string& v) { s.n = parse_int("n", v); },
       [](const Scenario& s) { return std::to_string(s.n); }},
      {"p", [](Scenario& s, const std::string& v) { s.p = parse_int("p", v); },
       [](const Scenario& s) { return std::to_string(s.p); }},
      {"rank", [](Scenario& s, const std::string& v) { s.r = parse_int("rank", v); },
       [](const Scenario& s) { return std::to_string(s.r); }},
      {"sigma2", [](Scenario& s, const std::string& v) { s.sigma2 = parse_double("sigma2", v); },
       [](const Scenario& s) { return format_double(s.sigma2); }},
      {"mechanism",
       [](Scenario& s, const std::string& v) {
         if (v == "logistic") s.mechanism.family = mnar::MechanismFamily::SelfMaskedLogistic;
         else if (v == "probit") s.mechanism.family = mnar::MechanismFamily::SelfMaskedProbit;
         else if (v == "mar_driver") s.mechanism.family = mnar::MechanismFamily::MarDriver;
         else mnar::fail(mnar::ErrorCode::InvalidArgument, "mechanism: expected logistic, probit or mar_driver");
       },
       [](const Scenario& s) { return std::string(family_name(s.mechanism.family)); }},
      {"targets",
       [](Scenario& s, const std::string& v) {
         s.mechanism.target_columns.clear();
         for (const std::string& part : split(v, ',')) s.mechanism.target_columns.push_back(parse_int("targets", part));
         s.mechanism.params.columns = s.mechanism.target_columns;
       },
       [](const Scenario& s) { return join_indices(s.mechanism.target_columns); }},
      {"phi_sharing",
       [](Scenario& s, const std::string& v) { s.mechanism.params.mode = parse_sharing("phi_sharing", v); },
       [](const Scenario& s) { return std::string(sharing_name(s.mechanism.params.mode)); }},
      {"phi",
       [](Scenario& s, const std::string& v) {
         s.mechanism.params.pairs.clear();
         if (v.empty()) return;
         for (const std::string& part : split(v, ',')) {
           const auto fields = split(part, ':');
           if (fields.size() != 2) {
             mnar::fail(mnar::ErrorCode::InvalidArgument, "phi: expected slope:center pairs, got '" + part + "'");
           }
           s.mechanism.params.pairs.push_back({parse_double("phi", fields[0]), parse_double("phi", fields[1])});
         }
       },
       [](const Scenario& s) {
         std::string out;
         for (std::size_t k = 0; k < s.mechanism.params.pairs.size(); ++k) {
           if (k) out += ",";
           out += format_double(s.mechanism.params.pairs[k].slope) + ":" +
                  format_double(s.mechanism.params.pairs[k].center);
         }
         return out;
       }},
      {"driver",
       [](Scenario& s, const std::string& v) {
         if (v == "none") s.mechanism.driver_column.reset();
         else s.mechanism.driver_column = parse_int("driver", v);
       },
       [](const Scenario& s) {
         return s.mechanism.driver_column ? std::to_string(*s.mechanism.driver_column) : std::string("none");
       }},
      {"target_missing_rate",
       [](Scenario& s, const std::string& v) {
         if (v == "none") s.target_missing_rate.reset();
         else s.target_missing_rate = parse_double("target_missing_rate", v);
       },
       [](const Scenario& s) {
         return s.target_missing_rate ? format_double(*s.target_missing_rate) : std::string("none");
       }},
      {"decorrelate_driver",
       [](Scenario& s, const std::string& v) { s.decorrelate_driver = parse_bool("decorrelate_driver", v); },
       [](const Scenario& s) { return std::string(s.decorrelate_driver ? "true" : "false"); }},
      {"replications",
       [](Scenario& s, const std::string& v) { s.replications = static_cast<int>(parse_int("replications", v)); },
       [](const Scenario& s) { return std::to_string(s.replications); }},
      {"methods",
       [](Scenario& s, const std::string& v) {
         s.methods.clear();
         if (v == "all") {
           s.methods.assign(std::begin(mnar::kAllMethods), std::end(mnar::kAllMethods));
           return;
         }
         for (const std::string& part : split(v, ',')) {
           const auto m = mnar::method_from_name(part);
           if (!m) mnar::fail(mnar::ErrorCode::InvalidArgument, "methods: unknown method '" + part + "'");
           s.methods.push_back(*m);
         }
       },
       [](const Scenario& s) {
         std::string out;
         for (std::size_t k = 0; k < s.methods.size(); ++k) {
           if (k) out += ",";
           out += mnar::method_name(s.methods[k]);
         }
         return out;
       }},
      {"grid_size",
       [](Scenario& s, const std::string& v) { s.grid_size = static_cast<int>(parse_int("grid_size", v)); },
       [](const Scenario& s) { return std::to_string(s.grid_size); }},
      {"grid_ratio", [](Scenario& s, const std::string& v) { s.grid_ratio = parse_double("grid_ratio", v); },
       [](const Scenario& s) { return format_double(s.grid_ratio); }},
      {"selection",
       [](Scenario& s, const std::string& v) {
         const auto sel = mnar::selection_from_name(v);
         if (!sel) mnar::fail(mnar::ErrorCode::InvalidArgument, "selection: expected separate, prediction or total");
         s.selection = *sel;
       },
       [](const Scenario& s) { return std::string(mnar::selection_name(s.selection)); }},
      {"seed", [](Scenario& s, const std::string& v) { s.seed = parse_u64("seed", v); },
       [](const Scenario& s) { return std::to_string(s.seed); }},
      {"max_iters",
       [](Scenario& s, const std::string& v) { s.max_iters = static_cast<int>(parse_int("max_iters", v)); },
       [](const Scenario& s) { return std::to_string(s.max_iters); }},
      {"rel_tol", [](Scenario& s, const std::string& v) { s.rel_tol = parse_double("rel_tol", v); },
       [](const Scenario& s) { return format_double(s.rel_tol); }},
      {"mcem_ns", [](Scenario& s, const std::string& v) { s.mcem_ns = static_cast<int>(parse_int("mcem_ns", v)); },
       [](const Scenario& s) { return std::to_string(s.mcem_ns); }},
      {"mcem_max_iters",
       [](Scenario& s, const std::string& v) { s.mcem_max_iters = static_cast<int>(parse_int("mcem_max_iters", v)); },
       [](const Scenario& s) { return std::to_string(s.mcem_max_iters); }},
      {"mcem_inner",
       [](Scenario& s, const std::string& v) {
         if (v == "fista") s.mcem_inner = mnar::Algorithm::Fista;
         else if (v == "ista") s.mcem_inner = mnar::Algorithm::IstaSoftImpute;
         else mnar::fail(mnar::ErrorCode::InvalidArgument, "mcem_inner: expected fista or ista");
       },
       [](const Scenario& s) { return std::string(s.mcem_inner == mnar::Algorithm::Fista ? "fista" : "ista"); }},
      {"mcem_sharing",
       [](Scenario& s, const std::string& v) { s.mcem_sharing = parse_sharing("mcem_sharing", v); },
       [](const Scenario& s) { return std::string(sharing_name(s.mcem_sharing)); }},
      {"threads",
       [](Scenario& s, const std::string& v) {
         const long long t = parse_int("threads", v);
         mnar::require(t >= 0, "threads: must be >= 0");
         s.threads = static_cast<unsigned>(t);
       },
       [](const Scenario& s) { return std::to_string(s.threads); }},
  };
  return table;
}

const KeyHandler& find_key(const char* key) {
  for (const KeyHandler& h : key_table())
    if (std::strcmp(h.key, key) == 0) return h;
  throw KeyError(std::string("unknown scenario key '") + key + "'");
}

struct Preset {
  const char* name;
  mnar::Scenario (*make)();
};

mnar::Scenario multivariate_default() { return mnar::multivariate_scenario(); }

constexpr Preset kPresets[] = {
    {"univariate", &mnar::univariate_scenario},
    {"bivariate", &mnar::bivariate_scenario},
    {"multivariate", &multivariate_default},
    {"mar_driver", &mnar::mar_driver_scenario},
    {"probit", &mnar::probit_scenario},
};

mnar::ImputeOptions to_impute_options(const mnar_fit_options& o) {
  mnar::ImputeOptions io;
  if (o.method < MNAR_MODEL_MCEM || o.method > MNAR_MEAN_IMPUTE) {
    mnar::fail(mnar::ErrorCode::InvalidArgument, "unknown method id " + std::to_string(o.method));
  }
  io.method = mnar::kAllMethods[o.method];
  if (o.has_lambda) io.lambda = o.lambda;
  io.grid_size = o.grid_size;
  io.grid_ratio = o.grid_ratio;
  io.holdout_fraction = o.holdout_fraction;
  io.sigma2 = o.sigma2;
  io.max_iters = o.max_iters;
  io.rel_tol = o.rel_tol;
  io.mcem_ns = o.mcem_ns;
  io.mcem_max_iters = o.mcem_max_iters;
  io.mcem_inner = o.mcem_inner == 1 ? mnar::Algorithm::IstaSoftImpute : mnar::Algorithm::Fista;
  io.mcem_sharing = o.mcem_shared ? mnar::SharingMode::Shared : mnar::SharingMode::PerColumn;
  io.scale_columns = o.scale_columns != 0;
  io.seed = o.seed;
  io.threads = o.threads;
  return io;
}

int method_id(mnar::Method m) {
  for (int k = 0; k < static_cast<int>(std::size(mnar::kAllMethods)); ++k)
    if (mnar::kAllMethods[k] == m) return k;
  return -1;
}

mnar_status null_arg(const char* what) {
  return set_error(MNAR_E_INVALID_ARGUMENT, std::string(what) + " must not be NULL");
}

mnar_status index_error(const char* what, size_t index, size_t count) {
  return set_error(MNAR_E_OUT_OF_RANGE, std::string(what) + " index " + std::to_string(index) +
                                            " out of range (count " + std::to_string(count) + ")");
}

}  // namespace

extern "C" {

const char* mnar_last_error(void) { return g_last_error.c_str(); }

const char* mnar_version(void) { return "0.1.0"; }

const char* mnar_status_name(mnar_status status) {
  switch (status) {
    case MNAR_OK: return "ok";
    case MNAR_E_INVALID_ARGUMENT: return "invalid argument";
    case MNAR_E_DIMENSION_MISMATCH: return "dimension mismatch";
    case MNAR_E_NUMERICAL_FAILURE: return "numerical failure";
    case MNAR_E_DEGENERATE_WEIGHTS: return "degenerate weights";
    case MNAR_E_SEPARATION: return "separation";
    case MNAR_E_NOT_CONVERGED: return "not converged";
    case MNAR_E_UNKNOWN_KEY: return "unknown key";
    case MNAR_E_OUT_OF_RANGE: return "out of range";
    case MNAR_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mnar_method_name(int method) {
  if (method < 0 || method >= static_cast<int>(std::size(mnar::kAllMethods))) return nullptr;
  return mnar::method_name(mnar::kAllMethods[method]).data();
}

mnar_status mnar_method_from_name(const char* name, int* out) {
  if (!name || !out) return null_arg("name and out");
  const auto m = mnar::method_from_name(name);
  if (!m) return set_error(MNAR_E_INVALID_ARGUMENT, std::string("unknown method '") + name + "'");
  *out = method_id(*m);
  return MNAR_OK;
}

mnar_status mnar_matrix_create(size_t rows, size_t cols, mnar_matrix** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    auto m = std::make_unique<mnar_matrix>();
    m->m = mnar::Matrix::Zero(static_cast<mnar::Index>(rows), static_cast<mnar::Index>(cols));
    *out = m.release();
    return MNAR_OK;
  });
}

mnar_status mnar_matrix_from_rows(size_t rows, size_t cols, const double* data, mnar_matrix** out) {
  if (!out || (!data && rows * cols > 0)) return null_arg("data and out");
  return guarded([&] {
    auto m = std::make_unique<mnar_matrix>();
    m->m.resize(static_cast<mnar::Index>(rows), static_cast<mnar::Index>(cols));
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j) m->m(i, j) = data[i * cols + j];
    *out = m.release();
    return MNAR_OK;
  });
}

void mnar_matrix_free(mnar_matrix* m) { delete m; }

size_t mnar_matrix_rows(const mnar_matrix* m) { return m ? static_cast<size_t>(m->m.rows()) : 0; }
size_t mnar_matrix_cols(const mnar_matrix* m) { return m ? static_cast<size_t>(m->m.cols()) : 0; }

mnar_status mnar_matrix_get(const mnar_matrix* m, size_t row, size_t col, double* out) {
  if (!m || !out) return null_arg("matrix and out");
  if (row >= mnar_matrix_rows(m) || col >= mnar_matrix_cols(m)) {
    return set_error(MNAR_E_OUT_OF_RANGE, "matrix cell (" + std::to_string(row) + ", " + std::to_string(col) +
                                              ") out of range");
  }
  *out = m->m(static_cast<mnar::Index>(row), static_cast<mnar::Index>(col));
  return MNAR_OK;
}

mnar_status mnar_matrix_set(mnar_matrix* m, size_t row, size_t col, double value) {
  if (!m) return null_arg("matrix");
  if (row >= mnar_matrix_rows(m) || col >= mnar_matrix_cols(m)) {
    return set_error(MNAR_E_OUT_OF_RANGE, "matrix cell (" + std::to_string(row) + ", " + std::to_string(col) +
                                              ") out of range");
  }
  m->m(static_cast<mnar::Index>(row), static_cast<mnar::Index>(col)) = value;
  return MNAR_OK;
}

mnar_status mnar_matrix_copy_rows(const mnar_matrix* m, double* out, size_t capacity) {
  if (!m || !out) return null_arg("matrix and out");
  const size_t rows = mnar_matrix_rows(m);
  const size_t cols = mnar_matrix_cols(m);
  if (capacity < rows * cols) return set_error(MNAR_E_OUT_OF_RANGE, "output buffer too small");
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) out[i * cols + j] = m->m(i, j);
  return MNAR_OK;
}

void mnar_fit_options_init(mnar_fit_options* opts) {
  if (!opts) return;
  const mnar::ImputeOptions d;
  opts->method = MNAR_MAR_FISTA;
  opts->has_lambda = 0;
  opts->lambda = 0.0;
  opts->grid_size = d.grid_size;
  opts->grid_ratio = d.grid_ratio;
  opts->holdout_fraction = d.holdout_fraction;
  opts->sigma2 = d.sigma2;
  opts->max_iters = d.max_iters;
  opts->rel_tol = d.rel_tol;
  opts->mcem_ns = d.mcem_ns;
  opts->mcem_max_iters = d.mcem_max_iters;
  opts->mcem_inner = 0;
  opts->mcem_shared = 0;
  opts->scale_columns = 0;
  opts->seed = d.seed;
  opts->threads = d.threads;
}

mnar_status mnar_fit(const mnar_matrix* y, const mnar_matrix* mask, const mnar_fit_options* opts,
                     mnar_fit_result** out) {
  if (!y || !mask || !opts || !out) return null_arg("y, mask, opts and out");
  return guarded([&] {
    auto r = std::make_unique<mnar_fit_result>();
    r->result = mnar::impute(y->m, mask->m, to_impute_options(*opts));
    r->has_matrices = true;
    r->completed.m = r->result.completed;
    r->estimate.m = r->result.estimate;
    *out = r.release();
    return MNAR_OK;
  });
}

mnar_status mnar_sweep(const mnar_matrix* y, const mnar_matrix* mask, const mnar_fit_options* opts,
                       mnar_fit_result** out) {
  if (!y || !mask || !opts || !out) return null_arg("y, mask, opts and out");
  return guarded([&] {
    const mnar::ImputeOptions io = to_impute_options(*opts);
    mnar::require(io.method != mnar::Method::MeanImpute, "sweep: MEAN_IMPUTE has no lambda");
    const mnar::Matrix observed = mnar::masked_data(y->m, mask->m);
    auto r = std::make_unique<mnar_fit_result>();
    r->result.method = io.method;
    r->result.sweep = mnar::cross_validate(observed, mask->m, mnar::method_lambda_grid(observed, mask->m, io), io);
    *out = r.release();
    return MNAR_OK;
  });
}

void mnar_fit_result_free(mnar_fit_result* r) { delete r; }

const mnar_matrix* mnar_fit_completed(const mnar_fit_result* r) {
  return r && r->has_matrices ? &r->completed : nullptr;
}
const mnar_matrix* mnar_fit_estimate(const mnar_fit_result* r) {
  return r && r->has_matrices ? &r->estimate : nullptr;
}
int mnar_fit_method(const mnar_fit_result* r) { return r ? method_id(r->result.method) : -1; }
int mnar_fit_has_lambda(const mnar_fit_result* r) { return r && r->result.lambda ? 1 : 0; }
double mnar_fit_lambda(const mnar_fit_result* r) { return r && r->result.lambda ? *r->result.lambda : 0.0; }
int mnar_fit_iterations(const mnar_fit_result* r) { return r ? r->result.iterations : 0; }
int mnar_fit_converged(const mnar_fit_result* r) { return r && r->result.converged ? 1 : 0; }
size_t mnar_fit_warning_count(const mnar_fit_result* r) { return r ? r->result.warnings.size() : 0; }
const char* mnar_fit_warning(const mnar_fit_result* r, size_t index) {
  if (!r || index >= r->result.warnings.size()) return nullptr;
  return r->result.warnings[index].c_str();
}

size_t mnar_fit_phi_count(const mnar_fit_result* r) {
  if (!r || !r->result.phi) return 0;
  return r->result.phi->columns.size();
}

int mnar_fit_phi_shared(const mnar_fit_result* r) {
  return r && r->result.phi && r->result.phi->mode == mnar::SharingMode::Shared ? 1 : 0;
}

mnar_status mnar_fit_phi(const mnar_fit_result* r, size_t index, size_t* column, double* slope, double* center) {
  if (!r || !column || !slope || !center) return null_arg("result and outputs");
  const size_t count = mnar_fit_phi_count(r);
  if (index >= count) return index_error("phi", index, count);
  const mnar::MechanismParams& params = *r->result.phi;
  const mnar::Index col = params.columns[index];
  const mnar::PhiPair& pair = params.for_column(col);
  *column = static_cast<size_t>(col);
  *slope = pair.slope;
  *center = pair.center;
  return MNAR_OK;
}

size_t mnar_fit_sweep_count(const mnar_fit_result* r) { return r ? r->result.sweep.size() : 0; }

mnar_status mnar_fit_sweep_point(const mnar_fit_result* r, size_t index, mnar_grid_point* out) {
  if (!r || !out) return null_arg("result and out");
  if (index >= r->result.sweep.size()) return index_error("sweep", index, r->result.sweep.size());
  const mnar::GridPoint& pt = r->result.sweep[index];
  out->lambda = pt.lambda;
  out->score = pt.score;
  out->ok = pt.ok ? 1 : 0;
  out->iterations = pt.iterations;
  out->objective = pt.objective;
  out->rank = static_cast<long>(pt.rank);
  out->error = pt.error.c_str();
  return MNAR_OK;
}

mnar_status mnar_estimate_sigma2(const mnar_matrix* y, const mnar_matrix* mask, size_t rank, double* out) {
  if (!y || !out) return null_arg("y and out");
  return guarded([&] {
    if (mask) {
      const mnar::Matrix observed = mnar::masked_data(y->m, mask->m);
      const mnar::Matrix filled =
          observed + (1.0 - mask->m.array()).matrix().cwiseProduct(mnar::mean_impute(y->m, mask->m));
      *out = mnar::estimate_sigma2(filled, static_cast<mnar::Index>(rank));
    } else {
      *out = mnar::estimate_sigma2(y->m, static_cast<mnar::Index>(rank));
    }
    return MNAR_OK;
  });
}

mnar_status mnar_scenario_create(const char* preset, mnar_scenario** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    auto s = std::make_unique<mnar_scenario>();
    if (preset) {
      bool found = false;
      for (const Preset& p : kPresets) {
        if (std::strcmp(p.name, preset) == 0) {
          s->s = p.make();
          found = true;
        }
      }
      if (!found) mnar::fail(mnar::ErrorCode::InvalidArgument, std::string("unknown preset '") + preset + "'");
    } else {
      s->s = mnar::univariate_scenario();
      s->s.name = "scenario";
    }
    *out = s.release();
    return MNAR_OK;
  });
}

void mnar_scenario_free(mnar_scenario* s) { delete s; }

mnar_status mnar_scenario_set(mnar_scenario* s, const char* key, const char* value) {
  if (!s || !key || !value) return null_arg("scenario, key and value");
  return guarded([&] {
    find_key(key).set(s->s, trim(value));
    return MNAR_OK;
  });
}

mnar_status mnar_scenario_get(const mnar_scenario* s, const char* key, char* buffer, size_t capacity,
                              size_t* needed) {
  if (!s || !key) return null_arg("scenario and key");
  return guarded([&] {
    const std::string value = find_key(key).get(s->s);
    if (needed) *needed = value.size() + 1;
    if (buffer && capacity > 0) {
      const size_t n = std::min(capacity - 1, value.size());
      std::memcpy(buffer, value.data(), n);
      buffer[n] = '\0';
      if (n < value.size()) return set_error(MNAR_E_OUT_OF_RANGE, "buffer too small for value of " + std::string(key));
    }
    return MNAR_OK;
  });
}

mnar_status mnar_scenario_validate(const mnar_scenario* s) {
  if (!s) return null_arg("scenario");
  return guarded([&] {
    mnar::resolve_scenario(s->s);
    return MNAR_OK;
  });
}

size_t mnar_scenario_key_count(void) { return key_table().size(); }

const char* mnar_scenario_key(size_t index) {
  return index < key_table().size() ? key_table()[index].key : nullptr;
}

size_t mnar_scenario_preset_count(void) { return std::size(kPresets); }

const char* mnar_scenario_preset(size_t index) { return index < std::size(kPresets) ? kPresets[index].name : nullptr; }

mnar_status mnar_run_campaign(const mnar_scenario* s, mnar_campaign_report** out) {
  if (!s || !out) return null_arg("scenario and out");
  return guarded([&] {
    auto r = std::make_unique<mnar_campaign_report>();
    r->report = mnar::run_campaign(s->s);
    r->resolved.s = r->report.scenario;
    *out = r.release();
    return MNAR_OK;
  });
}

void mnar_campaign_report_free(mnar_campaign_report* r) { delete r; }

size_t mnar_report_record_count(const mnar_campaign_report* r) { return r ? r->report.records.size() : 0; }

mnar_status mnar_report_record(const mnar_campaign_report* r, size_t index, mnar_record* out) {
  if (!r || !out) return null_arg("report and out");
  if (index >= r->report.records.size()) return index_error("record", index, r->report.records.size());
  const mnar::MethodRecord& rec = r->report.records[index];
  out->method = method_id(rec.method);
  out->replication = rec.replication;
  out->has_prediction_error = rec.prediction_error ? 1 : 0;
  out->prediction_error = rec.prediction_error.value_or(0.0);
  out->has_total_error = rec.total_error ? 1 : 0;
  out->total_error = rec.total_error.value_or(0.0);
  out->has_lambda = rec.has_lambda ? 1 : 0;
  out->lambda_prediction = rec.lambda_prediction;
  out->lambda_total = rec.lambda_total;
  out->wall_time_s = rec.wall_time_s;
  out->ok = rec.ok ? 1 : 0;
  out->error = rec.error.c_str();
  return MNAR_OK;
}

size_t mnar_report_summary_count(const mnar_campaign_report* r) { return r ? r->report.summaries.size() : 0; }

mnar_status mnar_report_summary(const mnar_campaign_report* r, size_t index, mnar_summary* out) {
  if (!r || !out) return null_arg("report and out");
  if (index >= r->report.summaries.size()) return index_error("summary", index, r->report.summaries.size());
  const mnar::MethodSummary& s = r->report.summaries[index];
  out->method = method_id(s.method);
  out->succeeded = s.succeeded;
  out->failed = s.failed;
  out->prediction_q1 = s.prediction.q1;
  out->prediction_median = s.prediction.median;
  out->prediction_q3 = s.prediction.q3;
  out->prediction_count = s.prediction.count;
  out->total_q1 = s.total.q1;
  out->total_median = s.total.median;
  out->total_q3 = s.total.q3;
  out->total_count = s.total.count;
  return MNAR_OK;
}

size_t mnar_report_win_rate_count(const mnar_campaign_report* r) { return r ? r->report.win_rates.size() : 0; }

mnar_status mnar_report_win_rate(const mnar_campaign_report* r, size_t index, mnar_win_rate* out) {
  if (!r || !out) return null_arg("report and out");
  if (index >= r->report.win_rates.size()) return index_error("win rate", index, r->report.win_rates.size());
  const mnar::WinRate& w = r->report.win_rates[index];
  out->method = method_id(w.method);
  out->versus = method_id(w.versus);
  out->prediction = w.prediction;
  out->total = w.total;
  out->pairs = w.pairs;
  return MNAR_OK;
}

size_t mnar_report_replication_count(const mnar_campaign_report* r) {
  return r ? r->report.missing_rates.size() : 0;
}

double mnar_report_missing_rate(const mnar_campaign_report* r, size_t replication) {
  if (!r || replication >= r->report.missing_rates.size()) return std::nan("");
  return r->report.missing_rates[replication];
}

double mnar_report_expected_missing_rate(const mnar_campaign_report* r) {
  return r ? r->report.expected_missing_rate : std::nan("");
}

int mnar_report_has_solved_center(const mnar_campaign_report* r) { return r && r->report.solved_center ? 1 : 0; }

double mnar_report_solved_center(const mnar_campaign_report* r) {
  return r && r->report.solved_center ? *r->report.solved_center : std::nan("");
}

const mnar_scenario* mnar_report_scenario(const mnar_campaign_report* r) { return r ? &r->resolved : nullptr; }

}  // extern "C"
