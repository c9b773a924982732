#include "mnar/sim.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mnar/error.hpp"
#include "mnar/mask_concat.hpp"
#include "mnar/mcem.hpp"
#include "mnar/parallel.hpp"

namespace mnar {
namespace {

constexpr std::array<std::pair<Method, std::string_view>, 6> kMethodNames{{
    {Method::ModelMcem, "MODEL_MCEM"},
    {Method::MaskConcat, "MASK_CONCAT"},
    {Method::MaskExpfam, "MASK_EXPFAM"},
    {Method::MarFista, "MAR_FISTA"},
    {Method::MarSoftImpute, "MAR_SOFTIMPUTE"},
    {Method::MeanImpute, "MEAN_IMPUTE"},
}};

// One fitted estimate per lambda, scored by both error metrics.
struct SweepPoint {
  double lambda = 0.0;
  std::optional<double> prediction;
  std::optional<double> total;
};

void pick(const std::vector<SweepPoint>& sweep, Selection selection, MethodRecord& rec) {
  auto argmin = [&](auto metric) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < sweep.size(); ++k) {
      const std::optional<double> v = metric(sweep[k]);
      if (!v) continue;
      if (!best || *v < *metric(sweep[*best])) best = k;
    }
    return best;
  };
  auto by_pred = [](const SweepPoint& s) { return s.prediction; };
  auto by_total = [](const SweepPoint& s) { return s.total; };

  std::optional<std::size_t> kp = argmin(by_pred);
  std::optional<std::size_t> kt = argmin(by_total);
  if (selection == Selection::Prediction && kp) kt = kp;
  if (selection == Selection::Total && kt) kp = kt;
  if (!kp) kp = kt;
  if (!kt) kt = kp;
  if (!kp) fail(ErrorCode::NumericalFailure, "no grid point produced a defined error");

  rec.prediction_error = sweep[*kp].prediction;
  rec.total_error = sweep[*kt].total;
  rec.lambda_prediction = sweep[*kp].lambda;
  rec.lambda_total = sweep[*kt].lambda;
  rec.has_lambda = true;
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "UNKNOWN";
}

std::optional<Method> method_from_name(std::string_view name) {
  for (const auto& [method, label] : kMethodNames)
    if (label == name) return method;
  return std::nullopt;
}

std::string_view selection_name(Selection s) {
  switch (s) {
    case Selection::Separate: return "separate";
    case Selection::Prediction: return "prediction";
    case Selection::Total: return "total";
  }
  return "separate";
}

std::optional<Selection> selection_from_name(std::string_view name) {
  if (name == "separate") return Selection::Separate;
  if (name == "prediction") return Selection::Prediction;
  if (name == "total") return Selection::Total;
  return std::nullopt;
}

LowRankFactors draw_factors(Index n, Index p, Index r, Rng& rng) {
  require(r >= 1 && r < std::min(n, p), "generate_low_rank: need 1 <= r < min(n, p)");
  std::normal_distribution<double> gauss(0.0, 1.0);
  LowRankFactors f{Matrix(n, r), Matrix(p, r)};
  for (Index k = 0; k < r; ++k)
    for (Index i = 0; i < n; ++i) f.left(i, k) = gauss(rng);
  for (Index k = 0; k < r; ++k)
    for (Index j = 0; j < p; ++j) f.right(j, k) = gauss(rng);
  return f;
}

Matrix compose_low_rank(const LowRankFactors& f) {
  Matrix theta = f.left * f.right.transpose();
  const double mean = theta.mean();
  const double var = (theta.array() - mean).square().sum() / static_cast<double>(theta.size() - 1);
  if (var > 0.0) theta /= std::sqrt(var);
  return theta;
}

Matrix generate_low_rank(Index n, Index p, Index r, Rng& rng) {
  return compose_low_rank(draw_factors(n, p, r, rng));
}

void decorrelate_columns(LowRankFactors& f, Index target, Index driver) {
  require(target != driver, "decorrelate_columns: target and driver must differ");
  require(target >= 0 && target < f.right.rows() && driver >= 0 && driver < f.right.rows(),
          "decorrelate_columns: column out of range");
  const Vector t = f.right.row(target).transpose();
  Vector d = f.right.row(driver).transpose();
  const double norm = d.norm();
  const double tt = t.squaredNorm();
  if (tt > 0.0) d -= (t.dot(d) / tt) * t;
  if (d.norm() > 0.0) d *= norm / d.norm();
  f.right.row(driver) = d.transpose();
}

Matrix add_noise(const Matrix& theta, double sigma2, Rng& rng) {
  require(sigma2 >= 0.0 && std::isfinite(sigma2), "add_noise: sigma2 must be >= 0");
  if (sigma2 == 0.0) return theta;
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2));
  Matrix y = theta;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) y(i, j) += gauss(rng);
  return y;
}

std::optional<double> prediction_error(const Matrix& theta_hat, const Matrix& y, const Matrix& mask) {
  if (theta_hat.rows() != y.rows() || theta_hat.cols() != y.cols() || mask.rows() != y.rows() ||
      mask.cols() != y.cols()) {
    fail(ErrorCode::DimensionMismatch, "prediction_error: dimension mismatch");
  }
  double num = 0.0, den = 0.0;
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      if (mask(i, j) != 0.0) continue;
      const double diff = theta_hat(i, j) - y(i, j);
      num += diff * diff;
      den += y(i, j) * y(i, j);
    }
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

std::optional<double> total_error(const Matrix& theta_hat, const Matrix& theta) {
  if (theta_hat.rows() != theta.rows() || theta_hat.cols() != theta.cols()) {
    fail(ErrorCode::DimensionMismatch, "total_error: dimension mismatch");
  }
  const double den = theta.squaredNorm();
  if (!(den > 0.0)) return std::nullopt;
  return (theta_hat - theta).squaredNorm() / den;
}

Matrix mean_impute(const Matrix& y, const Matrix& mask) {
  const Matrix observed = masked_data(y, mask);
  Matrix out(y.rows(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    const double count = mask.col(j).sum();
    if (count == 0.0) {
      fail(ErrorCode::InvalidArgument, "mean_impute: column " + std::to_string(j) + " is fully missing");
    }
    out.col(j).setConstant(observed.col(j).sum() / count);
  }
  return out;
}

double estimate_sigma2(const Matrix& y, Index r) {
  require(y.allFinite(), "estimate_sigma2: y must be complete and finite");
  const double n = static_cast<double>(y.rows());
  const double p = static_cast<double>(y.cols());
  const double rr = static_cast<double>(r);
  require(r >= 0 && r <= std::min(y.rows(), y.cols()), "estimate_sigma2: rank out of range");
  const double dof = n * p - n * rr - rr * p + rr * rr;
  require(dof > 0.0, "estimate_sigma2: non-positive degrees of freedom");
  if (r == 0) return y.squaredNorm() / dof;
  const SvdFactors f = svd(y);
  const Matrix fit = f.u.leftCols(r) * f.singular_values.head(r).asDiagonal() * f.v.leftCols(r).transpose();
  return (y - fit).squaredNorm() / dof;
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  q.count = static_cast<int>(values.size());
  if (values.empty()) {
    q.q1 = q.median = q.q3 = std::numeric_limits<double>::quiet_NaN();
    return q;
  }
  std::sort(values.begin(), values.end());
  auto at = [&](double prob) {
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

void Scenario::validate() const {
  require(n >= 2 && p >= 2, "scenario: n and p must be >= 2");
  require(r >= 1 && r < std::min(n, p), "scenario: need 1 <= r < min(n, p)");
  require(sigma2 >= 0.0 && std::isfinite(sigma2), "scenario: sigma2 must be >= 0");
  require(replications >= 1, "scenario: replications must be >= 1");
  require(!methods.empty(), "scenario: no methods selected");
  require(grid_size >= 1, "scenario: grid_size must be >= 1");
  require(grid_ratio > 1.0, "scenario: grid_ratio must be > 1");
  require(max_iters >= 1 && rel_tol >= 0.0, "scenario: invalid solver settings");
  require(mcem_ns >= 1 && mcem_max_iters >= 1, "scenario: invalid MCEM settings");
  if (target_missing_rate) {
    require(*target_missing_rate > 0.0 && *target_missing_rate < 1.0,
            "scenario: target_missing_rate must be in (0, 1)");
    require(mechanism.family != MechanismFamily::SelfMaskedProbit,
            "scenario: target_missing_rate needs a logistic mechanism");
  }
  if (decorrelate_driver) {
    require(mechanism.family == MechanismFamily::MarDriver,
            "scenario: decorrelate_driver needs a MAR driver mechanism");
  }
  const bool uses_mcem = std::find(methods.begin(), methods.end(), Method::ModelMcem) != methods.end();
  if (uses_mcem) {
    const double bound = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    require(std::sqrt(sigma2) > bound, "scenario: MODEL_MCEM needs sigma > (2*pi)^(-1/2)");
  }
  mechanism.validate(p);
}

Scenario resolve_scenario(const Scenario& s) {
  Scenario out = s;
  if (!s.target_missing_rate) {
    out.validate();
    return out;
  }
  const double targets = static_cast<double>(s.mechanism.target_columns.size());
  const double per_column = *s.target_missing_rate * static_cast<double>(s.p) / targets;
  require(per_column < 1.0, "scenario: target_missing_rate unreachable with these target columns");
  // Entries of theta have unit variance, so y is roughly N(0, 1 + sigma2).
  for (PhiPair& pair : out.mechanism.params.pairs) {
    pair.center = solve_center_for_rate(pair.slope, per_column, 0.0, 1.0 + s.sigma2);
  }
  out.target_missing_rate.reset();
  out.validate();
  return out;
}

ReplicationData simulate_replication(const Scenario& s, int replication) {
  Rng rng = make_rng(s.seed, static_cast<std::uint64_t>(replication));
  LowRankFactors factors = draw_factors(s.n, s.p, s.r, rng);
  if (s.decorrelate_driver) {
    for (Index target : s.mechanism.target_columns) {
      decorrelate_columns(factors, target, *s.mechanism.driver_column);
    }
  }
  ReplicationData d;
  d.theta = compose_low_rank(factors);
  d.y = add_noise(d.theta, s.sigma2, rng);
  d.mask = sample_mask(d.y, s.mechanism, rng);
  double sum = 0.0;
  for (Index j : s.mechanism.target_columns)
    for (Index i = 0; i < s.n; ++i) sum += s.mechanism.missing_probability(d.y, i, j);
  d.expected_missing = sum / static_cast<double>(s.n * s.p);
  return d;
}

MethodRecord run_method(const Scenario& s, const ReplicationData& d, Method method, int replication) {
  MethodRecord rec;
  rec.method = method;
  rec.replication = replication;
  const auto start = std::chrono::steady_clock::now();
  try {
    auto score = [&](double lambda, const Matrix& estimate) {
      return SweepPoint{lambda, prediction_error(estimate, d.y, d.mask), total_error(estimate, d.theta)};
    };
    std::vector<SweepPoint> sweep;
    std::string last_error;

    SolveOptions base;
    base.max_iters = s.max_iters;
    base.rel_tol = s.rel_tol;

    switch (method) {
      case Method::MeanImpute: {
        const Matrix est = mean_impute(d.y, d.mask);
        rec.prediction_error = prediction_error(est, d.y, d.mask);
        rec.total_error = total_error(est, d.theta);
        break;
      }
      case Method::MarFista:
      case Method::MarSoftImpute: {
        base.algorithm = method == Method::MarFista ? Algorithm::Fista : Algorithm::IstaSoftImpute;
        const Matrix observed = masked_data(d.y, d.mask);
        for (double lambda : log_lambda_grid(spectral_norm(observed), s.grid_size, s.grid_ratio)) {
          try {
            SolveOptions o = base;
            o.lambda = lambda;
            const SolveResult res = solve(d.y, d.mask, o);
            base.initial = res.theta_hat;
            sweep.push_back(score(lambda, res.theta_hat));
          } catch (const std::exception& e) {
            last_error = e.what();
          }
        }
        break;
      }
      case Method::MaskConcat: {
        base.algorithm = Algorithm::Fista;
        for (double lambda : log_lambda_grid(concat_lambda_max(d.y, d.mask), s.grid_size, s.grid_ratio)) {
          try {
            const SolveResult res = concat_solve_full(d.y, d.mask, lambda, base);
            base.initial = res.theta_hat;
            sweep.push_back(score(lambda, res.theta_hat.leftCols(s.p)));
          } catch (const std::exception& e) {
            last_error = e.what();
          }
        }
        break;
      }
      case Method::MaskExpfam: {
        const std::vector<LinkFunction> links = default_links(s.p, s.sigma2);
        ExpFamOptions eo;
        eo.max_iters = s.max_iters;
        eo.rel_tol = s.rel_tol;
        for (double lambda : log_lambda_grid(expfam_lambda_max(d.y, d.mask, links), s.grid_size, s.grid_ratio)) {
          try {
            const ExpFamResult res = expfam_solve(d.y, d.mask, lambda, links, eo);
            eo.initial = res.natural;
            sweep.push_back(score(lambda, res.imputed));
          } catch (const std::exception& e) {
            last_error = e.what();
          }
        }
        break;
      }
      case Method::ModelMcem: {
        McemConfig cfg;
        cfg.ns = s.mcem_ns;
        cfg.max_em_iters = s.mcem_max_iters;
        cfg.inner_solver = s.mcem_inner;
        cfg.sigma = std::sqrt(s.sigma2);
        cfg.sharing = s.mcem_sharing;
        cfg.inner_max_iters = s.max_iters;
        cfg.seed = derive_seed(s.seed ^ 0x6d63656dULL, static_cast<std::uint64_t>(replication));
        cfg.threads = 1;
        const Matrix observed = masked_data(d.y, d.mask);
        // The grid is over singular-value thresholds, shared with the MAR
        // solvers; the MCEM penalty is threshold / sigma^2.
        for (double threshold : log_lambda_grid(spectral_norm(observed), s.grid_size, s.grid_ratio)) {
          try {
            cfg.lambda = threshold / s.sigma2;
            const McemState st = mcem_fit(d.y, d.mask, cfg);
            sweep.push_back(score(cfg.lambda, st.theta_hat));
          } catch (const std::exception& e) {
            last_error = e.what();
          }
        }
        break;
      }
    }

    if (method != Method::MeanImpute) {
      if (sweep.empty()) fail(ErrorCode::NumericalFailure, "every grid point failed: " + last_error);
      pick(sweep, s.selection, rec);
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

CampaignReport run_campaign(const Scenario& scenario) {
  CampaignReport report;
  report.scenario = resolve_scenario(scenario);
  const Scenario& s = report.scenario;
  if (scenario.target_missing_rate) {
    report.solved_center = s.mechanism.params.pairs.front().center;
  }

  const auto reps = static_cast<std::size_t>(s.replications);
  const std::size_t methods = s.methods.size();
  std::vector<MethodRecord> records(reps * methods);
  std::vector<double> missing(reps), expected(reps);

  parallel_for(reps, s.threads, [&](std::size_t rep) {
    const int r = static_cast<int>(rep);
    const ReplicationData d = simulate_replication(s, r);
    missing[rep] = 1.0 - d.mask.mean();
    expected[rep] = d.expected_missing;
    for (std::size_t m = 0; m < methods; ++m) {
      records[rep * methods + m] = run_method(s, d, s.methods[m], r);
    }
  });

  report.records = std::move(records);
  report.missing_rates = std::move(missing);
  double expected_sum = 0.0;
  for (double e : expected) expected_sum += e;
  report.expected_missing_rate = expected_sum / static_cast<double>(reps);

  for (Method m : s.methods) {
    MethodSummary sum;
    sum.method = m;
    std::vector<double> pred, tot;
    for (const MethodRecord& rec : report.records) {
      if (rec.method != m) continue;
      if (!rec.ok) {
        ++sum.failed;
        continue;
      }
      ++sum.succeeded;
      if (rec.prediction_error) pred.push_back(*rec.prediction_error);
      if (rec.total_error) tot.push_back(*rec.total_error);
    }
    sum.prediction = quartiles(std::move(pred));
    sum.total = quartiles(std::move(tot));
    report.summaries.push_back(sum);
  }

  for (std::size_t a = 0; a < methods; ++a) {
    for (std::size_t b = 0; b < methods; ++b) {
      if (a == b) continue;
      WinRate w;
      w.method = s.methods[a];
      w.versus = s.methods[b];
      int pred_wins = 0, total_wins = 0;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const MethodRecord& ra = report.records[rep * methods + a];
        const MethodRecord& rb = report.records[rep * methods + b];
        if (!ra.ok || !rb.ok) continue;
        ++w.pairs;
        if (ra.prediction_error && rb.prediction_error && *ra.prediction_error < *rb.prediction_error) ++pred_wins;
        if (ra.total_error && rb.total_error && *ra.total_error < *rb.total_error) ++total_wins;
      }
      if (w.pairs > 0) {
        w.prediction = static_cast<double>(pred_wins) / w.pairs;
        w.total = static_cast<double>(total_wins) / w.pairs;
      }
      report.win_rates.push_back(w);
    }
  }
  return report;
}

Scenario univariate_scenario() {
  Scenario s;
  s.name = "univariate";
  s.n = 100;
  s.p = 4;
  s.r = 1;
  s.sigma2 = 0.8;
  s.mechanism.family = MechanismFamily::SelfMaskedLogistic;
  s.mechanism.target_columns = {0};
  s.mechanism.params = MechanismParams::per_column({0}, {{3.0, 0.0}});
  s.replications = 50;
  return s;
}

Scenario bivariate_scenario() {
  Scenario s;
  s.name = "bivariate";
  s.n = 100;
  s.p = 50;
  s.r = 4;
  s.sigma2 = 0.8;
  s.mechanism.family = MechanismFamily::SelfMaskedLogistic;
  s.mechanism.target_columns = {0, 1};
  s.mechanism.params = MechanismParams::per_column({0, 1}, {{3.0, 0.0}, {2.0, 1.0}});
  s.replications = 50;
  return s;
}

Scenario multivariate_scenario(double sigma2) {
  Scenario s;
  s.name = "multivariate";
  s.n = 100;
  s.p = 20;
  s.r = 4;
  s.sigma2 = sigma2;
  s.mechanism.family = MechanismFamily::SelfMaskedLogistic;
  for (Index j = 0; j < 10; ++j) s.mechanism.target_columns.push_back(j);
  s.mechanism.params = MechanismParams::shared(s.mechanism.target_columns, {3.0, 0.0});
  s.target_missing_rate = 0.25;
  s.mcem_sharing = SharingMode::Shared;
  s.replications = 50;
  return s;
}

Scenario mar_driver_scenario() {
  Scenario s;
  s.name = "mar_driver";
  s.n = 100;
  s.p = 50;
  s.r = 4;
  s.sigma2 = 0.8;
  s.mechanism.family = MechanismFamily::MarDriver;
  s.mechanism.target_columns = {0};
  s.mechanism.driver_column = 1;
  s.mechanism.params = MechanismParams::per_column({0}, {{3.0, 0.0}});
  s.decorrelate_driver = true;
  s.replications = 50;
  return s;
}

Scenario probit_scenario() {
  Scenario s = univariate_scenario();
  s.name = "probit";
  s.mechanism.family = MechanismFamily::SelfMaskedProbit;
  s.mechanism.params = {};
  return s;
}

}  // namespace mnar
