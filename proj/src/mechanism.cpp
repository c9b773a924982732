#include "mnar/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mnar/error.hpp"

namespace mnar {
namespace {

constexpr double kMinSlope = 1e-12;

// log(1 / (1 + exp(-z))) without overflow.
double log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_column(Index column, Index cols, const char* what) {
  if (column < 0 || column >= cols) {
    std::ostringstream msg;
    msg << what << ": column " << column << " out of range [0, " << cols << ")";
    fail(ErrorCode::InvalidArgument, msg.str());
  }
}

}  // namespace

PhiPair PhiPair::from_linear(double intercept, double slope) {
  // A vanishing slope leaves the center undetermined; keep the product
  // slope * center equal to -intercept with a tiny non-zero slope.
  if (std::abs(slope) < kMinSlope) slope = slope < 0.0 ? -kMinSlope : kMinSlope;
  return PhiPair{slope, -intercept / slope};
}

MechanismParams MechanismParams::per_column(std::vector<Index> columns,
                                            std::vector<PhiPair> pairs) {
  MechanismParams p;
  p.mode = SharingMode::PerColumn;
  p.columns = std::move(columns);
  p.pairs = std::move(pairs);
  p.validate();
  return p;
}

MechanismParams MechanismParams::shared(std::vector<Index> columns, PhiPair pair) {
  MechanismParams p;
  p.mode = SharingMode::Shared;
  p.columns = std::move(columns);
  p.pairs = {pair};
  p.validate();
  return p;
}

bool MechanismParams::covers(Index column) const {
  return std::find(columns.begin(), columns.end(), column) != columns.end();
}

const PhiPair& MechanismParams::for_column(Index column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) {
    fail(ErrorCode::InvalidArgument,
         "mechanism parameters do not cover column " + std::to_string(column));
  }
  if (mode == SharingMode::Shared) return pairs.front();
  return pairs[static_cast<std::size_t>(it - columns.begin())];
}

void MechanismParams::validate() const {
  if (mode == SharingMode::Shared) {
    require(pairs.size() == 1, "shared mechanism parameters need exactly one pair");
  } else {
    require(pairs.size() == columns.size(),
            "per-column mechanism parameters need one pair per column");
  }
  for (const PhiPair& pair : pairs) {
    require(std::isfinite(pair.slope) && std::isfinite(pair.center),
            "mechanism parameters must be finite");
  }
}

void MechanismSpec::validate(Index cols) const {
  require(!target_columns.empty(), "mechanism: target column set is empty");
  for (Index j : target_columns) check_column(j, cols, "mechanism target");
  std::vector<Index> sorted = target_columns;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          "mechanism: duplicate target column");

  if (family == MechanismFamily::MarDriver) {
    require(driver_column.has_value(), "mechanism: MAR driver column is required");
    check_column(*driver_column, cols, "mechanism driver");
    require(std::find(target_columns.begin(), target_columns.end(), *driver_column) ==
                target_columns.end(),
            "mechanism: driver column must not be a target column");
  }
  if (family != MechanismFamily::SelfMaskedProbit) {
    params.validate();
    for (Index j : target_columns) {
      require(params.covers(j),
              "mechanism: no parameters for target column " + std::to_string(j));
    }
  }
}

double MechanismSpec::missing_probability(const Matrix& y, Index i, Index j) const {
  switch (family) {
    case MechanismFamily::SelfMaskedLogistic:
      return logistic_missing_prob(y(i, j), params.for_column(j));
    case MechanismFamily::SelfMaskedProbit:
      return probit_missing_prob(y(i, j));
    case MechanismFamily::MarDriver:
      return logistic_missing_prob(y(i, *driver_column), params.for_column(j));
  }
  return 0.0;
}

double logistic_missing_prob(double y, double slope, double center) {
  return sigmoid(slope * (y - center));
}

double logistic_missing_prob(double y, const PhiPair& phi) {
  return logistic_missing_prob(y, phi.slope, phi.center);
}

double log_logistic_missing_prob(double y, const PhiPair& phi) {
  return log_sigmoid(phi.slope * (y - phi.center));
}

double log_logistic_observed_prob(double y, const PhiPair& phi) {
  return log_sigmoid(-phi.slope * (y - phi.center));
}

double probit_missing_prob(double y) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); }

Matrix sample_mask(const Matrix& y, const MechanismSpec& spec, Rng& rng) {
  require(y.allFinite(), "sample_mask: data must be finite");
  spec.validate(y.cols());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix mask = Matrix::Ones(y.rows(), y.cols());
  std::vector<Index> targets = spec.target_columns;
  std::sort(targets.begin(), targets.end());
  for (Index j : targets) {
    for (Index i = 0; i < y.rows(); ++i) {
      const double p_missing = spec.missing_probability(y, i, j);
      if (uniform(rng) < p_missing) mask(i, j) = 0.0;
    }
  }
  return mask;
}

void SirOptions::validate() const {
  require(sample_count >= 1, "SIR: sample count must be >= 1");
  require(proposal_count >= sample_count, "SIR: proposal count must be >= sample count");
  // Domination condition for the Gaussian proposal.
  const double bound = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  if (!(sigma > bound) || !std::isfinite(sigma)) {
    std::ostringstream msg;
    msg << "SIR: sigma must exceed (2*pi)^(-1/2) = " << bound << ", got " << sigma;
    fail(ErrorCode::InvalidArgument, msg.str());
  }
}

std::vector<double> sir_sample(double theta, const PhiPair& phi, int omega,
                               const SirOptions& opts, Rng& rng) {
  require(omega == 0, "SIR: only missing cells (omega = 0) are sampled");
  opts.validate();
  if (!std::isfinite(theta) || !std::isfinite(phi.slope) || !std::isfinite(phi.center)) {
    fail(ErrorCode::DegenerateWeights, "SIR: non-finite theta or mechanism parameters");
  }

  const auto m = static_cast<std::size_t>(opts.proposal_count);
  std::normal_distribution<double> proposal(theta, opts.sigma);
  std::vector<double> draws(m);
  std::vector<double> log_weights(m);
  double max_log_weight = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    draws[k] = proposal(rng);
    // Target g = N(theta, sigma^2) * P(missing | x); the Gaussian factor
    // cancels against the proposal density.
    log_weights[k] = log_logistic_missing_prob(draws[k], phi);
    max_log_weight = std::max(max_log_weight, log_weights[k]);
  }
  if (!std::isfinite(max_log_weight)) {
    fail(ErrorCode::DegenerateWeights, "SIR: importance weights are all zero or non-finite");
  }

  std::vector<double> cumulative(m);
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    total += std::exp(log_weights[k] - max_log_weight);
    cumulative[k] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    fail(ErrorCode::DegenerateWeights, "SIR: importance weights sum to zero or non-finite");
  }

  std::uniform_real_distribution<double> uniform(0.0, total);
  std::vector<double> out(static_cast<std::size_t>(opts.sample_count));
  for (double& value : out) {
    const double u = uniform(rng);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    value = draws[static_cast<std::size_t>(it - cumulative.begin())];
  }
  return out;
}

void LogisticDesign::add(double omega_value, double v, double w) {
  omega.push_back(omega_value);
  value.push_back(v);
  weight.push_back(w);
}

void LogisticDesign::append(const LogisticDesign& other) {
  omega.insert(omega.end(), other.omega.begin(), other.omega.end());
  value.insert(value.end(), other.value.begin(), other.value.end());
  weight.insert(weight.end(), other.weight.begin(), other.weight.end());
}

double LogisticDesign::total_weight() const {
  return std::accumulate(weight.begin(), weight.end(), 0.0);
}

double logistic_log_likelihood(const LogisticDesign& design, double intercept, double slope) {
  double ll = 0.0;
  for (std::size_t r = 0; r < design.rows(); ++r) {
    const double eta = intercept + slope * design.value[r];
    const bool missing = design.omega[r] == 0.0;
    ll += design.weight[r] * (missing ? log_sigmoid(eta) : log_sigmoid(-eta));
  }
  return ll;
}

namespace {

struct NewtonSystem {
  double g0 = 0.0, g1 = 0.0;           // gradient
  double h00 = 0.0, h01 = 0.0, h11 = 0.0;  // negative Hessian
};

NewtonSystem newton_system(const LogisticDesign& d, double a, double b) {
  NewtonSystem s;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double v = d.value[r];
    const double w = d.weight[r];
    const double mu = sigmoid(a + b * v);
    const double resid = (d.omega[r] == 0.0 ? 1.0 : 0.0) - mu;
    const double curv = w * mu * (1.0 - mu);
    s.g0 += w * resid;
    s.g1 += w * resid * v;
    s.h00 += curv;
    s.h01 += curv * v;
    s.h11 += curv * v * v;
  }
  return s;
}

// Intercept-only Newton with the slope held fixed.
double fit_intercept(const LogisticDesign& d, double a, double b, const LogisticFitOptions& opts) {
  double ll = logistic_log_likelihood(d, a, b);
  for (int it = 0; it < opts.max_iters; ++it) {
    const NewtonSystem s = newton_system(d, a, b);
    if (s.h00 <= 0.0) break;
    double step = s.g0 / s.h00;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, step *= 0.5) {
      const double cand = logistic_log_likelihood(d, a + step, b);
      if (cand >= ll) {
        a += step;
        const double gain = cand - ll;
        ll = cand;
        accepted = gain > opts.tol * (std::abs(ll) + opts.tol);
        break;
      }
    }
    if (!accepted) break;
  }
  return a;
}

}  // namespace

LogisticFit fit_logistic_column(const LogisticDesign& design, const LogisticFitOptions& opts) {
  require(design.omega.size() == design.value.size() && design.value.size() == design.weight.size(),
          "fit_logistic_column: ragged design");
  require(opts.slope_bound > 0.0, "fit_logistic_column: slope bound must be > 0");

  double w_missing = 0.0, w_total = 0.0;
  for (std::size_t r = 0; r < design.rows(); ++r) {
    const double o = design.omega[r];
    const double w = design.weight[r];
    require(o == 0.0 || o == 1.0, "fit_logistic_column: omega must be 0 or 1");
    require(w >= 0.0 && std::isfinite(w), "fit_logistic_column: weights must be finite and >= 0");
    require(std::isfinite(design.value[r]), "fit_logistic_column: non-finite covariate");
    w_total += w;
    if (o == 0.0) w_missing += w;
  }
  if (w_missing <= 0.0) fail(ErrorCode::InvalidArgument, "fit_logistic_column: no missing rows");
  if (w_missing >= w_total) fail(ErrorCode::InvalidArgument, "fit_logistic_column: no observed rows");

  LogisticFit fit;
  const double rate = w_missing / w_total;
  double a = std::log(rate / (1.0 - rate));
  double b = 0.0;
  double ll = logistic_log_likelihood(design, a, b);
  fit.log_likelihood_trace.push_back(ll);

  for (int it = 0; it < opts.max_iters; ++it) {
    const NewtonSystem s = newton_system(design, a, b);
    const double det = s.h00 * s.h11 - s.h01 * s.h01;
    double da, db;
    if (det > 1e-300 * std::max(1.0, s.h00 * s.h11)) {
      da = (s.h11 * s.g0 - s.h01 * s.g1) / det;
      db = (s.h00 * s.g1 - s.h01 * s.g0) / det;
    } else {
      // Singular curvature (e.g. constant covariate): plain gradient ascent.
      const double scale = 1.0 / std::max(1.0, s.h00 + s.h11);
      da = s.g0 * scale;
      db = s.g1 * scale;
    }

    bool accepted = false;
    double gain = 0.0;
    for (int half = 0; half < 40; ++half, da *= 0.5, db *= 0.5) {
      const double cand = logistic_log_likelihood(design, a + da, b + db);
      if (cand > ll) {
        gain = cand - ll;
        a += da;
        b += db;
        ll = cand;
        accepted = true;
        break;
      }
    }
    fit.iterations = it + 1;
    if (!accepted) {
      fit.converged = true;
      break;
    }
    fit.log_likelihood_trace.push_back(ll);

    if (std::abs(b) > opts.slope_bound) {
      b = std::copysign(opts.slope_bound, b);
      a = fit_intercept(design, a, b, opts);
      ll = logistic_log_likelihood(design, a, b);
      fit.clamped = true;
      break;
    }
    if (gain <= opts.tol * (std::abs(ll) + opts.tol)) {
      fit.converged = true;
      break;
    }
  }

  // A likelihood numerically at its supremum of zero means the classes are
  // separated and the slope diverges; report it at the bound.
  if (!fit.clamped && ll > -1e-9 * w_total && b != 0.0) {
    a *= opts.slope_bound / std::abs(b);
    b = std::copysign(opts.slope_bound, b);
    a = fit_intercept(design, a, b, opts);
    ll = logistic_log_likelihood(design, a, b);
    fit.clamped = true;
    fit.converged = false;
  }

  fit.intercept = a;
  fit.slope = b;
  fit.log_likelihood = ll;
  fit.phi = PhiPair::from_linear(a, b);
  const NewtonSystem s = newton_system(design, a, b);
  const double det = s.h00 * s.h11 - s.h01 * s.h01;
  fit.slope_std_error = det > 0.0 ? std::sqrt(s.h00 / det) : std::numeric_limits<double>::infinity();
  return fit;
}

double expected_missing_rate(const PhiPair& phi, double mean, double variance) {
  require(variance > 0.0, "expected_missing_rate: variance must be > 0");
  // Composite Simpson over mean +/- 12 sd.
  const double sd = std::sqrt(variance);
  constexpr int kIntervals = 4000;
  const double lo = mean - 12.0 * sd;
  const double h = 24.0 * sd / kIntervals;
  double sum = 0.0;
  for (int k = 0; k <= kIntervals; ++k) {
    const double x = lo + h * k;
    const double z = (x - mean) / sd;
    const double f = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi)) *
                     logistic_missing_prob(x, phi);
    const double coef = (k == 0 || k == kIntervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    sum += coef * f;
  }
  return sum * h / 3.0;
}

double solve_center_for_rate(double slope, double target, double mean, double variance) {
  require(target > 0.0 && target < 1.0, "solve_center_for_rate: target must be in (0, 1)");
  require(slope != 0.0, "solve_center_for_rate: slope must be non-zero");
  // The rate is monotone in the center; bracket and bisect.
  const double sd = std::sqrt(variance);
  double lo = mean - 50.0 * sd - 50.0 / std::abs(slope);
  double hi = mean + 50.0 * sd + 50.0 / std::abs(slope);
  auto rate = [&](double c) { return expected_missing_rate({slope, c}, mean, variance); };
  // For slope > 0 the rate decreases with the center.
  const bool decreasing = slope > 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const bool too_high = rate(mid) > target;
    if (too_high == decreasing) lo = mid; else hi = mid;
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace mnar
