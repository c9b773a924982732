#pragma once

#include <optional>
#include <vector>

#include "mnar/linalg.hpp"
#include "mnar/random.hpp"

namespace mnar {

enum class MechanismFamily { SelfMaskedLogistic, SelfMaskedProbit, MarDriver };
enum class SharingMode { PerColumn, Shared };

/// Logistic mechanism parameters for one column:
/// P(missing | y) = 1 / (1 + exp(-slope * (y - center))).
struct PhiPair {
  double slope = 0.0;
  double center = 0.0;

  /// Reparametrise a GLM linear predictor intercept + slope * y.
  static PhiPair from_linear(double intercept, double slope);
  double intercept() const { return -slope * center; }
};

struct MechanismParams {
  SharingMode mode = SharingMode::PerColumn;
  /// Columns the parameters apply to.
  std::vector<Index> columns;
  /// One pair per entry of `columns` (PerColumn) or exactly one (Shared).
  std::vector<PhiPair> pairs;

  static MechanismParams per_column(std::vector<Index> columns, std::vector<PhiPair> pairs);
  static MechanismParams shared(std::vector<Index> columns, PhiPair pair);

  bool covers(Index column) const;
  const PhiPair& for_column(Index column) const;
  void validate() const;
};

struct MechanismSpec {
  MechanismFamily family = MechanismFamily::SelfMaskedLogistic;
  MechanismParams params;
  /// MarDriver only: the column whose value drives missingness of targets.
  std::optional<Index> driver_column;
  std::vector<Index> target_columns;

  void validate(Index cols) const;
  /// Probability that cell (i, j) is missing given the complete data y.
  double missing_probability(const Matrix& y, Index i, Index j) const;
};

/// Probability of being missing under the logistic self-masked model.
/// Stable for any finite argument.
double logistic_missing_prob(double y, double slope, double center);
double logistic_missing_prob(double y, const PhiPair& phi);
/// log of the above, and of its complement; both finite for finite input.
double log_logistic_missing_prob(double y, const PhiPair& phi);
double log_logistic_observed_prob(double y, const PhiPair& phi);

/// Standard Gaussian CDF of y.
double probit_missing_prob(double y);

/// Bernoulli mask (1 = observed) drawn cell by cell from the mechanism.
Matrix sample_mask(const Matrix& y, const MechanismSpec& spec, Rng& rng);

struct SirOptions {
  int proposal_count = 10000;
  int sample_count = 1000;
  /// Noise standard deviation of the Gaussian data model.
  double sigma = 1.0;

  void validate() const;
};

/// Proposals per retained draw when only Ns is given.
inline constexpr int kSirProposalRatio = 10;

/// Sampling importance resampling for [y | missing; theta, phi]: proposals
/// from N(theta, sigma^2), weights proportional to P(missing | x), then
/// multinomial resampling of sample_count values.
std::vector<double> sir_sample(double theta, const PhiPair& phi, int omega,
                               const SirOptions& opts, Rng& rng);

/// Stacked (Omega, v) rows for one logistic fit. A row weight w stands for w
/// identical stacked rows.
struct LogisticDesign {
  std::vector<double> omega;
  std::vector<double> value;
  std::vector<double> weight;

  void add(double omega_value, double v, double w = 1.0);
  void append(const LogisticDesign& other);
  std::size_t rows() const { return omega.size(); }
  double total_weight() const;
};

struct LogisticFitOptions {
  int max_iters = 100;
  double tol = 1e-10;
  /// Separation guard: |slope| is clamped to this bound.
  double slope_bound = 50.0;
};

struct LogisticFit {
  PhiPair phi;
  double intercept = 0.0;
  double slope = 0.0;
  double slope_std_error = 0.0;
  double log_likelihood = 0.0;
  /// Log-likelihood after every accepted Newton step, starting value first.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  /// Set when separation drove the slope to the bound.
  bool clamped = false;
};

/// Maximum-likelihood logistic regression of the missingness indicator
/// (1 - Omega) on v, by Newton-Raphson (IRLS) with step halving.
LogisticFit fit_logistic_column(const LogisticDesign& design, const LogisticFitOptions& opts = {});

/// Weighted log-likelihood of the design at a linear predictor a + b v.
double logistic_log_likelihood(const LogisticDesign& design, double intercept, double slope);

/// Numerical solve for the center giving an expected missing rate `target`
/// when y ~ N(mean, variance) and the slope is fixed.
double solve_center_for_rate(double slope, double target, double mean, double variance);

/// E[P(missing | y)] for y ~ N(mean, variance), by quadrature.
double expected_missing_rate(const PhiPair& phi, double mean, double variance);

}  // namespace mnar
