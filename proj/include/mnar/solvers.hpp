#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mnar/linalg.hpp"

namespace mnar {

enum class Algorithm { IstaSoftImpute, Fista };

/// Momentum seed used by the accelerated solver unless overridden.
inline constexpr double kDefaultKappa0 = 0.1;
/// Offset in the denominator of the relative-change stopping rule.
inline constexpr double kStopDelta = 1e-3;

struct SolveOptions {
  double lambda = 0.0;
  int max_iters = 1000;
  /// Stop once ||T_t - T_{t-1}||_F / (||T_{t-1}||_F + delta) <= rel_tol.
  /// Zero runs exactly max_iters iterations.
  double rel_tol = 1e-6;
  Algorithm algorithm = Algorithm::Fista;
  /// FISTA momentum seed; 1.0 gives the textbook recursion.
  double kappa0 = kDefaultKappa0;
  double delta = kStopDelta;
  /// Starting iterate; zero matrix when empty.
  std::optional<Matrix> initial;
};

struct SolveResult {
  Matrix theta_hat;
  /// Objective 0.5 ||(Y - T) o M||_F^2 + lambda ||T||_* at every iterate.
  std::vector<double> objective_trace;
  int iterations_run = 0;
  bool converged = false;
  double lambda = 0.0;
  Algorithm algorithm = Algorithm::Fista;

  double final_objective() const {
    return objective_trace.empty() ? 0.0 : objective_trace.back();
  }
};

/// Checks shapes, binary mask and finiteness of y on observed cells, and
/// returns M o Y with unobserved cells set to zero (whatever placeholder
/// they held, NaN included).
Matrix masked_data(const Matrix& y, const Matrix& mask);

void validate_mask(const Matrix& mask);

/// M o (T - Y), with unobserved entries of y ignored.
Matrix weighted_ls_gradient(const Matrix& theta, const Matrix& y, const Matrix& mask);

double masked_objective(const Matrix& theta, const Matrix& y, const Matrix& mask,
                        double lambda);

/// prox_{lambda ||.||_*}(T - grad h(T)), the unit-step proximal gradient map.
Matrix proximal_gradient_step(const Matrix& theta, const Matrix& y, const Matrix& mask,
                              double lambda);

/// prox_{lambda ||.||_*}(M o Y + (1 - M) o T), the softImpute update.
Matrix soft_impute_step(const Matrix& theta, const Matrix& y, const Matrix& mask,
                        double lambda);

SolveResult ista_solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts);
SolveResult fista_solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts);

/// Dispatches on opts.algorithm.
SolveResult solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts);

/// `count` log-spaced values from lambda_max down to lambda_max / ratio.
std::vector<double> log_lambda_grid(double lambda_max, int count = 15, double ratio = 100.0);

struct GridPoint {
  double lambda = 0.0;
  double score = 0.0;
  bool ok = false;
  std::string error;
  int iterations = 0;
  double objective = 0.0;
  Index rank = 0;
};

struct GridSearchResult {
  double best_lambda = 0.0;
  SolveResult result;
  std::vector<GridPoint> points;
};

struct GridOptions {
  bool warm_start = true;
  /// Only honoured when warm_start is false.
  unsigned threads = 1;
};

using Selector = std::function<double(const SolveResult&)>;

/// Solves along a strictly descending, strictly positive grid and keeps the
/// lambda with the smallest selector score; ties go to the larger lambda.
/// A failing grid point is recorded and skipped; all points failing throws.
GridSearchResult lambda_grid_search(const Matrix& y, const Matrix& mask,
                                    const std::vector<double>& grid, const Selector& selector,
                                    const SolveOptions& base, const GridOptions& grid_opts = {});

void validate_grid(const std::vector<double>& grid);

}  // namespace mnar
