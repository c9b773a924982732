#pragma once

#include <optional>
#include <vector>

#include "mnar/linalg.hpp"
#include "mnar/solvers.hpp"

namespace mnar {

enum class ColumnType { Gaussian, Bernoulli };

/// Data block and mask side by side: [M o Y | M] observed through [M | 1].
struct ConcatProblem {
  Matrix augmented_data;
  Matrix augmented_mask;
  std::vector<ColumnType> column_types;

  static ConcatProblem build(const Matrix& y, const Matrix& mask);
};

/// Quasi-likelihood link g of one column; g' maps natural parameters to means.
struct LinkFunction {
  ColumnType type = ColumnType::Gaussian;
  /// Gaussian only: g(x) = sigma2 x^2 / 2.
  double sigma2 = 1.0;

  static LinkFunction gaussian(double sigma2);
  static LinkFunction bernoulli();

  double value(double x) const;
  double derivative(double x) const;
  /// Upper bound on g''.
  double curvature_bound() const;
};

/// Gaussian links for the p data columns followed by Bernoulli links for the
/// p mask columns.
std::vector<LinkFunction> default_links(Index p, double sigma2);

/// Nuclear-norm completion of the concatenated system; returns the left
/// (data) block of the solution.
Matrix concat_solve(const Matrix& y, const Matrix& mask, double lambda, const SolveOptions& opts);
SolveResult concat_solve_full(const Matrix& y, const Matrix& mask, double lambda,
                              const SolveOptions& opts);
double concat_lambda_max(const Matrix& y, const Matrix& mask);

struct ExpFamOptions {
  int max_iters = 1000;
  double rel_tol = 1e-7;
  double delta = kStopDelta;
  /// Initial proximal step; halved until the majorisation holds.
  double initial_step = 1.0;
  int max_halvings = 60;
  std::optional<Matrix> initial;
};

struct ExpFamResult {
  /// Natural parameters of the whole augmented matrix (n x 2p).
  Matrix natural;
  /// Mean-scale estimate g'(natural) of the data block (n x p): the imputation.
  Matrix imputed;
  std::vector<double> objective_trace;
  int iterations_run = 0;
  bool converged = false;
};

/// Quasi-likelihood sum over observed cells of -X T + g(T) plus lambda ||T||_*.
double expfam_objective(const Matrix& data, const Matrix& weights, const Matrix& theta,
                        const std::vector<LinkFunction>& links, double lambda);
/// Gradient of the smooth part: W o (g'(T) - X).
Matrix expfam_gradient(const Matrix& data, const Matrix& weights, const Matrix& theta,
                       const std::vector<LinkFunction>& links);

/// Low-rank exponential-family fit of the augmented matrix by proximal
/// gradient with backtracking.
ExpFamResult expfam_solve(const Matrix& y, const Matrix& mask, double lambda,
                          const std::vector<LinkFunction>& links, const ExpFamOptions& opts = {});

/// Smallest lambda for which the zero matrix is optimal.
double expfam_lambda_max(const Matrix& y, const Matrix& mask, const std::vector<LinkFunction>& links);

}  // namespace mnar
