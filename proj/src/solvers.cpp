#include "mnar/solvers.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mnar/error.hpp"
#include "mnar/parallel.hpp"

namespace mnar {
namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch " << a.rows() << "x" << a.cols() << " vs "
        << b.rows() << "x" << b.cols();
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
}

void validate_options(const SolveOptions& opts) {
  require(opts.max_iters >= 1, "solve: max_iters must be >= 1");
  require(opts.rel_tol >= 0.0, "solve: rel_tol must be >= 0");
  require(opts.lambda >= 0.0 && std::isfinite(opts.lambda), "solve: lambda must be finite and >= 0");
  require(opts.delta > 0.0, "solve: delta must be > 0");
}

double relative_change(const Matrix& next, const Matrix& prev, double delta) {
  return (next - prev).norm() / (prev.norm() + delta);
}

double data_fit(const Matrix& theta, const Matrix& observed, const Matrix& mask) {
  return 0.5 * (mask.cwiseProduct(theta) - observed).squaredNorm();
}

Matrix starting_point(const Matrix& y, const SolveOptions& opts) {
  if (!opts.initial) return Matrix::Zero(y.rows(), y.cols());
  check_same_shape(*opts.initial, y, "solve (initial iterate)");
  if (!opts.initial->allFinite()) {
    fail(ErrorCode::InvalidArgument, "solve: initial iterate has non-finite entries");
  }
  return *opts.initial;
}

void record_objective(SolveResult& out, double value) {
  if (!std::isfinite(value)) {
    fail(ErrorCode::NumericalFailure,
         "solve: objective became non-finite (check input scaling)");
  }
  out.objective_trace.push_back(value);
}

}  // namespace

void validate_mask(const Matrix& mask) {
  for (Index j = 0; j < mask.cols(); ++j) {
    for (Index i = 0; i < mask.rows(); ++i) {
      const double m = mask(i, j);
      if (m != 0.0 && m != 1.0) {
        std::ostringstream msg;
        msg << "mask entry (" << i << ", " << j << ") is " << m << ", expected 0 or 1";
        fail(ErrorCode::InvalidArgument, msg.str());
      }
    }
  }
}

Matrix masked_data(const Matrix& y, const Matrix& mask) {
  check_same_shape(y, mask, "masked_data");
  require(y.rows() >= 1 && y.cols() >= 1, "masked_data: empty matrix");
  validate_mask(mask);
  Matrix out(y.rows(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      if (mask(i, j) == 0.0) {
        out(i, j) = 0.0;
        continue;
      }
      if (!std::isfinite(y(i, j))) {
        std::ostringstream msg;
        msg << "observed entry (" << i << ", " << j << ") is not finite";
        fail(ErrorCode::InvalidArgument, msg.str());
      }
      out(i, j) = y(i, j);
    }
  }
  return out;
}

Matrix weighted_ls_gradient(const Matrix& theta, const Matrix& y, const Matrix& mask) {
  check_same_shape(theta, y, "weighted_ls_gradient");
  const Matrix observed = masked_data(y, mask);
  return mask.cwiseProduct(theta) - observed;
}

double masked_objective(const Matrix& theta, const Matrix& y, const Matrix& mask,
                        double lambda) {
  const Matrix observed = masked_data(y, mask);
  check_same_shape(theta, y, "masked_objective");
  return data_fit(theta, observed, mask) + lambda * nuclear_norm(theta);
}

Matrix proximal_gradient_step(const Matrix& theta, const Matrix& y, const Matrix& mask,
                              double lambda) {
  return svd_soft_threshold(theta - weighted_ls_gradient(theta, y, mask), lambda);
}

Matrix soft_impute_step(const Matrix& theta, const Matrix& y, const Matrix& mask,
                        double lambda) {
  check_same_shape(theta, y, "soft_impute_step");
  const Matrix observed = masked_data(y, mask);
  const Matrix filled = observed + (1.0 - mask.array()).matrix().cwiseProduct(theta);
  return svd_soft_threshold(filled, lambda);
}

SolveResult ista_solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts) {
  validate_options(opts);
  const Matrix observed = masked_data(y, mask);
  const Matrix unobserved = (1.0 - mask.array()).matrix();

  SolveResult out;
  out.lambda = opts.lambda;
  out.algorithm = Algorithm::IstaSoftImpute;
  Matrix theta = starting_point(y, opts);

  for (int t = 0; t < opts.max_iters; ++t) {
    ProxResult step = soft_threshold_prox(observed + unobserved.cwiseProduct(theta), opts.lambda);
    record_objective(out, data_fit(step.value, observed, mask) + opts.lambda * step.nuclear_norm);
    const double change = relative_change(step.value, theta, opts.delta);
    theta = std::move(step.value);
    out.iterations_run = t + 1;
    if (opts.rel_tol > 0.0 && change <= opts.rel_tol) {
      out.converged = true;
      break;
    }
  }
  out.theta_hat = std::move(theta);
  return out;
}

SolveResult fista_solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts) {
  validate_options(opts);
  require(opts.kappa0 > 0.0, "fista_solve: kappa0 must be > 0");
  const Matrix observed = masked_data(y, mask);
  const Matrix unobserved = (1.0 - mask.array()).matrix();

  SolveResult out;
  out.lambda = opts.lambda;
  out.algorithm = Algorithm::Fista;
  Matrix theta = starting_point(y, opts);
  Matrix extrapolated = theta;
  double kappa = opts.kappa0;

  for (int t = 0; t < opts.max_iters; ++t) {
    // Unit step (L = 1): Xi - M o (Xi - Y) = M o Y + (1 - M) o Xi.
    ProxResult step =
        soft_threshold_prox(observed + unobserved.cwiseProduct(extrapolated), opts.lambda);
    record_objective(out, data_fit(step.value, observed, mask) + opts.lambda * step.nuclear_norm);

    const double kappa_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa));
    const double momentum = (kappa - 1.0) / kappa_next;
    extrapolated = step.value + momentum * (step.value - theta);
    kappa = kappa_next;

    const double change = relative_change(step.value, theta, opts.delta);
    theta = std::move(step.value);
    out.iterations_run = t + 1;
    if (opts.rel_tol > 0.0 && change <= opts.rel_tol) {
      out.converged = true;
      break;
    }
  }
  out.theta_hat = std::move(theta);
  return out;
}

SolveResult solve(const Matrix& y, const Matrix& mask, const SolveOptions& opts) {
  return opts.algorithm == Algorithm::Fista ? fista_solve(y, mask, opts)
                                            : ista_solve(y, mask, opts);
}

std::vector<double> log_lambda_grid(double lambda_max, int count, double ratio) {
  require(lambda_max > 0.0 && std::isfinite(lambda_max), "lambda grid: lambda_max must be > 0");
  require(count >= 1, "lambda grid: count must be >= 1");
  require(ratio > 1.0, "lambda grid: ratio must be > 1");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double log_step = std::log(ratio) / (count - 1);
  for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = lambda_max * std::exp(-log_step * k);
  return grid;
}

void validate_grid(const std::vector<double>& grid) {
  require(!grid.empty(), "lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    require(grid[k] > 0.0 && std::isfinite(grid[k]), "lambda grid values must be finite and > 0");
    if (k > 0) require(grid[k] < grid[k - 1], "lambda grid must be strictly descending");
  }
}

GridSearchResult lambda_grid_search(const Matrix& y, const Matrix& mask,
                                    const std::vector<double>& grid, const Selector& selector,
                                    const SolveOptions& base, const GridOptions& grid_opts) {
  validate_grid(grid);
  require(static_cast<bool>(selector), "lambda_grid_search: selector is empty");

  std::vector<GridPoint> points(grid.size());
  std::vector<std::optional<SolveResult>> results(grid.size());

  auto run_point = [&](std::size_t k, const std::optional<Matrix>& warm) {
    GridPoint& point = points[k];
    point.lambda = grid[k];
    try {
      SolveOptions opts = base;
      opts.lambda = grid[k];
      if (warm) opts.initial = warm;
      SolveResult res = solve(y, mask, opts);
      point.score = selector(res);
      point.iterations = res.iterations_run;
      point.objective = res.final_objective();
      point.rank = numerical_rank(res.theta_hat);
      point.ok = std::isfinite(point.score);
      if (!point.ok) point.error = "selector returned a non-finite score";
      results[k] = std::move(res);
    } catch (const std::exception& e) {
      point.ok = false;
      point.error = e.what();
    }
  };

  if (grid_opts.warm_start) {
    std::optional<Matrix> warm = base.initial;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      run_point(k, warm);
      if (results[k]) warm = results[k]->theta_hat;
    }
  } else {
    parallel_for(grid.size(), grid_opts.threads,
                 [&](std::size_t k) { run_point(k, base.initial); });
  }

  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!points[k].ok) continue;
    if (!best || points[k].score < points[*best].score) best = k;
  }
  if (!best) {
    fail(ErrorCode::NumericalFailure,
         "lambda_grid_search: every grid point failed (first error: " + points.front().error + ")");
  }

  GridSearchResult out;
  out.best_lambda = grid[*best];
  out.result = std::move(*results[*best]);
  out.points = std::move(points);
  return out;
}

}  // namespace mnar
