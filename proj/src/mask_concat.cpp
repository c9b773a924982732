#include "mnar/mask_concat.hpp"

#include <cmath>
#include <sstream>

#include "mnar/error.hpp"

namespace mnar {
namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_links(const std::vector<LinkFunction>& links, Index cols) {
  if (static_cast<Index>(links.size()) != cols) {
    std::ostringstream msg;
    msg << "expfam: expected " << cols << " link functions, got " << links.size();
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
  for (const LinkFunction& link : links) {
    if (link.type == ColumnType::Gaussian) {
      require(link.sigma2 > 0.0 && std::isfinite(link.sigma2), "expfam: Gaussian sigma2 must be > 0");
    }
  }
}

double smooth_part(const Matrix& data, const Matrix& weights, const Matrix& theta,
                   const std::vector<LinkFunction>& links) {
  double total = 0.0;
  for (Index j = 0; j < theta.cols(); ++j) {
    const LinkFunction& link = links[static_cast<std::size_t>(j)];
    for (Index i = 0; i < theta.rows(); ++i) {
      if (weights(i, j) == 0.0) continue;
      total += weights(i, j) * (-data(i, j) * theta(i, j) + link.value(theta(i, j)));
    }
  }
  return total;
}

}  // namespace

ConcatProblem ConcatProblem::build(const Matrix& y, const Matrix& mask) {
  const Matrix observed = masked_data(y, mask);
  const Index n = y.rows();
  const Index p = y.cols();
  ConcatProblem prob;
  prob.augmented_data.resize(n, 2 * p);
  prob.augmented_data << observed, mask;
  prob.augmented_mask.resize(n, 2 * p);
  prob.augmented_mask << mask, Matrix::Ones(n, p);
  prob.column_types.assign(static_cast<std::size_t>(p), ColumnType::Gaussian);
  prob.column_types.insert(prob.column_types.end(), static_cast<std::size_t>(p), ColumnType::Bernoulli);
  return prob;
}

LinkFunction LinkFunction::gaussian(double sigma2) { return {ColumnType::Gaussian, sigma2}; }
LinkFunction LinkFunction::bernoulli() { return {ColumnType::Bernoulli, 1.0}; }

double LinkFunction::value(double x) const {
  return type == ColumnType::Gaussian ? 0.5 * sigma2 * x * x : softplus(x);
}

double LinkFunction::derivative(double x) const {
  return type == ColumnType::Gaussian ? sigma2 * x : sigmoid(x);
}

double LinkFunction::curvature_bound() const {
  return type == ColumnType::Gaussian ? sigma2 : 0.25;
}

std::vector<LinkFunction> default_links(Index p, double sigma2) {
  std::vector<LinkFunction> links(static_cast<std::size_t>(p), LinkFunction::gaussian(sigma2));
  links.insert(links.end(), static_cast<std::size_t>(p), LinkFunction::bernoulli());
  return links;
}

SolveResult concat_solve_full(const Matrix& y, const Matrix& mask, double lambda,
                              const SolveOptions& opts) {
  const ConcatProblem prob = ConcatProblem::build(y, mask);
  SolveOptions o = opts;
  o.lambda = lambda;
  return solve(prob.augmented_data, prob.augmented_mask, o);
}

Matrix concat_solve(const Matrix& y, const Matrix& mask, double lambda, const SolveOptions& opts) {
  return concat_solve_full(y, mask, lambda, opts).theta_hat.leftCols(y.cols());
}

double concat_lambda_max(const Matrix& y, const Matrix& mask) {
  return spectral_norm(ConcatProblem::build(y, mask).augmented_data);
}

double expfam_objective(const Matrix& data, const Matrix& weights, const Matrix& theta,
                        const std::vector<LinkFunction>& links, double lambda) {
  check_links(links, theta.cols());
  return smooth_part(data, weights, theta, links) + lambda * nuclear_norm(theta);
}

Matrix expfam_gradient(const Matrix& data, const Matrix& weights, const Matrix& theta,
                       const std::vector<LinkFunction>& links) {
  check_links(links, theta.cols());
  Matrix grad(theta.rows(), theta.cols());
  for (Index j = 0; j < theta.cols(); ++j) {
    const LinkFunction& link = links[static_cast<std::size_t>(j)];
    for (Index i = 0; i < theta.rows(); ++i) {
      grad(i, j) = weights(i, j) * (link.derivative(theta(i, j)) - data(i, j));
    }
  }
  return grad;
}

namespace {

ConcatProblem checked_problem(const Matrix& y, const Matrix& mask,
                              const std::vector<LinkFunction>& links) {
  ConcatProblem prob = ConcatProblem::build(y, mask);
  check_links(links, prob.augmented_data.cols());
  for (Index j = 0; j < prob.augmented_data.cols(); ++j) {
    if (links[static_cast<std::size_t>(j)].type != ColumnType::Bernoulli) continue;
    for (Index i = 0; i < prob.augmented_data.rows(); ++i) {
      if (prob.augmented_mask(i, j) == 0.0) continue;
      const double x = prob.augmented_data(i, j);
      if (x != 0.0 && x != 1.0) {
        std::ostringstream msg;
        msg << "expfam: Bernoulli column " << j << " has non-binary value " << x << " at row " << i;
        fail(ErrorCode::InvalidArgument, msg.str());
      }
    }
  }
  return prob;
}

}  // namespace

double expfam_lambda_max(const Matrix& y, const Matrix& mask, const std::vector<LinkFunction>& links) {
  const ConcatProblem prob = checked_problem(y, mask, links);
  const Matrix zero = Matrix::Zero(prob.augmented_data.rows(), prob.augmented_data.cols());
  return spectral_norm(expfam_gradient(prob.augmented_data, prob.augmented_mask, zero, links));
}

ExpFamResult expfam_solve(const Matrix& y, const Matrix& mask, double lambda,
                          const std::vector<LinkFunction>& links, const ExpFamOptions& opts) {
  require(lambda >= 0.0 && std::isfinite(lambda), "expfam_solve: lambda must be finite and >= 0");
  require(opts.max_iters >= 1, "expfam_solve: max_iters must be >= 1");
  require(opts.initial_step > 0.0, "expfam_solve: initial step must be > 0");
  const ConcatProblem prob = checked_problem(y, mask, links);
  const Matrix& data = prob.augmented_data;
  const Matrix& weights = prob.augmented_mask;

  Matrix theta = Matrix::Zero(data.rows(), data.cols());
  if (opts.initial) {
    if (opts.initial->rows() != data.rows() || opts.initial->cols() != data.cols()) {
      fail(ErrorCode::DimensionMismatch, "expfam_solve: initial iterate must be n x 2p");
    }
    theta = *opts.initial;
  }

  ExpFamResult out;
  double smooth = smooth_part(data, weights, theta, links);
  for (int t = 0; t < opts.max_iters; ++t) {
    const Matrix grad = expfam_gradient(data, weights, theta, links);
    double step = opts.initial_step;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      ProxResult cand = soft_threshold_prox(theta - step * grad, step * lambda);
      const Matrix diff = cand.value - theta;
      const double cand_smooth = smooth_part(data, weights, cand.value, links);
      const double bound = smooth + grad.cwiseProduct(diff).sum() + diff.squaredNorm() / (2.0 * step);
      if (cand_smooth <= bound + 1e-12 * (1.0 + std::abs(bound))) {
        const double objective = cand_smooth + lambda * cand.nuclear_norm;
        if (!std::isfinite(objective)) {
          fail(ErrorCode::NumericalFailure, "expfam_solve: objective became non-finite");
        }
        out.objective_trace.push_back(objective);
        const double change = diff.norm() / (theta.norm() + opts.delta);
        theta = std::move(cand.value);
        smooth = cand_smooth;
        accepted = true;
        out.iterations_run = t + 1;
        if (opts.rel_tol > 0.0 && change <= opts.rel_tol) out.converged = true;
        break;
      }
    }
    if (!accepted) fail(ErrorCode::NumericalFailure, "expfam_solve: line search failed");
    if (out.converged) break;
  }

  const Index p = y.cols();
  out.imputed.resize(data.rows(), p);
  for (Index j = 0; j < p; ++j) {
    const LinkFunction& link = links[static_cast<std::size_t>(j)];
    for (Index i = 0; i < data.rows(); ++i) out.imputed(i, j) = link.derivative(theta(i, j));
  }
  out.natural = std::move(theta);
  return out;
}

}  // namespace mnar
