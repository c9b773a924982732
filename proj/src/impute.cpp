#include "mnar/impute.hpp"

#include <algorithm>
#include <cmath>

#include "mnar/error.hpp"
#include "mnar/mask_concat.hpp"
#include "mnar/mcem.hpp"

namespace mnar {
namespace {

struct Fit {
  Matrix estimate;
  std::optional<MechanismParams> phi;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;
  double objective = 0.0;
};

Fit fit_once(const Matrix& y, const Matrix& mask, double lambda, const ImputeOptions& opts) {
  Fit fit;
  switch (opts.method) {
    case Method::MeanImpute:
      fit.estimate = mean_impute(y, mask);
      return fit;
    case Method::MarFista:
    case Method::MarSoftImpute: {
      SolveOptions so;
      so.lambda = lambda;
      so.max_iters = opts.max_iters;
      so.rel_tol = opts.rel_tol;
      so.algorithm = opts.method == Method::MarFista ? Algorithm::Fista : Algorithm::IstaSoftImpute;
      SolveResult res = solve(y, mask, so);
      fit.estimate = std::move(res.theta_hat);
      fit.iterations = res.iterations_run;
      fit.converged = res.converged;
      fit.objective = res.final_objective();
      return fit;
    }
    case Method::MaskConcat: {
      SolveOptions so;
      so.max_iters = opts.max_iters;
      so.rel_tol = opts.rel_tol;
      SolveResult res = concat_solve_full(y, mask, lambda, so);
      fit.estimate = res.theta_hat.leftCols(y.cols());
      fit.iterations = res.iterations_run;
      fit.converged = res.converged;
      fit.objective = res.final_objective();
      return fit;
    }
    case Method::MaskExpfam: {
      ExpFamOptions eo;
      eo.max_iters = opts.max_iters;
      eo.rel_tol = opts.rel_tol;
      ExpFamResult res = expfam_solve(y, mask, lambda, default_links(y.cols(), opts.sigma2), eo);
      fit.estimate = std::move(res.imputed);
      fit.iterations = res.iterations_run;
      fit.converged = res.converged;
      fit.objective = res.objective_trace.empty() ? 0.0 : res.objective_trace.back();
      return fit;
    }
    case Method::ModelMcem: {
      McemConfig cfg;
      cfg.lambda = lambda;
      cfg.sigma = std::sqrt(opts.sigma2);
      cfg.ns = opts.mcem_ns;
      cfg.max_em_iters = opts.mcem_max_iters;
      cfg.inner_solver = opts.mcem_inner;
      cfg.inner_max_iters = opts.max_iters;
      cfg.sharing = opts.mcem_sharing;
      cfg.scale_columns = opts.scale_columns;
      cfg.seed = opts.seed;
      cfg.threads = opts.threads;
      McemState st = mcem_fit(y, mask, cfg);
      fit.estimate = std::move(st.theta_hat);
      if (!st.phi_hat.pairs.empty()) fit.phi = std::move(st.phi_hat);
      fit.iterations = st.iteration;
      fit.converged = st.converged;
      fit.warnings = std::move(st.warnings);
      return fit;
    }
  }
  fail(ErrorCode::InvalidArgument, "impute: unknown method");
}

}  // namespace

double method_lambda_max(const Matrix& y, const Matrix& mask, const ImputeOptions& opts) {
  switch (opts.method) {
    case Method::MaskConcat:
      return concat_lambda_max(y, mask);
    case Method::MaskExpfam:
      return expfam_lambda_max(y, mask, default_links(y.cols(), opts.sigma2));
    case Method::ModelMcem:
      return spectral_norm(masked_data(y, mask)) / opts.sigma2;
    default:
      return spectral_norm(masked_data(y, mask));
  }
}

std::vector<double> method_lambda_grid(const Matrix& y, const Matrix& mask, const ImputeOptions& opts) {
  return log_lambda_grid(method_lambda_max(y, mask, opts), opts.grid_size, opts.grid_ratio);
}

Matrix holdout_mask(const Matrix& mask, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "holdout fraction must be in (0, 1)");
  validate_mask(mask);
  Rng rng = make_rng(seed, 0x686f6c64ULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix held = Matrix::Zero(mask.rows(), mask.cols());
  for (Index j = 0; j < mask.cols(); ++j) {
    double remaining = mask.col(j).sum();
    for (Index i = 0; i < mask.rows(); ++i) {
      if (mask(i, j) == 0.0) continue;
      if (uniform(rng) < fraction && remaining > 1.0) {
        held(i, j) = 1.0;
        remaining -= 1.0;
      }
    }
  }
  return held;
}

std::vector<GridPoint> cross_validate(const Matrix& y, const Matrix& mask,
                                      const std::vector<double>& grid, const ImputeOptions& opts) {
  validate_grid(grid);
  const Matrix held = holdout_mask(mask, opts.holdout_fraction, opts.seed);
  const Matrix train = mask - held;
  const double held_count = held.sum();
  require(held_count > 0.0, "cross-validation: no observed cell could be held out");
  const Matrix observed = masked_data(y, mask);

  std::vector<GridPoint> points;
  for (double lambda : grid) {
    GridPoint pt;
    pt.lambda = lambda;
    try {
      const Fit fit = fit_once(observed, train, lambda, opts);
      pt.score = (fit.estimate - observed).cwiseProduct(held).squaredNorm() / held_count;
      pt.iterations = fit.iterations;
      pt.objective = fit.objective;
      pt.rank = numerical_rank(fit.estimate);
      pt.ok = std::isfinite(pt.score);
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    points.push_back(pt);
  }
  return points;
}

ImputeResult impute(const Matrix& y, const Matrix& mask, const ImputeOptions& opts) {
  require(opts.sigma2 > 0.0 && std::isfinite(opts.sigma2), "impute: sigma2 must be > 0");
  const Matrix observed = masked_data(y, mask);
  for (Index j = 0; j < mask.cols(); ++j) {
    if (mask.col(j).sum() == 0.0) {
      fail(ErrorCode::InvalidArgument, "impute: column " + std::to_string(j) + " is fully missing");
    }
  }

  ImputeResult out;
  out.method = opts.method;
  double lambda = 0.0;
  if (opts.method != Method::MeanImpute) {
    if (opts.lambda) {
      require(*opts.lambda >= 0.0, "impute: lambda must be >= 0");
      lambda = *opts.lambda;
    } else {
      out.sweep = cross_validate(observed, mask, method_lambda_grid(observed, mask, opts), opts);
      std::optional<std::size_t> best;
      for (std::size_t k = 0; k < out.sweep.size(); ++k) {
        if (out.sweep[k].ok && (!best || out.sweep[k].score < out.sweep[*best].score)) best = k;
      }
      if (!best) fail(ErrorCode::NumericalFailure, "impute: every lambda failed during cross-validation");
      lambda = out.sweep[*best].lambda;
    }
    out.lambda = lambda;
  }

  Fit fit = fit_once(observed, mask, lambda, opts);
  out.estimate = std::move(fit.estimate);
  out.phi = std::move(fit.phi);
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  out.warnings = std::move(fit.warnings);
  if (opts.method == Method::MeanImpute) {
    out.completed = out.estimate;
  } else {
    out.completed = observed + (1.0 - mask.array()).matrix().cwiseProduct(out.estimate);
  }
  return out;
}

}  // namespace mnar
