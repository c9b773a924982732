#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mnar/linalg.hpp"
#include "mnar/mechanism.hpp"
#include "mnar/sim.hpp"
#include "mnar/solvers.hpp"

namespace mnar {

struct ImputeOptions {
  Method method = Method::MarFista;
  /// Fixed penalty; when empty lambda is chosen on held-out observed cells.
  std::optional<double> lambda;
  int grid_size = 15;
  double grid_ratio = 100.0;
  /// Fraction of observed cells held out by the cross-validation selector.
  double holdout_fraction = 0.1;
  /// Noise variance for the model-based and exponential-family methods.
  double sigma2 = 1.0;
  int max_iters = 1000;
  double rel_tol = 1e-6;
  int mcem_ns = 1000;
  int mcem_max_iters = 100;
  Algorithm mcem_inner = Algorithm::Fista;
  SharingMode mcem_sharing = SharingMode::PerColumn;
  bool scale_columns = false;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct ImputeResult {
  /// Observed cells keep their values and missing cells take the estimate,
  /// except for MEAN_IMPUTE whose estimate replaces every value.
  Matrix completed;
  Matrix estimate;
  Method method = Method::MarFista;
  std::optional<double> lambda;
  std::optional<MechanismParams> phi;
  int iterations = 0;
  bool converged = true;
  std::vector<GridPoint> sweep;
  std::vector<std::string> warnings;
};

/// Largest useful penalty for a method (zero estimate beyond it for the
/// nuclear-norm methods).
double method_lambda_max(const Matrix& y, const Matrix& mask, const ImputeOptions& opts);

std::vector<double> method_lambda_grid(const Matrix& y, const Matrix& mask, const ImputeOptions& opts);

/// Random subset of observed cells to hold out; every column keeps at least
/// one observed cell.
Matrix holdout_mask(const Matrix& mask, double fraction, std::uint64_t seed);

/// Held-out mean squared error per lambda, descending grid.
std::vector<GridPoint> cross_validate(const Matrix& y, const Matrix& mask,
                                      const std::vector<double>& grid, const ImputeOptions& opts);

ImputeResult impute(const Matrix& y, const Matrix& mask, const ImputeOptions& opts);

}  // namespace mnar
