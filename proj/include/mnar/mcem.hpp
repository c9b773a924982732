#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mnar/linalg.hpp"
#include "mnar/mechanism.hpp"
#include "mnar/solvers.hpp"

namespace mnar {

struct McemConfig {
  /// Monte-Carlo draws per missing cell.
  int ns = 1000;
  /// SIR proposals per retained draw.
  int proposal_ratio = kSirProposalRatio;
  double lambda = 0.0;
  double delta = 1e-3;
  double tau = 1e-2;
  /// Iterations run after the stopping rule first fires.
  int extra_iters = 10;
  int max_em_iters = 100;
  Algorithm inner_solver = Algorithm::Fista;
  int inner_max_iters = 500;
  double inner_rel_tol = 1e-8;
  /// Known noise standard deviation.
  double sigma = 1.0;
  bool scale_columns = false;
  SharingMode sharing = SharingMode::PerColumn;
  /// When false the E-step uses the ignorable (MAR) conditional mean and
  /// no mechanism parameters are estimated.
  bool model_mechanism = true;
  LogisticFitOptions glm;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::optional<Matrix> initial_theta;
  std::optional<MechanismParams> initial_phi;

  void validate() const;
  /// Threshold applied to singular values in the Theta M-step: lambda * sigma^2.
  double effective_threshold() const { return lambda * sigma * sigma; }
};

struct ColumnDesign {
  Index column = 0;
  LogisticDesign design;
};

struct EStepResult {
  /// Observed cells carry y; missing cells the Monte-Carlo mean of the draws.
  Matrix v;
  std::vector<ColumnDesign> designs;
};

struct McemState {
  Matrix theta_hat;
  MechanismParams phi_hat;
  int iteration = 0;
  Matrix imputed_mean;
  std::vector<ColumnDesign> stacked_designs;
  std::vector<double> stopping_history;
  /// Monte-Carlo Q objective before and after each M-step, evaluated with the
  /// draws of that iteration.
  std::vector<double> objective_before;
  std::vector<double> objective_after;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Columns containing at least one missing cell, ascending.
std::vector<Index> missing_columns(const Matrix& mask);

/// phi = (1, mean of observed values) per column with missing cells.
MechanismParams default_initial_phi(const Matrix& y, const Matrix& mask, SharingMode sharing);

EStepResult e_step(const Matrix& y, const Matrix& mask, const Matrix& theta_hat,
                   const MechanismParams& phi_hat, const McemConfig& cfg, std::uint64_t seed);

/// argmin 0.5 ||V - T||_F^2 + lambda sigma^2 ||T||_* via the inner solver on a
/// full mask.
Matrix m_step_theta(const Matrix& v, const McemConfig& cfg);

struct PhiStep {
  MechanismParams params;
  std::vector<std::string> warnings;
};

PhiStep m_step_phi(const std::vector<ColumnDesign>& designs, SharingMode sharing,
                   const LogisticFitOptions& glm = {});

/// Monte-Carlo estimate of the penalised negative Q function, up to terms
/// constant in (Theta, phi).
double q_objective(const EStepResult& draws, const Matrix& theta, const MechanismParams& phi,
                   const McemConfig& cfg);

McemState mcem_fit(const Matrix& y, const Matrix& mask, const McemConfig& cfg);

}  // namespace mnar
