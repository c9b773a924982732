#include "mnar/mcem.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mnar/error.hpp"
#include "mnar/parallel.hpp"
#include "mnar/random.hpp"

namespace mnar {
namespace {

struct MissingCell {
  Index row;
  Index col;
};

std::vector<MissingCell> missing_cells(const Matrix& mask) {
  std::vector<MissingCell> cells;
  for (Index j = 0; j < mask.cols(); ++j) {
    for (Index i = 0; i < mask.rows(); ++i) {
      if (mask(i, j) == 0.0) cells.push_back({i, j});
    }
  }
  return cells;
}

// Column standardisation from observed entries; the mechanism parameters
// transform with it so the fitted model is unchanged.
struct ColumnScaling {
  Vector center;
  Vector scale;

  static ColumnScaling from_observed(const Matrix& y, const Matrix& mask) {
    ColumnScaling s{Vector::Zero(y.cols()), Vector::Ones(y.cols())};
    for (Index j = 0; j < y.cols(); ++j) {
      double sum = 0.0, count = 0.0;
      for (Index i = 0; i < y.rows(); ++i) {
        if (mask(i, j) == 1.0) {
          sum += y(i, j);
          count += 1.0;
        }
      }
      const double mean = sum / count;
      double ss = 0.0;
      for (Index i = 0; i < y.rows(); ++i) {
        if (mask(i, j) == 1.0) ss += (y(i, j) - mean) * (y(i, j) - mean);
      }
      const double sd = count > 1.0 ? std::sqrt(ss / (count - 1.0)) : 0.0;
      s.center(j) = mean;
      s.scale(j) = sd > 0.0 ? sd : 1.0;
    }
    return s;
  }

  Matrix forward(const Matrix& x) const {
    return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
  }
  Matrix backward(const Matrix& x) const {
    return (x.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
           center.transpose();
  }
  PhiPair forward(const PhiPair& phi, Index j) const {
    return {phi.slope * scale(j), (phi.center - center(j)) / scale(j)};
  }
  PhiPair backward(const PhiPair& phi, Index j) const {
    return {phi.slope / scale(j), phi.center * scale(j) + center(j)};
  }
  MechanismParams forward(const MechanismParams& p) const { return map(p, true); }
  MechanismParams backward(const MechanismParams& p) const { return map(p, false); }

 private:
  MechanismParams map(const MechanismParams& p, bool fwd) const {
    MechanismParams out = p;
    if (p.mode == SharingMode::Shared) {
      // A shared pair only survives scaling when the columns share a scale;
      // transform with the first column, which is exact in that case.
      if (!p.columns.empty()) {
        const Index j = p.columns.front();
        out.pairs.front() = fwd ? forward(p.pairs.front(), j) : backward(p.pairs.front(), j);
      }
      return out;
    }
    for (std::size_t k = 0; k < p.columns.size(); ++k) {
      out.pairs[k] = fwd ? forward(p.pairs[k], p.columns[k]) : backward(p.pairs[k], p.columns[k]);
    }
    return out;
  }
};

void check_inputs(const Matrix& y, const Matrix& mask) {
  masked_data(y, mask);
  for (Index j = 0; j < mask.cols(); ++j) {
    if (mask.col(j).sum() == 0.0) {
      fail(ErrorCode::InvalidArgument,
           "mcem: column " + std::to_string(j) + " has no observed entries");
    }
  }
}

}  // namespace

void McemConfig::validate() const {
  require(ns >= 1, "mcem: Ns must be >= 1");
  require(proposal_ratio >= 1, "mcem: proposal ratio must be >= 1");
  require(lambda >= 0.0 && std::isfinite(lambda), "mcem: lambda must be finite and >= 0");
  require(delta > 0.0, "mcem: delta must be > 0");
  require(tau > 0.0, "mcem: tau must be > 0");
  require(extra_iters >= 0, "mcem: extra iterations must be >= 0");
  require(max_em_iters >= 1, "mcem: max_em_iters must be >= 1");
  require(inner_max_iters >= 1, "mcem: inner_max_iters must be >= 1");
  require(sigma > 0.0 && std::isfinite(sigma), "mcem: sigma must be > 0");
}

std::vector<Index> missing_columns(const Matrix& mask) {
  std::vector<Index> cols;
  for (Index j = 0; j < mask.cols(); ++j) {
    if ((mask.col(j).array() == 0.0).any()) cols.push_back(j);
  }
  return cols;
}

MechanismParams default_initial_phi(const Matrix& y, const Matrix& mask, SharingMode sharing) {
  const std::vector<Index> cols = missing_columns(mask);
  auto observed_mean = [&](Index j, double& sum, double& count) {
    for (Index i = 0; i < y.rows(); ++i) {
      if (mask(i, j) == 1.0) {
        sum += y(i, j);
        count += 1.0;
      }
    }
  };
  if (sharing == SharingMode::Shared) {
    double sum = 0.0, count = 0.0;
    for (Index j : cols) observed_mean(j, sum, count);
    return MechanismParams::shared(cols, {1.0, count > 0.0 ? sum / count : 0.0});
  }
  std::vector<PhiPair> pairs;
  for (Index j : cols) {
    double sum = 0.0, count = 0.0;
    observed_mean(j, sum, count);
    pairs.push_back({1.0, count > 0.0 ? sum / count : 0.0});
  }
  return MechanismParams::per_column(cols, std::move(pairs));
}

EStepResult e_step(const Matrix& y, const Matrix& mask, const Matrix& theta_hat,
                   const MechanismParams& phi_hat, const McemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Matrix observed = masked_data(y, mask);
  if (theta_hat.rows() != y.rows() || theta_hat.cols() != y.cols()) {
    fail(ErrorCode::DimensionMismatch, "e_step: theta_hat shape does not match y");
  }
  if (!theta_hat.allFinite()) fail(ErrorCode::NumericalFailure, "e_step: theta_hat is not finite");

  EStepResult out;
  out.v = observed;
  const std::vector<MissingCell> cells = missing_cells(mask);

  if (!cfg.model_mechanism) {
    // Ignorable mechanism: E[y_ij | observed] = theta_ij exactly.
    for (const MissingCell& c : cells) out.v(c.row, c.col) = theta_hat(c.row, c.col);
    return out;
  }

  const SirOptions sir{cfg.proposal_ratio * cfg.ns, cfg.ns, cfg.sigma};
  sir.validate();
  const auto ns = static_cast<std::size_t>(cfg.ns);
  std::vector<double> draws(cells.size() * ns);

  parallel_for(cells.size(), cfg.threads, [&](std::size_t k) {
    const MissingCell& c = cells[k];
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(c.col * y.rows() + c.row));
    try {
      const std::vector<double> z =
          sir_sample(theta_hat(c.row, c.col), phi_hat.for_column(c.col), 0, sir, rng);
      std::copy(z.begin(), z.end(), draws.begin() + static_cast<std::ptrdiff_t>(k * ns));
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << e.what() << " at cell (" << c.row << ", " << c.col << ")";
      throw Error(e.code(), msg.str());
    }
  });

  for (std::size_t k = 0; k < cells.size(); ++k) {
    double sum = 0.0;
    for (std::size_t s = 0; s < ns; ++s) sum += draws[k * ns + s];
    out.v(cells[k].row, cells[k].col) = sum / static_cast<double>(ns);
  }

  // Stacked (Omega, v) design per column with missing cells: each observed
  // row appears Ns times with the same value, so it is stored once with
  // weight Ns; each missing cell contributes its Ns draws.
  std::size_t cursor = 0;
  for (Index j : missing_columns(mask)) {
    ColumnDesign cd;
    cd.column = j;
    for (Index i = 0; i < y.rows(); ++i) {
      if (mask(i, j) == 1.0) cd.design.add(1.0, y(i, j), static_cast<double>(ns));
    }
    while (cursor < cells.size() && cells[cursor].col == j) {
      for (std::size_t s = 0; s < ns; ++s) cd.design.add(0.0, draws[cursor * ns + s], 1.0);
      ++cursor;
    }
    out.designs.push_back(std::move(cd));
  }
  return out;
}

Matrix m_step_theta(const Matrix& v, const McemConfig& cfg) {
  cfg.validate();
  if (!v.allFinite()) fail(ErrorCode::NumericalFailure, "m_step_theta: V is not finite");
  SolveOptions opts;
  opts.lambda = cfg.effective_threshold();
  opts.algorithm = cfg.inner_solver;
  opts.max_iters = cfg.inner_max_iters;
  opts.rel_tol = cfg.inner_rel_tol;
  return solve(v, Matrix::Ones(v.rows(), v.cols()), opts).theta_hat;
}

PhiStep m_step_phi(const std::vector<ColumnDesign>& designs, SharingMode sharing,
                   const LogisticFitOptions& glm) {
  PhiStep out;
  std::vector<Index> cols;
  for (const ColumnDesign& cd : designs) cols.push_back(cd.column);

  auto note = [&](const LogisticFit& fit, const std::string& where) {
    if (fit.clamped) out.warnings.push_back(where + ": slope clamped at separation bound");
  };

  if (sharing == SharingMode::Shared) {
    LogisticDesign pooled;
    for (const ColumnDesign& cd : designs) pooled.append(cd.design);
    const LogisticFit fit = fit_logistic_column(pooled, glm);
    note(fit, "shared mechanism");
    out.params = MechanismParams::shared(cols, fit.phi);
    return out;
  }

  std::vector<PhiPair> pairs;
  for (const ColumnDesign& cd : designs) {
    try {
      const LogisticFit fit = fit_logistic_column(cd.design, glm);
      note(fit, "column " + std::to_string(cd.column));
      pairs.push_back(fit.phi);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (column " + std::to_string(cd.column) + ")");
    }
  }
  out.params = MechanismParams::per_column(cols, std::move(pairs));
  return out;
}

double q_objective(const EStepResult& draws, const Matrix& theta, const MechanismParams& phi,
                   const McemConfig& cfg) {
  const double sigma2 = cfg.sigma * cfg.sigma;
  double value = (draws.v - theta).squaredNorm() / (2.0 * sigma2) + cfg.lambda * nuclear_norm(theta);
  for (const ColumnDesign& cd : draws.designs) {
    const PhiPair& p = phi.for_column(cd.column);
    value -= logistic_log_likelihood(cd.design, p.intercept(), p.slope) / cfg.ns;
  }
  return value;
}

McemState mcem_fit(const Matrix& y_in, const Matrix& mask, const McemConfig& cfg) {
  cfg.validate();
  check_inputs(y_in, mask);

  std::optional<ColumnScaling> scaling;
  Matrix y = masked_data(y_in, mask);
  if (cfg.scale_columns) {
    scaling = ColumnScaling::from_observed(y, mask);
    y = scaling->forward(y).cwiseProduct(mask);
  }

  McemState state;
  const std::vector<Index> cols = missing_columns(mask);

  if (cols.empty()) {
    state.theta_hat = m_step_theta(y, cfg);
    state.imputed_mean = y;
    state.iteration = 1;
    state.converged = true;
    if (scaling) {
      state.theta_hat = scaling->backward(state.theta_hat);
      state.imputed_mean = y_in;
    }
    return state;
  }

  Matrix theta;
  if (cfg.initial_theta) {
    theta = scaling ? scaling->forward(*cfg.initial_theta) : *cfg.initial_theta;
  } else {
    SolveOptions init;
    init.lambda = cfg.effective_threshold();
    init.algorithm = Algorithm::Fista;
    init.max_iters = cfg.inner_max_iters;
    init.rel_tol = cfg.inner_rel_tol;
    theta = fista_solve(y, mask, init).theta_hat;
  }
  MechanismParams phi;
  if (cfg.model_mechanism) {
    phi = cfg.initial_phi ? (scaling ? scaling->forward(*cfg.initial_phi) : *cfg.initial_phi)
                          : default_initial_phi(y, mask, cfg.sharing);
  }

  int extra_left = -1;  // -1 until the stopping rule fires
  double best_change = std::numeric_limits<double>::infinity();
  Matrix best_theta = theta;
  MechanismParams best_phi = phi;
  EStepResult last;

  for (int t = 1; t <= cfg.max_em_iters; ++t) {
    EStepResult draws;
    try {
      draws = e_step(y, mask, theta, phi, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " in EM iteration " + std::to_string(t));
    }

    Matrix theta_next = m_step_theta(draws.v, cfg);
    MechanismParams phi_next = phi;
    if (cfg.model_mechanism) {
      PhiStep step = m_step_phi(draws.designs, cfg.sharing, cfg.glm);
      phi_next = std::move(step.params);
      for (std::string& w : step.warnings) {
        state.warnings.push_back("iteration " + std::to_string(t) + ": " + std::move(w));
      }
      state.objective_before.push_back(q_objective(draws, theta, phi, cfg));
      state.objective_after.push_back(q_objective(draws, theta_next, phi_next, cfg));
    }

    const double change = (theta_next - theta).norm() / (theta.norm() + cfg.delta);
    state.stopping_history.push_back(change);
    theta = std::move(theta_next);
    phi = std::move(phi_next);
    last = std::move(draws);
    state.iteration = t;

    if (change < best_change) {
      best_change = change;
      best_theta = theta;
      best_phi = phi;
    }
    if (extra_left < 0 && change <= cfg.tau) extra_left = cfg.extra_iters;
    else if (extra_left > 0) --extra_left;
    if (extra_left == 0) {
      state.converged = true;
      break;
    }
  }

  if (!state.converged) {
    state.warnings.push_back("EM did not converge within max_em_iters; returning the most stable iterate");
    theta = std::move(best_theta);
    phi = std::move(best_phi);
  }

  state.theta_hat = std::move(theta);
  state.phi_hat = std::move(phi);
  state.imputed_mean = std::move(last.v);
  state.stacked_designs = std::move(last.designs);
  if (scaling) {
    state.theta_hat = scaling->backward(state.theta_hat);
    state.imputed_mean = scaling->backward(state.imputed_mean);
    // Observed cells must stay bit-exact after the round trip.
    const Matrix observed = masked_data(y_in, mask);
    for (Index j = 0; j < mask.cols(); ++j)
      for (Index i = 0; i < mask.rows(); ++i)
        if (mask(i, j) == 1.0) state.imputed_mean(i, j) = observed(i, j);
    if (cfg.model_mechanism) state.phi_hat = scaling->backward(state.phi_hat);
    for (ColumnDesign& cd : state.stacked_designs) {
      for (double& v : cd.design.value) v = v * scaling->scale(cd.column) + scaling->center(cd.column);
    }
  }
  return state;
}

}  // namespace mnar
