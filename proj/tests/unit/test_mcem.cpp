#include <doctest.h>

#include "mnar/error.hpp"
#include "mnar/mcem.hpp"
#include "mnar/sim.hpp"
#include "oracles.hpp"

using namespace mnar;

namespace {

McemConfig small_config(double lambda, double sigma2, int ns = 200) {
  McemConfig cfg;
  cfg.lambda = lambda;
  cfg.sigma = std::sqrt(sigma2);
  cfg.ns = ns;
  cfg.seed = 42;
  return cfg;
}

ReplicationData univariate_data(int rep) {
  return simulate_replication(resolve_scenario(univariate_scenario()), rep);
}

}  // namespace

TEST_CASE("e_step/no missing cells") {
  const Matrix y = Matrix::Random(5, 3);
  const EStepResult r = e_step(y, Matrix::Ones(5, 3), Matrix::Zero(5, 3), {}, small_config(1.0, 1.0), 1);
  CHECK(r.v == y);
  CHECK(r.designs.empty());
}

TEST_CASE("e_step/flat mechanism centres on theta") {
  Matrix y = Matrix::Random(4, 3);
  Matrix mask = Matrix::Ones(4, 3);
  mask(2, 1) = 0.0;
  Matrix theta = Matrix::Zero(4, 3);
  theta(2, 1) = 0.7;
  McemConfig cfg = small_config(1.0, 0.8, 1000);
  const auto phi = MechanismParams::per_column({1}, {{0.0, 0.0}});
  const EStepResult r = e_step(y, mask, theta, phi, cfg, 3);
  CHECK(std::abs(r.v(2, 1) - 0.7) < 4.0 * cfg.sigma / std::sqrt(1000.0));
}

TEST_CASE("e_step/self-masked mechanism shifts the mean up") {
  Matrix y = Matrix::Random(4, 3);
  Matrix mask = Matrix::Ones(4, 3);
  mask(0, 0) = 0.0;
  McemConfig cfg = small_config(1.0, 0.8, 1000);
  const auto phi = MechanismParams::per_column({0}, {{3.0, 0.0}});
  const EStepResult r = e_step(y, mask, Matrix::Zero(4, 3), phi, cfg, 5);
  std::mt19937_64 rng(1);
  const auto ref = oracle::rejection_sample(0.0, 0.8, 3.0, 0.0, 40000, rng);
  CHECK(r.v(0, 0) > 0.0);
  const double se = oracle::stddev(ref) * std::sqrt(1.0 / 1000 + 1.0 / ref.size());
  CHECK(std::abs(r.v(0, 0) - oracle::mean(ref)) < 3.0 * se);
}

TEST_CASE("e_step/observed cells are exact and designs stacked") {
  const ReplicationData d = univariate_data(0);
  McemConfig cfg = small_config(2.0, 0.8, 50);
  const auto phi = default_initial_phi(d.y, d.mask, SharingMode::PerColumn);
  const EStepResult r = e_step(d.y, d.mask, Matrix::Zero(d.y.rows(), d.y.cols()), phi, cfg, 7);
  for (Index j = 0; j < d.y.cols(); ++j)
    for (Index i = 0; i < d.y.rows(); ++i)
      if (d.mask(i, j) == 1.0) CHECK(r.v(i, j) == d.y(i, j));
  REQUIRE(r.designs.size() == 1);
  const double missing = (1.0 - d.mask.col(0).array()).sum();
  const double observed = d.mask.col(0).sum();
  CHECK(r.designs[0].design.total_weight() == doctest::Approx((missing + observed) * 50));
  CHECK(r.designs[0].design.rows() == static_cast<std::size_t>(observed + missing * 50));
}

TEST_CASE("e_step/thread count does not change the draws") {
  const ReplicationData d = univariate_data(1);
  McemConfig cfg = small_config(2.0, 0.8, 100);
  const auto phi = default_initial_phi(d.y, d.mask, SharingMode::PerColumn);
  const Matrix theta = Matrix::Zero(d.y.rows(), d.y.cols());
  cfg.threads = 1;
  const EStepResult a = e_step(d.y, d.mask, theta, phi, cfg, 9);
  cfg.threads = 3;
  const EStepResult b = e_step(d.y, d.mask, theta, phi, cfg, 9);
  CHECK(a.v == b.v);
  CHECK(a.designs[0].design.value == b.designs[0].design.value);
}

TEST_CASE("m_step_theta/closed form") {
  std::mt19937_64 rng(3);
  const Matrix v = oracle::random_matrix(12, 6, rng);
  McemConfig cfg = small_config(0.0, 1.0);
  CHECK((m_step_theta(v, cfg) - v).norm() <= 1e-8 * v.norm());
  cfg.lambda = spectral_norm(v);
  CHECK(m_step_theta(v, cfg).norm() == 0.0);
  cfg.lambda = 1.0;
  CHECK((m_step_theta(v, cfg) - oracle::prox(v, 1.0)).cwiseAbs().maxCoeff() <= 1e-8);
  cfg = small_config(1.0, 0.5);
  CHECK((m_step_theta(v, cfg) - oracle::prox(v, 0.5)).cwiseAbs().maxCoeff() <= 1e-8);
  cfg.inner_solver = Algorithm::IstaSoftImpute;
  CHECK((m_step_theta(v, cfg) - oracle::prox(v, 0.5)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("m_step_phi/shuffled responses give a flat slope") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  ColumnDesign cd;
  cd.column = 0;
  for (int k = 0; k < 5000; ++k) cd.design.add(coin(rng) ? 1.0 : 0.0, g(rng));
  const PhiStep step = m_step_phi({cd}, SharingMode::PerColumn);
  const LogisticFit fit = fit_logistic_column(cd.design);
  CHECK(std::abs(step.params.for_column(0).slope) < 2.0 * fit.slope_std_error);
}

TEST_CASE("m_step_phi/recovers parameters per column and shared") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ColumnDesign> designs(2);
  for (int c = 0; c < 2; ++c) {
    designs[c].column = c + 1;
    for (int k = 0; k < 100000; ++k) {
      const double v = g(rng);
      designs[c].design.add(u(rng) < logistic_missing_prob(v, 2.0, 1.0) ? 0.0 : 1.0, v);
    }
  }
  const PhiStep per = m_step_phi(designs, SharingMode::PerColumn);
  for (Index col : {1, 2}) {
    CHECK(per.params.for_column(col).slope == doctest::Approx(2.0).epsilon(0.1));
    CHECK(per.params.for_column(col).center == doctest::Approx(1.0).epsilon(0.1));
  }
  const PhiStep shared = m_step_phi(designs, SharingMode::Shared);
  CHECK(shared.params.mode == SharingMode::Shared);
  CHECK(shared.params.pairs.size() == 1);
  CHECK(shared.params.for_column(2).slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("mcem/full mask reduces to the theta step") {
  std::mt19937_64 rng(6);
  const Matrix y = oracle::random_matrix(10, 5, rng);
  const McemConfig cfg = small_config(1.5, 0.8);
  const McemState st = mcem_fit(y, Matrix::Ones(10, 5), cfg);
  CHECK(st.iteration == 1);
  CHECK((st.theta_hat - m_step_theta(y, cfg)).norm() == 0.0);
}

TEST_CASE("mcem/ignorable mechanism reduces to softimpute") {
  const ReplicationData d = univariate_data(2);
  McemConfig cfg = small_config(1.2, 0.8);
  cfg.model_mechanism = false;
  cfg.inner_rel_tol = 0.0;
  cfg.inner_max_iters = 3;
  std::mt19937_64 rng(7);
  const Matrix theta0 = oracle::random_matrix(d.y.rows(), d.y.cols(), rng);
  const EStepResult draws = e_step(d.y, d.mask, theta0, {}, cfg, 1);
  const Matrix em = m_step_theta(draws.v, cfg);
  const Matrix si = soft_impute_step(theta0, d.y, d.mask, cfg.effective_threshold());
  CHECK((em - si).cwiseAbs().maxCoeff() <= 1e-10);
  cfg.initial_theta = theta0;
  cfg.max_em_iters = 1;
  const McemState st = mcem_fit(d.y, d.mask, cfg);
  CHECK((st.theta_hat - si).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("mcem/univariate fit recovers the mechanism roughly") {
  const ReplicationData d = univariate_data(0);
  McemConfig cfg = small_config(8.0, 0.8, 200);
  const McemState st = mcem_fit(d.y, d.mask, cfg);
  const PhiPair& phi = st.phi_hat.for_column(0);
  CHECK(phi.slope > 1.5);
  CHECK(phi.slope < 4.5);
  CHECK(std::abs(phi.center) < 1.0);
  CHECK(st.converged);
  for (Index j = 0; j < d.y.cols(); ++j)
    for (Index i = 0; i < d.y.rows(); ++i)
      if (d.mask(i, j) == 1.0) CHECK(st.imputed_mean(i, j) == d.y(i, j));
}

TEST_CASE("mcem/monte carlo objective decreases across m-steps") {
  const ReplicationData d = univariate_data(3);
  McemConfig cfg = small_config(6.0, 0.8, 1000);
  cfg.max_em_iters = 20;
  const McemState st = mcem_fit(d.y, d.mask, cfg);
  REQUIRE(!st.objective_before.empty());
  int down = 0;
  for (std::size_t k = 0; k < st.objective_before.size(); ++k) down += st.objective_after[k] <= st.objective_before[k];
  CHECK(down >= 0.9 * st.objective_before.size());
}

TEST_CASE("mcem/deterministic under a fixed seed") {
  const ReplicationData d = univariate_data(4);
  McemConfig cfg = small_config(4.0, 0.8, 100);
  cfg.max_em_iters = 8;
  const McemState a = mcem_fit(d.y, d.mask, cfg);
  cfg.threads = 2;
  const McemState b = mcem_fit(d.y, d.mask, cfg);
  CHECK(a.theta_hat == b.theta_hat);
  CHECK(a.phi_hat.pairs[0].slope == b.phi_hat.pairs[0].slope);
  CHECK(a.stopping_history == b.stopping_history);
}

TEST_CASE("mcem/non-convergence is flagged") {
  const ReplicationData d = univariate_data(5);
  McemConfig cfg = small_config(0.3, 0.8, 50);
  cfg.max_em_iters = 2;
  cfg.tau = 1e-12;
  const McemState st = mcem_fit(d.y, d.mask, cfg);
  CHECK_FALSE(st.converged);
  CHECK_FALSE(st.warnings.empty());
}

TEST_CASE("mcem/column scaling round trip") {
  ReplicationData d = univariate_data(6);
  d.y = d.y * 10.0;
  d.y.array() += 3.0;
  McemConfig cfg = small_config(6.0, 0.8, 100);
  cfg.scale_columns = true;
  cfg.max_em_iters = 10;
  const McemState st = mcem_fit(d.y, d.mask, cfg);
  for (Index j = 0; j < d.y.cols(); ++j)
    for (Index i = 0; i < d.y.rows(); ++i)
      if (d.mask(i, j) == 1.0) CHECK(st.imputed_mean(i, j) == d.y(i, j));
  CHECK(st.theta_hat.allFinite());
  CHECK(std::abs(st.theta_hat.mean() - 3.0) < 3.0);
}

TEST_CASE("mcem/config validation") {
  McemConfig cfg = small_config(1.0, 1.0);
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config(-1.0, 1.0);
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config(1.0, 1.0);
  cfg.ns = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
