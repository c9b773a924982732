#include <doctest.h>

#include "mnar/error.hpp"
#include "mnar/mechanism.hpp"
#include "oracles.hpp"

using namespace mnar;

TEST_CASE("logistic/examples") {
  CHECK(logistic_missing_prob(1.3, 5.0, 1.3) == 0.5);
  CHECK(logistic_missing_prob(-4.0, 0.0, 2.0) == 0.5);
  CHECK(logistic_missing_prob(1e6, 3.0, 0.0) == 1.0);
  CHECK(logistic_missing_prob(-1e6, 3.0, 0.0) == 0.0);
  CHECK(logistic_missing_prob(0.7, 3.0, 0.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.1))));
}

TEST_CASE("logistic/stable and monotone") {
  for (double z : {-700.0, -50.0, 0.0, 50.0, 700.0}) {
    const double p = logistic_missing_prob(z, 1.0, 0.0);
    CHECK(std::isfinite(p));
    CHECK(std::isfinite(log_logistic_missing_prob(z, {1.0, 0.0})));
    CHECK(std::isfinite(log_logistic_observed_prob(z, {1.0, 0.0})));
  }
  CHECK(log_logistic_missing_prob(-700.0, {1.0, 0.0}) == doctest::Approx(-700.0));
  double prev_up = -1.0, prev_down = 2.0;
  for (double y = -5.0; y <= 5.0; y += 0.25) {
    const double up = logistic_missing_prob(y, 2.0, 0.5);
    const double down = logistic_missing_prob(y, -2.0, 0.5);
    CHECK(up > prev_up);
    CHECK(down < prev_down);
    prev_up = up;
    prev_down = down;
  }
}

TEST_CASE("probit/examples") {
  CHECK(probit_missing_prob(0.0) == doctest::Approx(0.5));
  CHECK(probit_missing_prob(-40.0) < 1e-300);
  CHECK(probit_missing_prob(1.96) == doctest::Approx(oracle::normal_cdf(1.96)).epsilon(1e-9));
  CHECK(probit_missing_prob(1.96) == doctest::Approx(0.975).epsilon(1e-3));
  for (double y : {-3.0, -1.0, 0.4, 2.5}) {
    CHECK(probit_missing_prob(y) == doctest::Approx(oracle::normal_cdf(y)).epsilon(1e-9));
  }
}

TEST_CASE("params/validation") {
  MechanismSpec spec;
  CHECK_THROWS_AS(spec.validate(3), Error);
  spec.target_columns = {0};
  spec.params = MechanismParams::per_column({0}, {{3.0, 0.0}});
  CHECK_NOTHROW(spec.validate(3));
  spec.target_columns = {5};
  CHECK_THROWS_AS(spec.validate(3), Error);
  spec.family = MechanismFamily::MarDriver;
  spec.target_columns = {0};
  spec.driver_column = 0;
  CHECK_THROWS_AS(spec.validate(3), Error);
  spec.driver_column = 1;
  CHECK_NOTHROW(spec.validate(3));
  MechanismParams shared = MechanismParams::shared({0, 1}, {2.0, 0.0});
  shared.pairs.push_back({1.0, 1.0});
  CHECK_THROWS_AS(shared.validate(), Error);
}

TEST_CASE("phi/linear parametrisation") {
  const PhiPair p = PhiPair::from_linear(-3.0, 2.0);
  CHECK(p.slope == 2.0);
  CHECK(p.center == doctest::Approx(1.5));
  CHECK(p.intercept() == doctest::Approx(-3.0));
}

TEST_CASE("sample_mask/univariate rate") {
  MechanismSpec spec;
  spec.target_columns = {0};
  spec.params = MechanismParams::per_column({0}, {{3.0, 0.0}});
  Rng rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  double missing = 0.0, cells = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Matrix y(100, 4);
    for (Index j = 0; j < 4; ++j)
      for (Index i = 0; i < 100; ++i) y(i, j) = g(rng);
    const Matrix m = sample_mask(y, spec, rng);
    CHECK(m.rightCols(3).minCoeff() == 1.0);
    missing += (1.0 - m.array()).sum();
    cells += 400.0;
  }
  const double rate = missing / cells;
  const double sd = std::sqrt(0.125 * 0.875 / cells);
  CHECK(std::abs(rate - 0.125) < 3.0 * sd);
}

TEST_CASE("sample_mask/rate matches mean probability") {
  MechanismSpec spec;
  spec.target_columns = {0, 1};
  spec.params = MechanismParams::per_column({0, 1}, {{3.0, 0.0}, {2.0, 1.0}});
  Rng rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  double missing = 0.0, expected = 0.0, var = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Matrix y(1000, 2);
    for (Index j = 0; j < 2; ++j)
      for (Index i = 0; i < 1000; ++i) y(i, j) = g(rng);
    const Matrix m = sample_mask(y, spec, rng);
    missing += (1.0 - m.array()).sum();
    for (Index j = 0; j < 2; ++j)
      for (Index i = 0; i < 1000; ++i) {
        const double p = spec.missing_probability(y, i, j);
        expected += p;
        var += p * (1.0 - p);
      }
  }
  CHECK(std::abs(missing - expected) < 3.0 * std::sqrt(var));
}

TEST_CASE("sample_mask/saturated mechanism keeps every cell") {
  MechanismSpec spec;
  spec.target_columns = {1};
  spec.params = MechanismParams::per_column({1}, {{50.0, 100.0}});
  Rng rng(3);
  const Matrix y = Matrix::Random(30, 3);
  CHECK(sample_mask(y, spec, rng).minCoeff() == 1.0);
}

TEST_CASE("sample_mask/mar driver uses the driver column") {
  MechanismSpec spec;
  spec.family = MechanismFamily::MarDriver;
  spec.target_columns = {0};
  spec.driver_column = 1;
  spec.params = MechanismParams::per_column({0}, {{50.0, 0.0}});
  Matrix y(4, 2);
  y << 10, -5, -10, 5, 10, -5, -10, 5;
  Rng rng(4);
  const Matrix m = sample_mask(y, spec, rng);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 0) == 0.0);
  CHECK(m.col(1).minCoeff() == 1.0);
}

TEST_CASE("sample_mask/deterministic") {
  MechanismSpec spec;
  spec.target_columns = {0};
  spec.params = MechanismParams::per_column({0}, {{3.0, 0.0}});
  const Matrix y = Matrix::Random(50, 3);
  Rng a(9), b(9);
  CHECK(sample_mask(y, spec, a) == sample_mask(y, spec, b));
}

TEST_CASE("sir/options") {
  SirOptions o;
  o.sigma = 0.3;
  CHECK_THROWS_AS(o.validate(), Error);
  o.sigma = 1.0;
  o.proposal_count = 10;
  o.sample_count = 20;
  CHECK_THROWS_AS(o.validate(), Error);
  Rng rng(1);
  CHECK_THROWS_AS(sir_sample(0.0, {1.0, 0.0}, 1, SirOptions{}, rng), Error);
}

TEST_CASE("sir/constant weights follow the proposal") {
  SirOptions o;
  o.proposal_count = 10000;
  o.sample_count = 2000;
  o.sigma = std::sqrt(0.8);
  Rng rng(5);
  const auto draws = sir_sample(0.4, {0.0, 0.0}, 0, o, rng);
  REQUIRE(draws.size() == 2000);
  const double d = oracle::ks_statistic(draws, [&](double x) { return oracle::normal_cdf((x - 0.4) / o.sigma); });
  CHECK(d < 0.05);
}

TEST_CASE("sir/matches rejection sampling") {
  SirOptions o;
  o.proposal_count = 100000;
  o.sample_count = 10000;
  o.sigma = std::sqrt(0.8);
  Rng rng(6);
  const auto draws = sir_sample(0.0, {3.0, 0.0}, 0, o, rng);
  std::mt19937_64 orng(7);
  const auto ref = oracle::rejection_sample(0.0, 0.8, 3.0, 0.0, 20000, orng);
  const double se = std::sqrt(oracle::stddev(draws) * oracle::stddev(draws) / draws.size() +
                              oracle::stddev(ref) * oracle::stddev(ref) / ref.size());
  CHECK(oracle::mean(draws) > 0.0);
  CHECK(std::abs(oracle::mean(draws) - oracle::mean(ref)) < 3.0 * se);
}

TEST_CASE("sir/density matches the normalised target") {
  SirOptions o;
  o.proposal_count = 100000;
  o.sample_count = 100000;
  o.sigma = 1.0;
  Rng rng(8);
  const auto draws = sir_sample(0.5, {2.0, 0.0}, 0, o, rng);
  auto target = [](double x) {
    return std::exp(-0.5 * (x - 0.5) * (x - 0.5)) / (1.0 + std::exp(-2.0 * x));
  };
  const double lo = -4.0, hi = 5.0;
  const int bins = 45;
  const double w = (hi - lo) / bins;
  std::vector<double> mass(bins, 0.0);
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const int sub = 200;
    for (int k = 0; k < sub; ++k) mass[b] += target(lo + (b + (k + 0.5) / sub) * w) * w / sub;
    total += mass[b];
  }
  std::vector<double> counts(bins, 0.0);
  for (double x : draws) {
    const int b = static_cast<int>(std::floor((x - lo) / w));
    if (b >= 0 && b < bins) counts[b] += 1.0;
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += std::abs(counts[b] / draws.size() - mass[b] / total);
  CHECK(0.5 * tv < 0.05);
}

TEST_CASE("sir/single draw and determinism") {
  SirOptions o;
  o.proposal_count = 50;
  o.sample_count = 1;
  Rng a(3), b(3);
  const auto x = sir_sample(1.0, {1.0, 0.0}, 0, o, a);
  CHECK(x.size() == 1);
  CHECK(x == sir_sample(1.0, {1.0, 0.0}, 0, o, b));
}

TEST_CASE("sir/degenerate input") {
  SirOptions o;
  Rng rng(1);
  try {
    sir_sample(std::nan(""), {1.0, 0.0}, 0, o, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateWeights);
  }
}

TEST_CASE("glm/independent responses") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  LogisticDesign d;
  for (int k = 0; k < 4000; ++k) d.add(coin(rng) ? 0.0 : 1.0, g(rng));
  const LogisticFit fit = fit_logistic_column(d);
  CHECK(std::abs(fit.slope) < 2.0 * fit.slope_std_error);
  const auto [a, b] = oracle::grid_maximise(
      [&](double a, double b) { return logistic_log_likelihood(d, a, b); }, 0.0, 0.0, 2.0);
  CHECK(fit.intercept == doctest::Approx(a).epsilon(1e-5));
  CHECK(std::abs(fit.slope - b) < 1e-5);
}

TEST_CASE("glm/recovers generating parameters") {
  for (const PhiPair truth : {PhiPair{3.0, 0.0}, PhiPair{2.0, 1.0}}) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LogisticDesign d;
    for (int k = 0; k < 100000; ++k) {
      const double v = g(rng);
      d.add(u(rng) < logistic_missing_prob(v, truth) ? 0.0 : 1.0, v);
    }
    const LogisticFit fit = fit_logistic_column(d);
    CHECK(fit.phi.slope == doctest::Approx(truth.slope).epsilon(0.1));
    CHECK(std::abs(fit.phi.center - truth.center) < 0.1 * std::max(1.0, std::abs(truth.center)));
    CHECK(fit.converged);
  }
}

TEST_CASE("glm/two point closed form") {
  LogisticDesign d;
  d.add(0.0, 1.0, 9.0);
  d.add(1.0, 1.0, 1.0);
  d.add(0.0, -1.0, 1.0);
  d.add(1.0, -1.0, 9.0);
  const LogisticFit fit = fit_logistic_column(d);
  const double logit_hi = std::log(0.9 / 0.1);
  const double logit_lo = std::log(0.1 / 0.9);
  CHECK(fit.slope == doctest::Approx((logit_hi - logit_lo) / 2.0).epsilon(1e-8));
  CHECK(std::abs(fit.intercept) < 1e-8);
  CHECK(fit.slope > 0.0);
}

TEST_CASE("glm/weights equal stacked rows") {
  LogisticDesign stacked, weighted;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double v = g(rng);
    const double o = v + g(rng) > 0.0 ? 0.0 : 1.0;
    weighted.add(o, v, 3.0);
    for (int r = 0; r < 3; ++r) stacked.add(o, v);
  }
  const LogisticFit a = fit_logistic_column(stacked);
  const LogisticFit b = fit_logistic_column(weighted);
  CHECK(a.slope == doctest::Approx(b.slope).epsilon(1e-10));
  CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-10));
}

TEST_CASE("glm/likelihood increases at every accepted step") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LogisticDesign d;
  for (int k = 0; k < 2000; ++k) {
    const double v = 3.0 * g(rng);
    d.add(u(rng) < logistic_missing_prob(v, 4.0, 1.0) ? 0.0 : 1.0, v);
  }
  const LogisticFit fit = fit_logistic_column(d);
  REQUIRE(fit.log_likelihood_trace.size() >= 2);
  for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k) {
    CHECK(fit.log_likelihood_trace[k] > fit.log_likelihood_trace[k - 1]);
  }
}

TEST_CASE("glm/separation is clamped") {
  LogisticDesign d;
  for (int k = 0; k < 20; ++k) d.add(k < 10 ? 1.0 : 0.0, k < 10 ? -1.0 - k : 1.0 + k);
  const LogisticFit fit = fit_logistic_column(d);
  CHECK(fit.clamped);
  CHECK(std::abs(fit.slope) == doctest::Approx(50.0));
}

TEST_CASE("glm/degenerate responses") {
  LogisticDesign d;
  d.add(1.0, 0.2);
  d.add(1.0, -0.3);
  CHECK_THROWS_AS(fit_logistic_column(d), Error);
  LogisticDesign e;
  e.add(0.0, 0.2);
  CHECK_THROWS_AS(fit_logistic_column(e), Error);
}

TEST_CASE("rate/quadrature and center solve") {
  CHECK(expected_missing_rate({3.0, 0.0}, 0.0, 1.8) == doctest::Approx(0.5).epsilon(1e-10));
  const double c = solve_center_for_rate(3.0, 0.25, 0.0, 1.5);
  CHECK(expected_missing_rate({3.0, c}, 0.0, 1.5) == doctest::Approx(0.25).epsilon(1e-8));
  double mc = 0.0;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, std::sqrt(1.5));
  for (int k = 0; k < 200000; ++k) mc += logistic_missing_prob(g(rng), 2.0, 1.0);
  CHECK(expected_missing_rate({2.0, 1.0}, 0.0, 1.5) == doctest::Approx(mc / 200000).epsilon(0.01));
}
