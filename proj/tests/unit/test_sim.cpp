#include <doctest.h>

#include "mnar/error.hpp"
#include "mnar/sim.hpp"
#include "oracles.hpp"

using namespace mnar;

TEST_CASE("low rank/exact rank and unit variance") {
  Rng rng(1);
  for (Index r : {1, 3}) {
    const Matrix theta = generate_low_rank(20, 4, r, rng);
    CHECK(numerical_rank(theta) == r);
    const double mean = theta.mean();
    CHECK((theta.array() - mean).square().sum() / (theta.size() - 1) == doctest::Approx(1.0));
  }
  const Matrix one = generate_low_rank(6, 5, 1, rng);
  for (Index i = 1; i < 6; ++i)
    for (Index j = 1; j < 5; ++j)
      CHECK(std::abs(one(0, 0) * one(i, j) - one(0, j) * one(i, 0)) < 1e-12);
  CHECK_THROWS_AS(generate_low_rank(5, 4, 4, rng), Error);
  CHECK_THROWS_AS(generate_low_rank(5, 4, 0, rng), Error);
}

TEST_CASE("low rank/decorrelated driver is orthogonal to the target") {
  Rng rng(2);
  LowRankFactors f = draw_factors(50, 6, 3, rng);
  const double before = f.right.row(1).norm();
  decorrelate_columns(f, 0, 1);
  CHECK(std::abs(f.right.row(0).dot(f.right.row(1))) < 1e-12);
  CHECK(f.right.row(1).norm() == doctest::Approx(before));
}

TEST_CASE("noise/variance") {
  Rng rng(3);
  const Matrix y = add_noise(Matrix::Zero(200, 200), 0.5, rng);
  const double var = y.squaredNorm() / y.size();
  CHECK(std::abs(var - 0.5) < 0.05 * 0.5);
  CHECK(add_noise(Matrix::Ones(2, 2), 0.0, rng) == Matrix::Ones(2, 2));
}

TEST_CASE("metrics/hand computed two by two") {
  Matrix y(2, 2);
  y << 1, 2, 3, 4;
  Matrix mask(2, 2);
  mask << 1, 0, 1, 1;
  Matrix est = y;
  est(0, 1) = 1.0;
  est(0, 0) = 100.0;
  CHECK(*prediction_error(est, y, mask) == doctest::Approx(0.25));
  mask(1, 0) = 0.0;
  est(1, 0) = 1.0;
  CHECK(*prediction_error(est, y, mask) == doctest::Approx((1.0 + 4.0) / (4.0 + 9.0)));
  CHECK(*total_error(Matrix::Zero(2, 2), y) == doctest::Approx(1.0));
  Matrix half = y * 0.5;
  CHECK(*total_error(half, y) == doctest::Approx(0.25));
  CHECK_FALSE(prediction_error(est, y, Matrix::Ones(2, 2)).has_value());
  CHECK_FALSE(total_error(y, Matrix::Zero(2, 2)).has_value());
  CHECK_THROWS_AS(total_error(Matrix::Zero(3, 2), y), Error);
}

TEST_CASE("mean impute/semantics") {
  Matrix y(3, 2);
  y << 1, 10, 2, std::nan(""), 6, 30;
  Matrix mask(3, 2);
  mask << 1, 1, 0, 0, 1, 1;
  const Matrix est = mean_impute(y, mask);
  CHECK(est.col(0).isConstant(3.5));
  CHECK(est.col(1).isConstant(20.0));
  mask.col(1).setZero();
  CHECK_THROWS_AS(mean_impute(y, mask), Error);
}

TEST_CASE("sigma estimate/exact rank and noisy") {
  Rng rng(4);
  const Matrix theta = generate_low_rank(30, 10, 2, rng);
  CHECK(estimate_sigma2(theta, 2) < 1e-20);
  const Matrix big = generate_low_rank(100, 100, 3, rng);
  const Matrix y = add_noise(big, 0.5, rng);
  CHECK(std::abs(estimate_sigma2(y, 3) - 0.5) < 0.1 * 0.5);
  Matrix small(2, 2);
  small << 1, 2, 3, 4;
  CHECK(estimate_sigma2(small, 0) == doctest::Approx(30.0 / 4.0));
  CHECK(estimate_sigma2(small, 1) == doctest::Approx(std::pow(Eigen::JacobiSVD<Matrix>(small).singularValues()(1), 2)));
  CHECK_THROWS_AS(estimate_sigma2(small, 2), Error);
}

TEST_CASE("quartiles/interpolated") {
  const Quartiles q = quartiles({4, 1, 3, 2});
  CHECK(q.q1 == doctest::Approx(1.75));
  CHECK(q.median == doctest::Approx(2.5));
  CHECK(q.q3 == doctest::Approx(3.25));
  CHECK(q.count == 4);
  CHECK(quartiles({5}).median == 5.0);
  CHECK(std::isnan(quartiles({}).median));
  std::vector<double> odd{9, 1, 5, 3, 7};
  CHECK(quartiles(odd).median == oracle::median(odd));
}

TEST_CASE("methods/names round trip") {
  for (Method m : kAllMethods) CHECK(method_from_name(method_name(m)) == m);
  CHECK_FALSE(method_from_name("NOPE").has_value());
  CHECK(selection_from_name("prediction") == Selection::Prediction);
}

TEST_CASE("scenario/validation") {
  Scenario s = univariate_scenario();
  CHECK_NOTHROW(s.validate());
  s.sigma2 = 0.1;
  CHECK_THROWS_AS(s.validate(), Error);
  s.methods = {Method::MarFista};
  CHECK_NOTHROW(s.validate());
  s = univariate_scenario();
  s.r = 4;
  CHECK_THROWS_AS(s.validate(), Error);
  s = probit_scenario();
  s.target_missing_rate = 0.2;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("scenario/solved center hits the requested rate") {
  const Scenario s = resolve_scenario(multivariate_scenario());
  const PhiPair& pair = s.mechanism.params.pairs.front();
  CHECK(expected_missing_rate(pair, 0.0, 1.5) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(s.target_missing_rate.has_value());
}

TEST_CASE("missingness/univariate rate") {
  const Scenario s = resolve_scenario(univariate_scenario());
  double missing = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) missing += (1.0 - simulate_replication(s, r).mask.array()).sum();
  const double cells = reps * 400.0;
  const double rate = missing / cells;
  CHECK(std::abs(rate - 0.125) < 3.0 * std::sqrt(0.125 * 0.875 / cells));
}

TEST_CASE("missingness/bivariate rates") {
  const Scenario s = resolve_scenario(bivariate_scenario());
  const int reps = 20;
  double missing[2] = {0.0, 0.0}, expected[2] = {0.0, 0.0}, var[2] = {0.0, 0.0};
  for (int r = 0; r < reps; ++r) {
    const ReplicationData d = simulate_replication(s, r);
    CHECK(d.mask.rightCols(48).minCoeff() == 1.0);
    for (Index j = 0; j < 2; ++j) {
      for (Index i = 0; i < s.n; ++i) {
        const double pr = 1.0 / (1.0 + std::exp(-s.mechanism.params.pairs[j].slope * (d.y(i, j) - s.mechanism.params.pairs[j].center)));
        expected[j] += pr;
        var[j] += pr * (1.0 - pr);
        missing[j] += 1.0 - d.mask(i, j);
      }
    }
  }
  const double cells = reps * 100.0;
  CHECK(std::abs(missing[0] / cells - 0.5) < 3.0 * std::sqrt(0.25 / cells));
  // Conditionally on y the mask cells are independent Bernoulli draws.
  for (int j = 0; j < 2; ++j) CHECK(std::abs(missing[j] - expected[j]) < 3.0 * std::sqrt(var[j]));
  CHECK(expected[1] / cells == doctest::Approx(expected_missing_rate({2.0, 1.0}, 0.0, 1.8)).epsilon(0.25));
}

TEST_CASE("campaign/small run is deterministic") {
  Scenario s = univariate_scenario();
  s.replications = 3;
  s.grid_size = 4;
  s.mcem_ns = 20;
  s.mcem_max_iters = 5;
  s.threads = 2;
  const CampaignReport a = run_campaign(s);
  s.threads = 1;
  const CampaignReport b = run_campaign(s);
  REQUIRE(a.records.size() == 18);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].ok);
    CHECK(a.records[k].method == b.records[k].method);
    CHECK(a.records[k].prediction_error == b.records[k].prediction_error);
    CHECK(a.records[k].total_error == b.records[k].total_error);
    CHECK(a.records[k].lambda_prediction == b.records[k].lambda_prediction);
  }
  CHECK(a.missing_rates == b.missing_rates);
  CHECK(a.summaries.size() == 6);
  CHECK(a.win_rates.size() == 30);
  CHECK_FALSE(a.solved_center.has_value());
}

TEST_CASE("campaign/oracle selection and mean imputation") {
  Scenario s = univariate_scenario();
  s.replications = 4;
  s.methods = {Method::MarFista, Method::MaskConcat, Method::MeanImpute};
  const CampaignReport rep = run_campaign(s);
  const auto median_of = [&](Method m) {
    for (const MethodSummary& sum : rep.summaries)
      if (sum.method == m) return sum.prediction.median;
    return 0.0;
  };
  CHECK(median_of(Method::MeanImpute) > std::min(median_of(Method::MarFista), median_of(Method::MaskConcat)));
  for (const MethodRecord& r : rep.records) {
    CHECK(r.ok);
    if (r.method == Method::MeanImpute) CHECK_FALSE(r.has_lambda);
    else CHECK(r.has_lambda);
  }
}
