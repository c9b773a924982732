#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mnar/linalg.hpp"
#include "mnar/mechanism.hpp"
#include "mnar/random.hpp"
#include "mnar/solvers.hpp"

namespace mnar {

enum class Method { ModelMcem, MaskConcat, MaskExpfam, MarFista, MarSoftImpute, MeanImpute };

inline constexpr Method kAllMethods[] = {Method::ModelMcem,  Method::MaskConcat,
                                         Method::MaskExpfam, Method::MarFista,
                                         Method::MarSoftImpute, Method::MeanImpute};

std::string_view method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

struct LowRankFactors {
  Matrix left;   // n x r
  Matrix right;  // p x r
};

LowRankFactors draw_factors(Index n, Index p, Index r, Rng& rng);
/// left * right^T rescaled to unit empirical entry variance.
Matrix compose_low_rank(const LowRankFactors& f);
Matrix generate_low_rank(Index n, Index p, Index r, Rng& rng);

/// Rotates row `driver` of the right factor to be orthogonal to row `target`
/// (norm preserved), so the two columns of the product are decorrelated.
void decorrelate_columns(LowRankFactors& f, Index target, Index driver);

Matrix add_noise(const Matrix& theta, double sigma2, Rng& rng);

/// ||(T^ - Y) o (1 - M)||^2 / ||Y o (1 - M)||^2; empty when undefined.
std::optional<double> prediction_error(const Matrix& theta_hat, const Matrix& y, const Matrix& mask);
/// ||T^ - T||^2 / ||T||^2; empty when undefined.
std::optional<double> total_error(const Matrix& theta_hat, const Matrix& theta);

/// Every entry of column j replaced by the mean of its observed entries.
Matrix mean_impute(const Matrix& y, const Matrix& mask);

/// Residual sum of squares of the rank-r truncated SVD over (np - nr - rp + r^2).
double estimate_sigma2(const Matrix& y, Index r);

enum class Selection { Separate, Prediction, Total };

std::string_view selection_name(Selection s);
std::optional<Selection> selection_from_name(std::string_view name);

struct Scenario {
  std::string name = "scenario";
  Index n = 100;
  Index p = 4;
  Index r = 1;
  double sigma2 = 0.8;
  MechanismSpec mechanism;
  /// When set, the shared center is solved so that the expected missing
  /// fraction of the whole matrix hits this value.
  std::optional<double> target_missing_rate;
  /// MarDriver only: make the driver column uncorrelated with the targets.
  bool decorrelate_driver = false;
  int replications = 20;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  int grid_size = 15;
  double grid_ratio = 100.0;
  Selection selection = Selection::Separate;
  std::uint64_t seed = 1;

  // Solver settings.
  int max_iters = 500;
  double rel_tol = 1e-6;
  int mcem_ns = 1000;
  int mcem_max_iters = 100;
  Algorithm mcem_inner = Algorithm::Fista;
  SharingMode mcem_sharing = SharingMode::PerColumn;
  unsigned threads = 0;

  void validate() const;
};

struct MethodRecord {
  Method method = Method::MeanImpute;
  int replication = 0;
  std::optional<double> prediction_error;
  std::optional<double> total_error;
  /// Lambda that produced the reported prediction / total error.
  double lambda_prediction = 0.0;
  double lambda_total = 0.0;
  bool has_lambda = false;
  double wall_time_s = 0.0;
  bool ok = false;
  std::string error;
};

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  int count = 0;
};

Quartiles quartiles(std::vector<double> values);

struct MethodSummary {
  Method method = Method::MeanImpute;
  int succeeded = 0;
  int failed = 0;
  Quartiles prediction;
  Quartiles total;
};

struct WinRate {
  Method method = Method::MeanImpute;
  Method versus = Method::MeanImpute;
  /// Fraction of replications where `method` has the strictly smaller error.
  double prediction = 0.0;
  double total = 0.0;
  int pairs = 0;
};

struct CampaignReport {
  Scenario scenario;
  /// Ordered by replication, then by the scenario's method order.
  std::vector<MethodRecord> records;
  std::vector<MethodSummary> summaries;
  std::vector<WinRate> win_rates;
  std::vector<double> missing_rates;
  /// Mean over replications of the mean per-cell missing probability.
  double expected_missing_rate = 0.0;
  std::optional<double> solved_center;
};

/// Scenario with any solved mechanism parameters filled in.
Scenario resolve_scenario(const Scenario& s);

struct ReplicationData {
  Matrix theta;
  Matrix y;
  Matrix mask;
  double expected_missing = 0.0;
};

ReplicationData simulate_replication(const Scenario& resolved, int replication);

/// Runs one method on one replication with oracle lambda selection.
MethodRecord run_method(const Scenario& resolved, const ReplicationData& data, Method method,
                        int replication);

CampaignReport run_campaign(const Scenario& scenario);

/// Campaign presets mirroring the published simulation settings.
Scenario univariate_scenario();
Scenario bivariate_scenario();
Scenario multivariate_scenario(double sigma2 = 0.5);
Scenario mar_driver_scenario();
Scenario probit_scenario();

}  // namespace mnar
