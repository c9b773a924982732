#ifndef MNAR_H
#define MNAR_H

#include <stddef.h>
#include <stdint.h>

#if defined(MNAR_BUILDING_LIBRARY)
#define MNAR_API __attribute__((visibility("default")))
#else
#define MNAR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mnar_status {
  MNAR_OK = 0,
  MNAR_E_INVALID_ARGUMENT = 1,
  MNAR_E_DIMENSION_MISMATCH = 2,
  MNAR_E_NUMERICAL_FAILURE = 3,
  MNAR_E_DEGENERATE_WEIGHTS = 4,
  MNAR_E_SEPARATION = 5,
  MNAR_E_NOT_CONVERGED = 6,
  MNAR_E_UNKNOWN_KEY = 7,
  MNAR_E_OUT_OF_RANGE = 8,
  MNAR_E_INTERNAL = 9
} mnar_status;

typedef enum mnar_method {
  MNAR_MODEL_MCEM = 0,
  MNAR_MASK_CONCAT = 1,
  MNAR_MASK_EXPFAM = 2,
  MNAR_MAR_FISTA = 3,
  MNAR_MAR_SOFTIMPUTE = 4,
  MNAR_MEAN_IMPUTE = 5
} mnar_method;

typedef struct mnar_matrix mnar_matrix;
typedef struct mnar_fit_result mnar_fit_result;
typedef struct mnar_scenario mnar_scenario;
typedef struct mnar_campaign_report mnar_campaign_report;

/* Message of the last failed call on this thread ("" if none). */
MNAR_API const char* mnar_last_error(void);
MNAR_API const char* mnar_version(void);
MNAR_API const char* mnar_status_name(mnar_status status);

MNAR_API const char* mnar_method_name(int method);
MNAR_API mnar_status mnar_method_from_name(const char* name, int* out);

/* Dense row-major access; indices are zero-based. */
MNAR_API mnar_status mnar_matrix_create(size_t rows, size_t cols, mnar_matrix** out);
MNAR_API mnar_status mnar_matrix_from_rows(size_t rows, size_t cols, const double* data, mnar_matrix** out);
MNAR_API void mnar_matrix_free(mnar_matrix* m);
MNAR_API size_t mnar_matrix_rows(const mnar_matrix* m);
MNAR_API size_t mnar_matrix_cols(const mnar_matrix* m);
MNAR_API mnar_status mnar_matrix_get(const mnar_matrix* m, size_t row, size_t col, double* out);
MNAR_API mnar_status mnar_matrix_set(mnar_matrix* m, size_t row, size_t col, double value);
MNAR_API mnar_status mnar_matrix_copy_rows(const mnar_matrix* m, double* out, size_t capacity);

typedef struct mnar_fit_options {
  int method;
  /* 0: lambda is chosen on held-out observed cells over an automatic grid. */
  int has_lambda;
  double lambda;
  int grid_size;
  double grid_ratio;
  double holdout_fraction;
  double sigma2;
  int max_iters;
  double rel_tol;
  int mcem_ns;
  int mcem_max_iters;
  /* 0 = FISTA, 1 = ISTA / softImpute. */
  int mcem_inner;
  int mcem_shared;
  int scale_columns;
  uint64_t seed;
  unsigned threads;
} mnar_fit_options;

MNAR_API void mnar_fit_options_init(mnar_fit_options* opts);

/* mask: 1 = observed, 0 = missing. Unobserved entries of y are ignored. */
MNAR_API mnar_status mnar_fit(const mnar_matrix* y, const mnar_matrix* mask, const mnar_fit_options* opts,
                              mnar_fit_result** out);
/* Held-out error over the automatic lambda grid, without the final fit. */
MNAR_API mnar_status mnar_sweep(const mnar_matrix* y, const mnar_matrix* mask, const mnar_fit_options* opts,
                                mnar_fit_result** out);
MNAR_API void mnar_fit_result_free(mnar_fit_result* r);

/* Borrowed pointers valid until the result is freed; NULL after mnar_sweep. */
MNAR_API const mnar_matrix* mnar_fit_completed(const mnar_fit_result* r);
MNAR_API const mnar_matrix* mnar_fit_estimate(const mnar_fit_result* r);
MNAR_API int mnar_fit_method(const mnar_fit_result* r);
MNAR_API int mnar_fit_has_lambda(const mnar_fit_result* r);
MNAR_API double mnar_fit_lambda(const mnar_fit_result* r);
MNAR_API int mnar_fit_iterations(const mnar_fit_result* r);
MNAR_API int mnar_fit_converged(const mnar_fit_result* r);
MNAR_API size_t mnar_fit_warning_count(const mnar_fit_result* r);
MNAR_API const char* mnar_fit_warning(const mnar_fit_result* r, size_t index);

/* Fitted missingness parameters (model-based method only). */
MNAR_API size_t mnar_fit_phi_count(const mnar_fit_result* r);
MNAR_API int mnar_fit_phi_shared(const mnar_fit_result* r);
MNAR_API mnar_status mnar_fit_phi(const mnar_fit_result* r, size_t index, size_t* column, double* slope,
                                  double* center);

typedef struct mnar_grid_point {
  double lambda;
  double score;
  int ok;
  int iterations;
  double objective;
  long rank;
  const char* error;
} mnar_grid_point;

MNAR_API size_t mnar_fit_sweep_count(const mnar_fit_result* r);
MNAR_API mnar_status mnar_fit_sweep_point(const mnar_fit_result* r, size_t index, mnar_grid_point* out);

/* mask may be NULL (fully observed). Missing cells are mean-imputed first. */
MNAR_API mnar_status mnar_estimate_sigma2(const mnar_matrix* y, const mnar_matrix* mask, size_t rank,
                                          double* out);

/* Scenario: a key/value view over a simulation campaign. Values are text. */
MNAR_API mnar_status mnar_scenario_create(const char* preset, mnar_scenario** out);
MNAR_API void mnar_scenario_free(mnar_scenario* s);
MNAR_API mnar_status mnar_scenario_set(mnar_scenario* s, const char* key, const char* value);
/* Copies the value with a terminating NUL; *needed receives the full size. */
MNAR_API mnar_status mnar_scenario_get(const mnar_scenario* s, const char* key, char* buffer, size_t capacity,
                                       size_t* needed);
MNAR_API mnar_status mnar_scenario_validate(const mnar_scenario* s);
MNAR_API size_t mnar_scenario_key_count(void);
MNAR_API const char* mnar_scenario_key(size_t index);
MNAR_API size_t mnar_scenario_preset_count(void);
MNAR_API const char* mnar_scenario_preset(size_t index);

MNAR_API mnar_status mnar_run_campaign(const mnar_scenario* s, mnar_campaign_report** out);
MNAR_API void mnar_campaign_report_free(mnar_campaign_report* r);

typedef struct mnar_record {
  int method;
  int replication;
  int has_prediction_error;
  double prediction_error;
  int has_total_error;
  double total_error;
  int has_lambda;
  double lambda_prediction;
  double lambda_total;
  double wall_time_s;
  int ok;
  const char* error;
} mnar_record;

typedef struct mnar_summary {
  int method;
  int succeeded;
  int failed;
  double prediction_q1, prediction_median, prediction_q3;
  int prediction_count;
  double total_q1, total_median, total_q3;
  int total_count;
} mnar_summary;

typedef struct mnar_win_rate {
  int method;
  int versus;
  double prediction;
  double total;
  int pairs;
} mnar_win_rate;

MNAR_API size_t mnar_report_record_count(const mnar_campaign_report* r);
MNAR_API mnar_status mnar_report_record(const mnar_campaign_report* r, size_t index, mnar_record* out);
MNAR_API size_t mnar_report_summary_count(const mnar_campaign_report* r);
MNAR_API mnar_status mnar_report_summary(const mnar_campaign_report* r, size_t index, mnar_summary* out);
MNAR_API size_t mnar_report_win_rate_count(const mnar_campaign_report* r);
MNAR_API mnar_status mnar_report_win_rate(const mnar_campaign_report* r, size_t index, mnar_win_rate* out);
MNAR_API size_t mnar_report_replication_count(const mnar_campaign_report* r);
MNAR_API double mnar_report_missing_rate(const mnar_campaign_report* r, size_t replication);
MNAR_API double mnar_report_expected_missing_rate(const mnar_campaign_report* r);
MNAR_API int mnar_report_has_solved_center(const mnar_campaign_report* r);
MNAR_API double mnar_report_solved_center(const mnar_campaign_report* r);
/* The resolved scenario the campaign ran (solved parameters filled in). */
MNAR_API const mnar_scenario* mnar_report_scenario(const mnar_campaign_report* r);

#ifdef __cplusplus
}
#endif

#endif
