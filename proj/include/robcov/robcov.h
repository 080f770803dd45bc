/* C interface to the robcov library. All objects are opaque handles owned by
 * the caller and released with the matching *_free function. Every fallible
 * call returns a robcov_status; on failure robcov_last_error() describes the
 * cause (the text is per thread and valid until the next failing call). */
#ifndef ROBCOV_H
#define ROBCOV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ROBCOV_API __declspec(dllexport)
#else
#define ROBCOV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  ROBCOV_OK = 0,
  ROBCOV_E_INVALID_ARGUMENT = 1,
  ROBCOV_E_DIMENSION_MISMATCH = 2,
  ROBCOV_E_NOT_POSITIVE_DEFINITE = 3,
  ROBCOV_E_DIVERGENT_INTEGRAL = 4,
  ROBCOV_E_NO_CONVERGENCE = 5,
  ROBCOV_E_REJECTION_LIMIT = 6,
  ROBCOV_E_SOUNDNESS_GAP = 7,
  ROBCOV_E_IO = 8,
  ROBCOV_E_NUMERIC = 9,
  ROBCOV_E_INTERNAL = 10
} robcov_status;

typedef struct robcov_matrix robcov_matrix;
typedef struct robcov_model robcov_model;
typedef struct robcov_report robcov_report;

ROBCOV_API const char* robcov_version(void);
ROBCOV_API const char* robcov_last_error(void);
ROBCOV_API const char* robcov_status_name(robcov_status status);

/* ROBCOV_SEED if set, else fallback. */
ROBCOV_API robcov_status robcov_default_seed(uint64_t fallback, uint64_t* seed);
ROBCOV_API uint64_t robcov_derive_seed(uint64_t master_seed, const char* experiment, uint64_t trial_index);

/* Symmetric matrices */
ROBCOV_API robcov_status robcov_matrix_create(int dim, const double* row_major, robcov_matrix** out);
ROBCOV_API robcov_status robcov_matrix_identity(int dim, robcov_matrix** out);
ROBCOV_API robcov_status robcov_matrix_load(const char* path, robcov_matrix** out);
ROBCOV_API robcov_status robcov_matrix_save(const robcov_matrix* m, const char* path);
ROBCOV_API int robcov_matrix_dim(const robcov_matrix* m);
ROBCOV_API robcov_status robcov_matrix_copy_to(const robcov_matrix* m, double* row_major);
ROBCOV_API void robcov_matrix_free(robcov_matrix* m);

ROBCOV_API robcov_status robcov_frobenius_norm(const robcov_matrix* m, double* out);
ROBCOV_API robcov_status robcov_spectral_norm(const robcov_matrix* m, double tol, double* out);
ROBCOV_API robcov_status robcov_trace_product_pow(const robcov_matrix* a, const robcov_matrix* b, int power,
                                                  double* out);
ROBCOV_API robcov_status robcov_logdet_pd(const robcov_matrix* m, double* out);
ROBCOV_API robcov_status robcov_is_pd(const robcov_matrix* m, int* out);

/* Gaussian chi-squared inner products relative to N(0, I) */
ROBCOV_API robcov_status robcov_chi2_exact(const robcov_matrix* sigma1, const robcov_matrix* sigma2, double* value,
                                           double* log_value);
ROBCOV_API robcov_status robcov_chi2_taylor(const robcov_matrix* a, const robcov_matrix* b, double* first_order,
                                            double* correction_bound);
ROBCOV_API robcov_status robcov_det_series(const robcov_matrix* a, const robcov_matrix* b, int terms, double* lhs,
                                           double* rhs);
ROBCOV_API robcov_status robcov_tv_bound(double chi2_self, double* out);

/* Hard-instance ensemble */
typedef struct {
  int dim;
  double epsilon;
  double frob_target;
  double entry_scale;
  double spec_cap;
  double frob_lo;
  double frob_hi;
  int max_rejects;
} robcov_ensemble_params;

/* Defaults for a soundness gap C: entry scale 1.2 C, Frobenius window [C, 2C]. */
ROBCOV_API robcov_status robcov_ensemble_params_init(int dim, double epsilon, double frob_target,
                                                     robcov_ensemble_params* out);
ROBCOV_API robcov_status robcov_sample_perturbation(const robcov_ensemble_params* params, uint64_t master_seed,
                                                    const char* experiment, uint64_t trial_index,
                                                    robcov_matrix** out, int* rejects);

ROBCOV_API robcov_status robcov_model_create(const robcov_matrix* perturbation, double epsilon, int check_gap,
                                             robcov_model** out);
ROBCOV_API void robcov_model_free(robcov_model* m);
ROBCOV_API int robcov_model_dim(const robcov_model* m);
/* d x d row-major mixture covariance. */
ROBCOV_API robcov_status robcov_model_covariance(const robcov_model* m, double* row_major);
/* n x d row-major samples drawn from derive_stream(master_seed, experiment, trial_index). */
ROBCOV_API robcov_status robcov_model_sample(const robcov_model* m, uint64_t master_seed, const char* experiment,
                                             uint64_t trial_index, int64_t n, double* out);
ROBCOV_API robcov_status robcov_chi2_mixture(const robcov_model* m1, const robcov_model* m2, double* value,
                                             double* log_value);
ROBCOV_API robcov_status robcov_first_order_cancellation(double epsilon, double* out);

/* Testers on n x d row-major samples */
typedef struct {
  double statistic;
  double threshold;
  int reject;
} robcov_verdict;

ROBCOV_API robcov_status robcov_frob_tester(const double* samples, int64_t n, int dim, double gamma, double delta,
                                            robcov_verdict* out);
ROBCOV_API robcov_status robcov_pair_kurtosis_tester(const double* samples, int64_t n, int dim,
                                                     double threshold_scale, robcov_verdict* out);

/* Experiment runs. A report holds the trial records, the run manifest and a
 * short human-readable summary. */
typedef struct {
  uint64_t master_seed;
  int trials;        /* 0 picks the subcommand default */
  int workers;       /* worker threads; results do not depend on it */
  const int64_t* samples;
  size_t samples_count;
  const double* thresholds; /* concentration thresholds; empty for {1,2,4,8,16}/d^2 */
  size_t thresholds_count;
  const char* datasets;     /* power: comma list of null, noiseless-alt, ensemble-alt */
  const char* testers;      /* power: comma list of frob, kurtosis */
  double gamma;
  double delta;
  double threshold_scale;
  const char* matrix_dir;   /* gen-ensemble: also write accepted matrices here */
  int identical_pairs;      /* indist: use B = A */
} robcov_run_options;

ROBCOV_API void robcov_run_options_init(robcov_run_options* opts);

ROBCOV_API robcov_status robcov_run_chi2(const char* path_a, const char* path_b, const char* mode, double epsilon,
                                         robcov_report** out);
ROBCOV_API robcov_status robcov_run_gen_ensemble(const robcov_ensemble_params* params,
                                                 const robcov_run_options* opts, robcov_report** out);
ROBCOV_API robcov_status robcov_run_concentration(const robcov_ensemble_params* params,
                                                  const robcov_run_options* opts, robcov_report** out);
ROBCOV_API robcov_status robcov_run_indist(const robcov_ensemble_params* params, const robcov_run_options* opts,
                                           robcov_report** out);
ROBCOV_API robcov_status robcov_run_power(const robcov_ensemble_params* params, const robcov_run_options* opts,
                                          robcov_report** out);
ROBCOV_API robcov_status robcov_run_selfcheck(const robcov_run_options* opts, robcov_report** out);

ROBCOV_API size_t robcov_report_record_count(const robcov_report* r);
ROBCOV_API int robcov_report_failures(const robcov_report* r);
/* Newline-separated summary; owned by the report. */
ROBCOV_API const char* robcov_report_summary(const robcov_report* r);
/* Records rendered as "csv" or "json"; the text is owned by the report. */
ROBCOV_API robcov_status robcov_report_render(robcov_report* r, const char* format, const char** text);
/* Writes records to path and the manifest to path + ".manifest.json". */
ROBCOV_API robcov_status robcov_report_write(const robcov_report* r, const char* path, const char* format);
ROBCOV_API const char* robcov_report_manifest(robcov_report* r);
ROBCOV_API void robcov_report_free(robcov_report* r);

#ifdef __cplusplus
}
#endif

#endif
