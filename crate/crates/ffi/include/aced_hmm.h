#ifndef ACED_HMM_H
#define ACED_HMM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of learnable parameters in a parameter vector.
 */
#define ACED_NUM_PARAMS 17

/**
 * Stages in a simulated census, in the order G, I, V, R, T.
 */
#define ACED_NUM_STAGES 5

typedef enum AcedStatus {
  ACED_STATUS_OK = 0,
  ACED_STATUS_NULL_POINTER = 1,
  ACED_STATUS_DOMAIN = 2,
  ACED_STATUS_INPUT = 3,
  ACED_STATUS_CONFIG = 4,
  ACED_STATUS_DATA = 5,
  ACED_STATUS_CONVERGENCE = 6,
  ACED_STATUS_IO = 7,
  ACED_STATUS_BUFFER_TOO_SMALL = 8,
  ACED_STATUS_PANIC = 9,
} AcedStatus;

/**
 * Simulated daily counts for G, I, V, R, T.
 */
typedef struct AcedCensus AcedCensus;

/**
 * Model parameters.
 */
typedef struct AcedParams AcedParams;

/**
 * A list of posterior samples.
 */
typedef struct AcedSamples AcedSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminating nul.
 */
size_t aced_last_error_length(void);

/**
 * Copies the last error message into `buf` as a nul-terminated string,
 * truncating to `len - 1` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t aced_last_error_message(char *buf, size_t len);

/**
 * Duration probabilities for days `1..=max_duration`.
 *
 * # Safety
 * `out` must be valid for `out_len` doubles.
 */
enum AcedStatus aced_duration_pmf(double lambda,
                                  double nu,
                                  uint32_t max_duration,
                                  double *out,
                                  size_t out_len);

/**
 * Beta prior shapes `(a, b)` for `rho_G, rho_I, rho_V, d_G, d_I`, written to
 * `out[0..10]`, from population fractions moving to the ICU, to ventilation
 * and dying, plus the early-death means.
 *
 * # Safety
 * `out` must be valid for `out_len` doubles.
 */
enum AcedStatus aced_derive_priors(double p_icu,
                                   double p_vent,
                                   double p_death,
                                   double death_g_mean,
                                   double death_i_mean,
                                   double *out,
                                   size_t out_len);

/**
 * Builds parameters from 17 values in the order
 * `rho_G, rho_I, rho_V, d_G, d_I`, then `lambda, nu` for G, I, V each
 * declining then recovering.
 *
 * # Safety
 * `values` must be valid for `len` doubles; `out` must be writable.
 */
enum AcedStatus aced_params_new(const double *values,
                                size_t len,
                                uint32_t max_duration,
                                struct AcedParams **out);

/**
 * Copies the 17 values of `params` into `out`.
 *
 * # Safety
 * `params` must come from this library; `out` must be valid for `out_len` doubles.
 */
enum AcedStatus aced_params_values(const struct AcedParams *params, double *out, size_t out_len);

/**
 * # Safety
 * `params` must come from this library and not be used afterwards.
 */
void aced_params_free(struct AcedParams *params);

/**
 * Simulates days `1..=n_days` with `admissions[t-1]` admitted to G on day `t`.
 *
 * # Safety
 * `admissions` must be valid for `n_days` values; `out` must be writable.
 */
enum AcedStatus aced_simulate_census(const struct AcedParams *params,
                                     const int64_t *admissions,
                                     size_t n_days,
                                     double init_g,
                                     double init_i,
                                     double init_v,
                                     double scale,
                                     uint64_t seed,
                                     struct AcedCensus **out);

/**
 * Number of simulated days.
 *
 * # Safety
 * `census` must come from this library or be null.
 */
size_t aced_census_days(const struct AcedCensus *census);

/**
 * Copies the counts of stage `stage` (0..5 for G, I, V, R, T).
 *
 * # Safety
 * `census` must come from this library; `out` must be valid for `out_len` doubles.
 */
enum AcedStatus aced_census_stage(const struct AcedCensus *census,
                                  size_t stage,
                                  double *out,
                                  size_t out_len);

/**
 * # Safety
 * `census` must come from this library and not be used afterwards.
 */
void aced_census_free(struct AcedCensus *census);

/**
 * Weighted distance between two `n_labels x n_days` row-major count arrays.
 *
 * # Safety
 * `y` and `y_sim` must be valid for `n_labels * n_days` doubles,
 * `stage_weights` for `n_labels`; `out` must be writable.
 */
enum AcedStatus aced_distance(const double *y,
                              const double *y_sim,
                              size_t n_labels,
                              size_t n_days,
                              const double *stage_weights,
                              double time_first,
                              double time_last,
                              double *out);

/**
 * Fits the dataset CSV with ensembled chains. `config_path` may be null for
 * defaults; `fast` shortens the run.
 *
 * # Safety
 * Paths must be nul-terminated strings; `out` must be writable.
 */
enum AcedStatus aced_fit(const char *dataset_path,
                         const char *config_path,
                         uint64_t seed,
                         bool fast,
                         struct AcedSamples **out);

/**
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum AcedStatus aced_samples_read(const char *path,
                                  uint32_t max_duration,
                                  struct AcedSamples **out);

/**
 * # Safety
 * `samples` must come from this library; `path` must be a nul-terminated string.
 */
enum AcedStatus aced_samples_write(const struct AcedSamples *samples, const char *path);

/**
 * # Safety
 * `samples` must come from this library or be null.
 */
size_t aced_samples_len(const struct AcedSamples *samples);

/**
 * Copies the 17 values of sample `index`.
 *
 * # Safety
 * `samples` must come from this library; `out` must be valid for `out_len` doubles.
 */
enum AcedStatus aced_samples_get(const struct AcedSamples *samples,
                                 size_t index,
                                 double *out,
                                 size_t out_len);

/**
 * # Safety
 * `samples` must come from this library and not be used afterwards.
 */
void aced_samples_free(struct AcedSamples *samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACED_HMM_H */
