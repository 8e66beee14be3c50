#ifndef LONGMEM_H
#define LONGMEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LM_FAMILY_LPR 0

#define LM_FAMILY_SPLW 1

typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_INVALID_ARGUMENT = 1,
  LM_STATUS_INVALID_MODEL = 2,
  LM_STATUS_INVALID_ACF = 3,
  LM_STATUS_INVALID_INPUT = 4,
  LM_STATUS_DEGENERATE_INPUT = 5,
  LM_STATUS_RANK_DEFICIENT = 6,
  LM_STATUS_RESOURCE_LIMIT = 7,
  LM_STATUS_TOO_MANY_FAILURES = 8,
  LM_STATUS_INTERNAL = 9,
  LM_STATUS_IO = 10,
  LM_STATUS_NULL_POINTER = 11,
  LM_STATUS_PANIC = 12,
} LmStatus;

typedef enum LmStopReason {
  LM_STOP_REASON_CAUCHY = 0,
  LM_STOP_REASON_ACCUMULATED = 1,
  LM_STOP_REASON_DETERMINISTIC_BOUND = 2,
  LM_STOP_REASON_MAX_ITER = 3,
  LM_STOP_REASON_COMPLETED = 4,
} LmStopReason;

/**
 * Estimator bound to one series length.
 */
typedef struct LmEstimator LmEstimator;

/**
 * Bias-correction trace plus the draws of its last bootstrap step.
 */
typedef struct LmTrace LmTrace;

/**
 * Result of one estimation.
 */
typedef struct LmEstimate {
  double d_hat;
  double asym_var;
  size_t n;
  uint32_t family;
  size_t p;
  bool boundary;
} LmEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *lm_last_error_message(void);

/**
 * Fractional difference `(1 - L)^d` of `series[0..len]` into `out[0..len]`.
 *
 * # Safety
 * `series` and `out` must point to `len` doubles.
 */
enum LmStatus lm_frac_filter(const double *series, size_t len, double d, double *out);

/**
 * Exact Gaussian ARFIMA(1, d, 0) path of length `len`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum LmStatus lm_simulate_arfima(double d,
                                 double phi,
                                 double sigma2,
                                 size_t len,
                                 uint64_t seed,
                                 double *out);

/**
 * Periodogram ordinates j = 1..=n_freqs.
 *
 * # Safety
 * `series` must point to `len` doubles and `out` to `n_freqs` writable doubles.
 */
enum LmStatus lm_periodogram(const double *series, size_t len, size_t n_freqs, double *out);

/**
 * Estimator for series of length `series_len` with N = floor(T^ν).
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to free
 * with [`lm_estimator_free`].
 */
enum LmStatus lm_estimator_new(uint32_t family_code,
                               size_t p,
                               double bandwidth_exponent,
                               size_t series_len,
                               struct LmEstimator **out);

/**
 * # Safety
 * `est` must be null or a handle from [`lm_estimator_new`] not yet freed.
 */
void lm_estimator_free(struct LmEstimator *est);

/**
 * Ordinate count N, or 0 for a null handle.
 *
 * # Safety
 * `est` must be null or a live handle.
 */
size_t lm_estimator_bandwidth(const struct LmEstimator *est);

/**
 * # Safety
 * `est` must be a live handle, `series` must point to `len` doubles and
 * `out` must be valid for one write.
 */
enum LmStatus lm_estimator_estimate(const struct LmEstimator *est,
                                    const double *series,
                                    size_t len,
                                    struct LmEstimate *out);

/**
 * Normal interval `d̂ ± z √asym_var`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum LmStatus lm_asymptotic_interval(const struct LmEstimate *estimate,
                                     double level,
                                     double *lower,
                                     double *upper);

/**
 * Pre-filtered sieve bootstrap bias correction with `boot` draws per step.
 * `steps = 0` applies the stochastic stopping rule with the default
 * schedule for the estimator's P; otherwise exactly `steps` bias steps run.
 *
 * # Safety
 * `est` must be a live handle, `series` must point to `len` doubles and
 * `out` must be valid; on success it receives a handle to free with
 * [`lm_trace_free`].
 */
enum LmStatus lm_bias_correct(const struct LmEstimator *est,
                              const double *series,
                              size_t len,
                              size_t boot,
                              size_t steps,
                              size_t max_iter,
                              uint64_t seed,
                              struct LmTrace **out);

/**
 * # Safety
 * `trace` must be null or a handle from [`lm_bias_correct`] not yet freed.
 */
void lm_trace_free(struct LmTrace *trace);

/**
 * Selected estimate; NaN for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double lm_trace_estimate(const struct LmTrace *trace);

/**
 * Number of bias steps executed.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t lm_trace_steps(const struct LmTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle.
 */
enum LmStopReason lm_trace_stop_reason(const struct LmTrace *trace);

/**
 * Copies up to `cap` iterates d̃^(0), d̃^(1), … and returns the full count.
 * Pass a null `out` to query the count.
 *
 * # Safety
 * `trace` must be a live handle and `out` null or valid for `cap` writes.
 */
size_t lm_trace_iterates(const struct LmTrace *trace, double *out, size_t cap);

/**
 * As [`lm_trace_iterates`], for the bootstrap bias estimates.
 *
 * # Safety
 * `trace` must be a live handle and `out` null or valid for `cap` writes.
 */
size_t lm_trace_bias_estimates(const struct LmTrace *trace, double *out, size_t cap);

/**
 * As [`lm_trace_iterates`], for the bootstrap estimates of the last step.
 *
 * # Safety
 * `trace` must be a live handle and `out` null or valid for `cap` writes.
 */
size_t lm_trace_draws(const struct LmTrace *trace, double *out, size_t cap);

/**
 * HPD interval of the last step's bootstrap estimates.
 *
 * # Safety
 * `trace` must be a live handle; `lower` and `upper` must be valid.
 */
enum LmStatus lm_trace_hpd(const struct LmTrace *trace, double level, double *lower, double *upper);

/**
 * Narrowest window holding ceil(level·len) of the draws.
 *
 * # Safety
 * `draws` must point to `len` doubles; `lower` and `upper` must be valid.
 */
enum LmStatus lm_hpd_interval(const double *draws,
                              size_t len,
                              double level,
                              double *lower,
                              double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LONGMEM_H */
