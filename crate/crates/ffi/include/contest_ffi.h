#ifndef CONTEST_FFI_H
#define CONTEST_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CONTEST_OK 0

#define CONTEST_ERR_NULL_POINTER 1

#define CONTEST_ERR_INVALID_UTF8 2

#define CONTEST_ERR_PARSE 3

#define CONTEST_ERR_VALIDATION 4

#define CONTEST_ERR_DOMAIN 5

#define CONTEST_ERR_INFINITE_MEAN 6

#define CONTEST_ERR_NON_UNIQUE_THRESHOLD 7

#define CONTEST_ERR_POPULATION_TOO_SMALL 8

#define CONTEST_ERR_DEGENERATE_METRIC 9

#define CONTEST_ERR_UNSUPPORTED 10

#define CONTEST_ERR_INFEASIBLE 11

#define CONTEST_ERR_CALIBRATION_OUT_OF_RANGE 12

#define CONTEST_ERR_NO_CONVERGENCE 13

#define CONTEST_ERR_PANIC 14

/**
 * Opaque handle to a validated contest.
 */
typedef struct ContestHandle ContestHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Short machine-readable name for a status code; never null, static storage.
 */
const char *contest_status_name(int32_t code);

/**
 * Message of the last failed call on this thread, or null after a success.
 *
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *contest_last_error_message(void);

/**
 * Parse a contest from its JSON form and validate it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
int32_t contest_spec_from_json(const char *json, struct ContestHandle **out);

/**
 * Two-group contest with `p1 = Uniform(0,1)`, its `rho`-biased copy, and no ability.
 *
 * # Safety
 * `out` must be writable.
 */
int32_t contest_spec_two_group_uniform(double rho,
                                       double c,
                                       double alpha,
                                       struct ContestHandle **out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `handle` must come from this library and not be used afterwards.
 */
void contest_spec_free(struct ContestHandle *handle);

/**
 * Serialize a handle back to JSON.
 *
 * # Safety
 * `handle` must be valid; `out_json` must be writable. Free the result with `contest_string_free`.
 */
int32_t contest_spec_to_json(const struct ContestHandle *handle, char **out_json);

/**
 * Equilibrium score threshold `t`.
 *
 * # Safety
 * `handle` must be valid; `t_out` must be writable.
 */
int32_t contest_solve_threshold(const struct ContestHandle *handle, double *t_out);

/**
 * Finite-population shift at size `n`: participation cut `delta_n` and slack `epsilon_n`.
 *
 * # Safety
 * `handle` must be valid; out pointers must be writable.
 */
int32_t contest_finite_shift(const struct ContestHandle *handle,
                             uint64_t n,
                             double *delta_out,
                             double *epsilon_out);

/**
 * Representation ratio, welfare ratio and average revenue with identity merit.
 *
 * # Safety
 * `handle` must be valid; out pointers must be writable.
 */
int32_t contest_metrics(const struct ContestHandle *handle,
                        double *r_r_out,
                        double *r_s_out,
                        double *rv_out);

/**
 * Full metrics report as JSON; `merit_json` may be null for the identity merit.
 *
 * # Safety
 * `handle` must be valid; `merit_json` null or NUL-terminated; `out_json` writable.
 */
int32_t contest_metrics_json(const struct ContestHandle *handle,
                             const char *merit_json,
                             char **out_json);

/**
 * Closed-form threshold for the uniform pair.
 *
 * # Safety
 * `t_out` must be writable.
 */
int32_t contest_uniform_closed_threshold(double rho, double c, double alpha, double *t_out);

/**
 * Recover `rho` from an observed representation ratio.
 *
 * # Safety
 * `rho_out` must be writable.
 */
int32_t contest_calibrate_rho(double r_obs, double c, double alpha, double *rho_out);

/**
 * Solve an intervention problem given as JSON; the solution is returned as JSON.
 *
 * # Safety
 * `spec_json` must be NUL-terminated; `out_json` writable. Free the result with `contest_string_free`.
 */
int32_t contest_intervene_json(const char *spec_json,
                               char **out_json);

/**
 * Release a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void contest_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTEST_FFI_H */
