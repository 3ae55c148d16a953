#ifndef CBWK_H
#define CBWK_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CbwkStatus {
  CBWK_STATUS_OK = 0,
  CBWK_STATUS_NULL_POINTER = 1,
  CBWK_STATUS_INVALID_UTF8 = 2,
  CBWK_STATUS_INVALID_ARGUMENT = 3,
  CBWK_STATUS_INVALID_PROBLEM = 4,
  CBWK_STATUS_INVALID_CONFIG = 5,
  CBWK_STATUS_NUMERICAL_INSTABILITY = 6,
  CBWK_STATUS_PARSE = 7,
  CBWK_STATUS_IO = 8,
  CBWK_STATUS_OTHER = 9,
  CBWK_STATUS_PANIC = 10,
} CbwkStatus;

/**
 * Opaque problem instance with its true conversion parameter.
 */
typedef struct CbwkInstance CbwkInstance;

/**
 * Opaque record of one simulated run.
 */
typedef struct CbwkRun CbwkRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *cbwk_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cbwk_version(void);

/**
 * Builds the loan-discount instance from a JSON configuration; null or an
 * empty string selects the defaults.
 *
 * # Safety
 * `config_json` is null or a NUL-terminated string; `out` is writable.
 */
enum CbwkStatus cbwk_instance_loan(const char *config_json, struct CbwkInstance **out);

/**
 * Builds an instance from a problem document and a true parameter of
 * length `theta_len`.
 *
 * # Safety
 * `problem_json` is NUL-terminated, `theta` points to `theta_len` doubles
 * and `out` is writable.
 */
enum CbwkStatus cbwk_instance_from_json(const char *problem_json,
                                        const double *theta,
                                        size_t theta_len,
                                        struct CbwkInstance **out);

/**
 * # Safety
 * `inst` is null or a handle not yet freed.
 */
void cbwk_instance_free(struct CbwkInstance *inst);

/**
 * Number of contexts, actions (including the no-op) and cost components.
 *
 * # Safety
 * `inst` is a live handle; the output pointers are writable.
 */
enum CbwkStatus cbwk_instance_shape(const struct CbwkInstance *inst,
                                    size_t *n_contexts,
                                    size_t *n_actions,
                                    size_t *n_costs);

/**
 * Value of the static benchmark program under the true parameters.
 *
 * # Safety
 * `inst` is a live handle; `out` is writable.
 */
enum CbwkStatus cbwk_instance_opt(const struct CbwkInstance *inst, double *out);

/**
 * Runs the policy described by `policy_json` (null for defaults) for one
 * seed.
 *
 * # Safety
 * `inst` is a live handle, `policy_json` is null or NUL-terminated and
 * `out` is writable.
 */
enum CbwkStatus cbwk_simulate(const struct CbwkInstance *inst,
                              const char *policy_json,
                              uint64_t seed,
                              struct CbwkRun **out);

/**
 * # Safety
 * `run` is null or a handle not yet freed.
 */
void cbwk_run_free(struct CbwkRun *run);

/**
 * Number of rounds played.
 *
 * # Safety
 * `run` is null or a live handle.
 */
size_t cbwk_run_len(const struct CbwkRun *run);

/**
 * Cumulative realized reward.
 *
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum CbwkStatus cbwk_run_cumulative_reward(const struct CbwkRun *run, double *out);

/**
 * Cumulative realized cost of component `i`.
 *
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum CbwkStatus cbwk_run_cumulative_cost(const struct CbwkRun *run, size_t i, double *out);

/**
 * First round at which the budget guard fired, or 0 if it never did.
 *
 * # Safety
 * `run` is null or a live handle.
 */
size_t cbwk_run_lock_round(const struct CbwkRun *run);

/**
 * Writes the per-round CSV of the run into directory `dir`.
 *
 * # Safety
 * `run` is a live handle; `dir` is NUL-terminated.
 */
enum CbwkStatus cbwk_run_write_csv(const struct CbwkRun *run, const char *dir);

/**
 * Solves an LP document and returns `{solution, kkt}` as a JSON string
 * to be released with [`cbwk_string_free`].
 *
 * # Safety
 * `lp_json` is NUL-terminated; `out` is writable.
 */
enum CbwkStatus cbwk_lp_solve_json(const char *lp_json, double kkt_tol, char **out);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void cbwk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBWK_H */
