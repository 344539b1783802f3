#ifndef BYZOPT_H
#define BYZOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ByzoptStatus {
  BYZOPT_STATUS_OK = 0,
  BYZOPT_STATUS_NULL_POINTER = 1,
  BYZOPT_STATUS_INVALID_ARGUMENT = 2,
  BYZOPT_STATUS_CONFIG = 3,
  BYZOPT_STATUS_IO = 4,
  BYZOPT_STATUS_PANIC = 5,
} ByzoptStatus;

typedef enum ByzoptRule {
  BYZOPT_RULE_MEAN = 0,
  BYZOPT_RULE_KRUM = 1,
  BYZOPT_RULE_GEOMETRIC_MEDIAN = 2,
  BYZOPT_RULE_COORDINATE_MEDIAN = 3,
  BYZOPT_RULE_TRIMMED_MEAN = 4,
} ByzoptRule;

/**
 * Result of a simulation run.
 */
typedef struct ByzoptTrajectory ByzoptTrajectory;

/**
 * One logged iteration.
 */
typedef struct ByzoptRecord {
  size_t k;
  double grad_norm;
  double f_value;
  double agg_error;
  double step_size;
  double mean_local_grad_norm;
} ByzoptRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *byzopt_last_error(void);

/**
 * Runs the JSON run configuration `config_json` and stores a new handle
 * in `*out`. A diverged run still succeeds; see
 * [`byzopt_trajectory_diverged_at`].
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string and `out` a valid
 * pointer to writable storage.
 */
enum ByzoptStatus byzopt_run_json(const char *config_json, struct ByzoptTrajectory **out);

/**
 * Number of logged records, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle from [`byzopt_run_json`].
 */
size_t byzopt_trajectory_len(const struct ByzoptTrajectory *trajectory);

/**
 * Copies record `index` into `*out`.
 *
 * # Safety
 * `trajectory` must be a live handle and `out` a valid writable pointer.
 */
enum ByzoptStatus byzopt_trajectory_record(const struct ByzoptTrajectory *trajectory,
                                           size_t index,
                                           struct ByzoptRecord *out);

/**
 * Iteration at which the run diverged, or -1 if it did not (or the handle is null).
 *
 * # Safety
 * `trajectory` must be null or a live handle from [`byzopt_run_json`].
 */
int64_t byzopt_trajectory_diverged_at(const struct ByzoptTrajectory *trajectory);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `trajectory` must be null or a handle from [`byzopt_run_json`] that has
 * not been freed.
 */
void byzopt_trajectory_free(struct ByzoptTrajectory *trajectory);

/**
 * Aggregates `n` vectors of length `dim`, stored row-major in `inputs`,
 * into `out` (length `dim`), tolerating `byzantine` faulty rows.
 *
 * # Safety
 * `inputs` must point to `n * dim` doubles and `out` to `dim` writable doubles.
 */
enum ByzoptStatus byzopt_aggregate(enum ByzoptRule rule,
                                   bool nnm,
                                   size_t n,
                                   size_t byzantine,
                                   size_t dim,
                                   const double *inputs,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BYZOPT_H */
