#ifndef STOREBID_H
#define STOREBID_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum SbStatus {
  SB_OK = 0,
  SB_NULL_POINTER = 1,
  SB_INVALID_ARGUMENT = 2,
  SB_CONFIG = 3,
  SB_CAPACITY = 4,
  SB_CAPABILITY = 5,
  SB_IO = 6,
  SB_DATA = 7,
  SB_PANIC = 8,
} SbStatus;

/**
 * A problem instance: market parameters and price model.
 */
typedef struct SbInstance SbInstance;

/**
 * A value table over pre- or post-decision states.
 */
typedef struct SbTable SbTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an instance from instance JSON, e.g. `{"preset": "desk"}`. Relative
 * price-file paths resolve against the working directory.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SbStatus sb_instance_from_json(const char *json, struct SbInstance **out);

/**
 * # Safety
 * `instance` must be null or a handle from `sb_instance_from_json` not yet freed.
 */
void sb_instance_free(struct SbInstance *instance);

/**
 * Horizon `T`, settlements per hour and capacity of an instance.
 *
 * # Safety
 * `instance` must be a live handle; the out pointers must be valid.
 */
enum SbStatus sb_instance_shape(const struct SbInstance *instance,
                                size_t *horizon,
                                size_t *settlements_per_hour,
                                uint32_t *r_max,
                                uint32_t *l_max);

/**
 * Index of the pre-decision state `(r, l, prev_bid, price_state)` within a
 * period of a pre-decision table.
 *
 * # Safety
 * `instance` must be a live handle and `out` a valid pointer.
 */
enum SbStatus sb_state_index(const struct SbInstance *instance,
                             uint32_t resource,
                             uint32_t lifetime,
                             size_t prev_bid,
                             size_t price_state,
                             size_t *out);

/**
 * Backward dynamic programming. Writes the optimal value table and the value
 * of the initial state (empty storage, full lifetime, idle bid).
 *
 * # Safety
 * `instance` must be a live handle; `out` and `initial_value` valid pointers.
 */
enum SbStatus sb_solve_exact(const struct SbInstance *instance,
                             struct SbTable **out,
                             double *initial_value);

/**
 * Monotone-ADP over pre-decision states. `trainer_json` may be null for the
 * default trainer settings.
 *
 * # Safety
 * `instance` must be a live handle, `trainer_json` null or a valid string,
 * `out` a valid pointer.
 */
enum SbStatus sb_train_pre(const struct SbInstance *instance,
                           const char *trainer_json,
                           struct SbTable **out);

/**
 * Monotone-ADP over post-decision states.
 *
 * # Safety
 * As for `sb_train_pre`.
 */
enum SbStatus sb_train_post(const struct SbInstance *instance,
                            const char *trainer_json,
                            struct SbTable **out);

/**
 * Number of periods, states per period and layout (0 pre, 1 post).
 *
 * # Safety
 * `table` must be a live handle; the out pointers must be valid.
 */
enum SbStatus sb_table_shape(const struct SbTable *table,
                             size_t *periods,
                             size_t *states_per_period,
                             int32_t *is_post);

/**
 * # Safety
 * `table` must be a live handle and `out` a valid pointer.
 */
enum SbStatus sb_table_value(const struct SbTable *table, size_t t, size_t index, double *out);

/**
 * # Safety
 * `table` must be a live handle and `path` a valid string.
 */
enum SbStatus sb_table_save(const struct SbTable *table, const char *path);

/**
 * # Safety
 * `path` must be a valid string and `out` a valid pointer.
 */
enum SbStatus sb_table_load(const char *path, struct SbTable **out);

/**
 * # Safety
 * `table` must be null or a live handle.
 */
void sb_table_free(struct SbTable *table);

/**
 * Settles one hour of `n_prices` prices against the bid `(low, high)` from
 * storage `resource` and lifetime `lifetime`.
 *
 * # Safety
 * `instance` must be a live handle, `prices` must point to `n_prices`
 * readable doubles, and the out pointers must be valid.
 */
enum SbStatus sb_hourly_revenue(const struct SbInstance *instance,
                                uint32_t resource,
                                uint32_t lifetime,
                                const double *prices,
                                size_t n_prices,
                                double low,
                                double high,
                                double *revenue,
                                uint32_t *next_resource,
                                uint32_t *next_lifetime);

/**
 * Evaluates the greedy policy of `table` on `paths` sampled price paths
 * (0 uses the instance default: 1000 paths, or each held-out day once for
 * historical prices).
 *
 * # Safety
 * `instance` and `table` must be live handles; the out pointers must be valid.
 */
enum SbStatus sb_evaluate_policy(const struct SbInstance *instance,
                                 const struct SbTable *table,
                                 size_t paths,
                                 uint64_t seed,
                                 double *mean_value,
                                 double *std_error);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *sb_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOREBID_H */
