/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef STRATEGEM_H
#define STRATEGEM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum StrategemStatus {
  STRATEGEM_STATUS_OK = 0,
  STRATEGEM_STATUS_NULL_POINTER = 1,
  STRATEGEM_STATUS_INVALID_ARGUMENT = 2,
  STRATEGEM_STATUS_SHAPE_MISMATCH = 3,
  STRATEGEM_STATUS_PARSE = 4,
  STRATEGEM_STATUS_IO = 5,
  STRATEGEM_STATUS_PANIC = 6,
} StrategemStatus;

typedef enum StrategemLink {
  STRATEGEM_LINK_IDENTITY = 0,
  STRATEGEM_LINK_LOGISTIC = 1,
} StrategemLink;

typedef enum StrategemPolicy {
  STRATEGEM_POLICY_STRATEGIC = 0,
  STRATEGEM_POLICY_NON_STRATEGIC = 1,
} StrategemPolicy;

typedef enum StrategemSuite {
  STRATEGEM_SUITE_INNER = 0,
  STRATEGEM_SUITE_OUTER = 1,
  STRATEGEM_SUITE_LEMMA = 2,
  STRATEGEM_SUITE_SOFTMAX = 3,
  STRATEGEM_SUITE_ALL = 4,
} StrategemSuite;

/**
 * A labelled dataset.
 */
typedef struct StrategemDataset StrategemDataset;

/**
 * Per-iteration record of one bi-level run.
 */
typedef struct StrategemHistory StrategemHistory;

/**
 * Manipulation step size, cost weight and cost matrix.
 */
typedef struct StrategemManipulation StrategemManipulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *strategem_last_error(void);

void strategem_clear_error(void);

/**
 * Draws `n` points in `d` dimensions from two isotropic Gaussians centred
 * at `±class_offset` per coordinate.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum StrategemStatus strategem_dataset_generate(size_t d,
                                                size_t n,
                                                double class_offset,
                                                double class_scale,
                                                double positive_fraction,
                                                uint64_t seed,
                                                struct StrategemDataset **out);

/**
 * Loads a headed CSV; a row is positive when its `label_column` cell equals
 * `positive_token`.
 *
 * # Safety
 * String arguments must be null-terminated; `out` must be writable.
 */
enum StrategemStatus strategem_dataset_load_csv(const char *path,
                                                const char *label_column,
                                                const char *positive_token,
                                                struct StrategemDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from this library, not yet freed.
 */
void strategem_dataset_free(struct StrategemDataset *ds);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t strategem_dataset_len(const struct StrategemDataset *ds);

/**
 * Number of features, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t strategem_dataset_dim(const struct StrategemDataset *ds);

/**
 * Copies row `index` into `features` (length `dim`) and its label into
 * `label_out`.
 *
 * # Safety
 * `features` must hold `dim` doubles; `label_out` must be writable.
 */
enum StrategemStatus strategem_dataset_row(const struct StrategemDataset *ds,
                                           size_t index,
                                           double *features,
                                           size_t dim,
                                           uint8_t *label_out);

/**
 * `cost` is a row-major `dim × dim` symmetric positive definite matrix, or
 * null for the identity.
 *
 * # Safety
 * `cost` must be null or hold `dim * dim` doubles; `out` must be writable.
 */
enum StrategemStatus strategem_manipulation_new(size_t dim,
                                                double eta,
                                                double lambda,
                                                const double *cost,
                                                struct StrategemManipulation **out);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
void strategem_manipulation_free(struct StrategemManipulation *m);

/**
 * Best response of one agent with features `x` and label `y` to the rule
 * `weights`, written to `x_out`. Positive agents do not move.
 *
 * # Safety
 * `weights`, `x` and `x_out` must each hold `dim` doubles.
 */
enum StrategemStatus strategem_manipulation_step(const struct StrategemManipulation *m,
                                                 const double *weights,
                                                 const double *x,
                                                 uint8_t y,
                                                 size_t dim,
                                                 double *x_out);

/**
 * Runs the bi-level game for `iterations` rounds from seeded initial
 * weights with standard deviation `init_scale`. The classification
 * threshold is 0.5 for the identity link and 0 for the logistic link.
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
enum StrategemStatus strategem_bilevel_run(const struct StrategemDataset *train,
                                           const struct StrategemDataset *test,
                                           const struct StrategemManipulation *m,
                                           double outer_eta,
                                           size_t iterations,
                                           enum StrategemLink link,
                                           double init_scale,
                                           enum StrategemPolicy policy,
                                           uint64_t seed,
                                           struct StrategemHistory **out);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
void strategem_history_free(struct StrategemHistory *h);

/**
 * Number of records, `iterations + 1`, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t strategem_history_len(const struct StrategemHistory *h);

/**
 * Record `index`: test accuracy, summed training cross-entropy, and the
 * weights copied into `weights` (length `dim`). Null outputs are skipped.
 *
 * # Safety
 * Non-null outputs must be writable; `weights` must hold `dim` doubles.
 */
enum StrategemStatus strategem_history_record(const struct StrategemHistory *h,
                                              size_t index,
                                              double *accuracy,
                                              double *cross_entropy,
                                              double *weights,
                                              size_t dim);

/**
 * Runs a verification suite with default sizes and `seed`. `passed`
 * receives whether every report in the suite passed and `worst_error` the
 * largest deviation seen. With `tamper` set the suites must fail.
 *
 * # Safety
 * `passed` and `worst_error` must be writable.
 */
enum StrategemStatus strategem_verify(enum StrategemSuite suite,
                                      uint64_t seed,
                                      bool tamper,
                                      bool *passed,
                                      double *worst_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRATEGEM_H */
