#ifndef READMISSION_H
#define READMISSION_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * `readmitted == "<30"` against everything else.
 */
#define RDM_TASK_SHORT_TERM 0

/**
 * `"<30"` or `">30"` against `"NO"`.
 */
#define RDM_TASK_ANY_READMISSION 1

/**
 * `"<30"` against `">30"`; non-readmitted encounters are excluded.
 */
#define RDM_TASK_DIFFERENTIATE 2

/**
 * Outcome of a call. The first four values match the command-line exit
 * codes.
 */
typedef enum RdmStatus {
  RDM_STATUS_OK = 0,
  RDM_STATUS_USAGE = 1,
  RDM_STATUS_DATA = 2,
  RDM_STATUS_NUMERICAL = 3,
  RDM_STATUS_NULL_POINTER = 4,
  RDM_STATUS_PANIC = 5,
} RdmStatus;

/**
 * A preprocessed encounter table split for one task.
 */
typedef struct RdmDataset RdmDataset;

/**
 * A fitted model bound to the schema it was trained with.
 */
typedef struct RdmModel RdmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rdm_version(void);

/**
 * Copy the calling thread's last error message into `buf` (always
 * NUL-terminated when `len > 0`) and return the full message length
 * excluding the terminator. Passing a null `buf` queries the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t rdm_last_error(char *buf, size_t len);

/**
 * Load an encounter table, filter and encode it, and split it for `task`
 * (one of the `RDM_TASK_*` constants) with `seed`.
 *
 * # Safety
 * `csv_path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to writable storage for one handle.
 */
enum RdmStatus rdm_dataset_load(const char *csv_path,
                                uint32_t task,
                                uint64_t seed,
                                struct RdmDataset **out);

/**
 * Number of training and test encounters in a dataset handle.
 *
 * # Safety
 * `ds` must be a live handle; `n_train` and `n_test` must be writable.
 */
enum RdmStatus rdm_dataset_counts(const struct RdmDataset *ds, size_t *n_train, size_t *n_test);

/**
 * Release a dataset handle. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle from [`rdm_dataset_load`] not yet freed.
 */
void rdm_dataset_free(struct RdmDataset *ds);

/**
 * Fit a model on the dataset's training split.
 *
 * `model` names the learner (`naive_bayes`, `bayes_net`, `random_forest`,
 * `adaboost`, `mlp`, or a short alias) and uses its default
 * hyperparameters. Alternatively it may be a JSON learner configuration
 * such as `{"model":"random_forest","n_trees":50}`.
 *
 * # Safety
 * `ds` must be a live handle, `model` a valid NUL-terminated string and
 * `out` writable.
 */
enum RdmStatus rdm_model_train(const struct RdmDataset *ds,
                               const char *model,
                               uint64_t seed,
                               struct RdmModel **out);

/**
 * Write a model to a JSON file.
 *
 * # Safety
 * `m` must be a live handle and `path` a valid NUL-terminated string.
 */
enum RdmStatus rdm_model_save(const struct RdmModel *m, const char *path);

/**
 * Read a model written by [`rdm_model_save`]. Files of another format
 * version are rejected with [`RdmStatus::Data`].
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` writable.
 */
enum RdmStatus rdm_model_load(const char *path, struct RdmModel **out);

/**
 * Release a model handle. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void rdm_model_free(struct RdmModel *m);

/**
 * Score the dataset's test split. Scores and 0/1 labels are written in
 * split order; `written` receives the number of test encounters. When
 * `capacity` is too small nothing is written to the arrays and the call
 * fails with [`RdmStatus::Usage`], so callers can size buffers from
 * `written` (or [`rdm_dataset_counts`]). A model fitted against another
 * schema fails with [`RdmStatus::Data`].
 *
 * # Safety
 * `m` and `ds` must be live handles; `scores` and `labels` must point to
 * `capacity` writable elements; `written` must be writable.
 */
enum RdmStatus rdm_model_score_test(const struct RdmModel *m,
                                    const struct RdmDataset *ds,
                                    double *scores,
                                    uint8_t *labels,
                                    size_t capacity,
                                    size_t *written);

/**
 * Area under the precision-recall curve (average precision) of `n`
 * scored instances; labels are nonzero for positives.
 *
 * # Safety
 * `scores` and `labels` must point to `n` readable elements; `out` must be
 * writable.
 */
enum RdmStatus rdm_auprc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Saved cost `tp (alpha - beta) - fp beta`, all amounts in cents.
 *
 * # Safety
 * `out` must be writable.
 */
enum RdmStatus rdm_saved_cost_cents(uint64_t tp,
                                    uint64_t fp,
                                    int64_t alpha_cents,
                                    int64_t beta_cents,
                                    int64_t *out);

/**
 * Threshold maximising saved cost over the scored instances (ties go to
 * the lower threshold), and the saving it achieves in cents.
 *
 * # Safety
 * `scores` and `labels` must point to `n` readable elements; `threshold`
 * and `saved_cents` must be writable.
 */
enum RdmStatus rdm_optimize_threshold(const double *scores,
                                      const uint8_t *labels,
                                      size_t n,
                                      int64_t alpha_cents,
                                      int64_t beta_cents,
                                      double *threshold,
                                      int64_t *saved_cents);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* READMISSION_H */
