#ifndef UMMASO_H
#define UMMASO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2-4 match the command-line exit codes.
 */
typedef enum UmmasoStatus {
  UMMASO_STATUS_OK = 0,
  UMMASO_STATUS_NULL_POINTER = 1,
  UMMASO_STATUS_INVALID_ARGUMENT = 2,
  UMMASO_STATUS_IO = 3,
  UMMASO_STATUS_NUMERICAL = 4,
  UMMASO_STATUS_PANIC = 5,
} UmmasoStatus;

/**
 * A fitted pipeline.
 */
typedef struct UmmasoArtifacts UmmasoArtifacts;

/**
 * Loaded or generated tabular data.
 */
typedef struct UmmasoDataset UmmasoDataset;

/**
 * Headline metrics of a fitted pipeline or a prediction set.
 */
typedef struct UmmasoMetrics {
  double accuracy;
  double precision_macro;
  double recall_macro;
  double kappa;
} UmmasoMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ummaso_version(void);

/**
 * Message for the most recent failure on this thread ("" after success).
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *ummaso_last_error(void);

/**
 * Reads a CSV with numeric feature columns and an integer label column.
 *
 * # Safety
 * `path` and `label_column` must be NUL-terminated strings; `out` must be writable.
 */
enum UmmasoStatus ummaso_dataset_load_csv(const char *path,
                                          const char *label_column,
                                          struct UmmasoDataset **out);

/**
 * Synthetic soil-nutrient data (columns N, P, K, pH, EC) with 2 or 3 classes.
 *
 * # Safety
 * `per_class` must point to `n_classes` counts; `out` must be writable.
 */
enum UmmasoStatus ummaso_dataset_generate(const size_t *per_class,
                                          size_t n_classes,
                                          uint64_t seed,
                                          struct UmmasoDataset **out);

/**
 * Builds a dataset from a row-major `n_rows × n_cols` feature matrix and
 * `n_rows` labels. Features are named `x0, x1, ...`.
 *
 * # Safety
 * `features` must hold `n_rows * n_cols` values and `labels` `n_rows` values.
 */
enum UmmasoStatus ummaso_dataset_from_arrays(const double *features,
                                             size_t n_rows,
                                             size_t n_cols,
                                             const size_t *labels,
                                             struct UmmasoDataset **out);

/**
 * Row, feature-column and class counts of a dataset.
 *
 * # Safety
 * `data` must be a live handle; each non-null output pointer must be writable.
 */
enum UmmasoStatus ummaso_dataset_shape(const struct UmmasoDataset *data,
                                       size_t *n_rows,
                                       size_t *n_cols,
                                       size_t *n_classes);

/**
 * Writes the dataset as CSV with the label in the last column.
 *
 * # Safety
 * `data` must be a live handle; strings must be NUL-terminated.
 */
enum UmmasoStatus ummaso_dataset_write_csv(const struct UmmasoDataset *data,
                                           const char *path,
                                           const char *label_column);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void ummaso_dataset_free(struct UmmasoDataset *data);

/**
 * Runs the full pipeline. `config_json` may be null for defaults; unknown
 * keys are rejected.
 *
 * # Safety
 * `data` must be a live handle; `config_json` null or NUL-terminated; `out` writable.
 */
enum UmmasoStatus ummaso_pipeline_fit(const struct UmmasoDataset *data,
                                      const char *config_json,
                                      struct UmmasoArtifacts **out);

/**
 * Writes an artifacts directory.
 *
 * # Safety
 * `artifacts` must be a live handle; `dir` NUL-terminated.
 */
enum UmmasoStatus ummaso_artifacts_save(const struct UmmasoArtifacts *artifacts, const char *dir);

/**
 * Reads an artifacts directory written by `fit` or [`ummaso_artifacts_save`].
 *
 * # Safety
 * `dir` must be NUL-terminated; `out` writable.
 */
enum UmmasoStatus ummaso_artifacts_load(const char *dir, struct UmmasoArtifacts **out);

/**
 * Raw feature width expected by [`ummaso_artifacts_predict`] and the class count.
 *
 * # Safety
 * `artifacts` must be a live handle; non-null outputs must be writable.
 */
enum UmmasoStatus ummaso_artifacts_shape(const struct UmmasoArtifacts *artifacts,
                                         size_t *n_features,
                                         size_t *n_classes);

/**
 * Predicts raw feature rows (training column order). `probs` receives
 * `n_rows × n_classes` values row-major; `labels` receives `n_rows` labels.
 * Either output may be null.
 *
 * # Safety
 * `features` must hold `n_rows * n_cols` values; outputs must be large enough.
 */
enum UmmasoStatus ummaso_artifacts_predict(const struct UmmasoArtifacts *artifacts,
                                           const double *features,
                                           size_t n_rows,
                                           size_t n_cols,
                                           double *probs,
                                           size_t *labels);

/**
 * Held-out metrics recorded when the pipeline was fitted.
 *
 * # Safety
 * `artifacts` must be a live handle; `out` writable.
 */
enum UmmasoStatus ummaso_artifacts_metrics(const struct UmmasoArtifacts *artifacts,
                                           struct UmmasoMetrics *out);

/**
 * Releases fitted artifacts. Null is ignored.
 *
 * # Safety
 * `artifacts` must be null or a handle not yet freed.
 */
void ummaso_artifacts_free(struct UmmasoArtifacts *artifacts);

/**
 * Accuracy, macro precision/recall and Cohen's kappa for label vectors.
 *
 * # Safety
 * `truth` and `pred` must each hold `n` labels; `out` writable.
 */
enum UmmasoStatus ummaso_metrics_compute(const size_t *truth,
                                         const size_t *pred,
                                         size_t n,
                                         size_t n_classes,
                                         struct UmmasoMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UMMASO_H */
