#ifndef TABMIA_H
#define TABMIA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum TabmiaStatus {
  TABMIA_STATUS_OK = 0,
  TABMIA_STATUS_NULL_POINTER = 1,
  TABMIA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or inconsistent input data.
   */
  TABMIA_STATUS_DATA = 3,
  /**
   * Any other failure, including a caught panic.
   */
  TABMIA_STATUS_INTERNAL = 4,
} TabmiaStatus;

typedef enum TabmiaEnsembleKind {
  TABMIA_ENSEMBLE_KIND_MEAN = 0,
  /**
   * Uniform weights.
   */
  TABMIA_ENSEMBLE_KIND_WEIGHTED_MEAN = 1,
  TABMIA_ENSEMBLE_KIND_MAJORITY_VOTE = 2,
} TabmiaEnsembleKind;

typedef enum TabmiaNormalization {
  TABMIA_NORMALIZATION_NONE = 0,
  TABMIA_NORMALIZATION_MINMAX = 1,
  TABMIA_NORMALIZATION_RANK = 2,
} TabmiaNormalization;

/**
 * Opaque benchmark report.
 */
typedef struct TabmiaReport TabmiaReport;

/**
 * Opaque attack × record score matrix.
 */
typedef struct TabmiaScoreMatrix TabmiaScoreMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread; do not free.
 */
const char *tabmia_last_error(void);

/**
 * Library version as a static string.
 */
const char *tabmia_version(void);

/**
 * Area under the ROC curve of `n` scores with 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` must point to `n` readable elements; `out` must be writable.
 */
enum TabmiaStatus tabmia_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Highest true-positive rate at false-positive rate ≤ `alpha`.
 *
 * # Safety
 * As for [`tabmia_auc`].
 */
enum TabmiaStatus tabmia_tpr_at_fpr(const double *scores,
                                    const uint8_t *labels,
                                    size_t n,
                                    double alpha,
                                    double *out);

/**
 * Build a score matrix from `n_attacks` row-major rows of `n_records` scores.
 * `ids` holds one NUL-terminated attack id per row.
 *
 * # Safety
 * `data` must hold `n_attacks * n_records` values, `ids` `n_attacks` valid
 * C strings, and `out` must be writable.
 */
enum TabmiaStatus tabmia_score_matrix_new(const double *data,
                                          size_t n_attacks,
                                          size_t n_records,
                                          const char *const *ids,
                                          struct TabmiaScoreMatrix **out);

/**
 * # Safety
 * `matrix` must come from [`tabmia_score_matrix_new`] and not be used afterwards.
 */
void tabmia_score_matrix_free(struct TabmiaScoreMatrix *matrix);

/**
 * Combine the matrix into one score per record, written to `out`
 * (`n_records` slots; `out_len` must equal the record count).
 *
 * # Safety
 * `matrix` must be a live handle and `out` must have room for `out_len` values.
 */
enum TabmiaStatus tabmia_ensemble(const struct TabmiaScoreMatrix *matrix,
                                  enum TabmiaEnsembleKind kind,
                                  enum TabmiaNormalization normalization,
                                  double *out,
                                  size_t out_len);

/**
 * Run a benchmark from a JSON config string.
 *
 * # Safety
 * `config_json` must be a valid C string and `out` writable.
 */
enum TabmiaStatus tabmia_benchmark_run(const char *config_json, struct TabmiaReport **out);

/**
 * Serialize a report as pretty JSON; free the result with [`tabmia_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum TabmiaStatus tabmia_report_json(const struct TabmiaReport *report, char **out);

/**
 * Mean rank of `strategy` under `metric` (e.g. `"AUC"`, `"TPR@0.1"`).
 *
 * # Safety
 * `report` must be a live handle, the strings valid, and `out` writable.
 */
enum TabmiaStatus tabmia_report_mean_rank(const struct TabmiaReport *report,
                                          const char *metric,
                                          const char *strategy,
                                          double *out);

/**
 * Number of successfully evaluated states in a report.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum TabmiaStatus tabmia_report_state_count(const struct TabmiaReport *report, size_t *out);

/**
 * # Safety
 * `report` must come from [`tabmia_benchmark_run`] and not be used afterwards.
 */
void tabmia_report_free(struct TabmiaReport *report);

/**
 * # Safety
 * `s` must be a string returned by this library, or null.
 */
void tabmia_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TABMIA_H */
