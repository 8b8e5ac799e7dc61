#ifndef EIGENGREEDY_H
#define EIGENGREEDY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EgStatus {
  EG_STATUS_OK = 0,
  EG_STATUS_NULL_POINTER = 1,
  EG_STATUS_INVALID_UTF8 = 2,
  EG_STATUS_IO = 3,
  /**
   * Malformed file contents (magic, version, payload, manifest).
   */
  EG_STATUS_FORMAT = 4,
  /**
   * Arguments violate a precondition (dimensions, labels, k).
   */
  EG_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Degenerate data or a covariance that is not positive definite.
   */
  EG_STATUS_NUMERICAL = 6,
  /**
   * Output buffer too small; the required length is reported.
   */
  EG_STATUS_BUFFER_TOO_SMALL = 7,
  EG_STATUS_PANIC = 8,
} EgStatus;

/**
 * Search direction for [`eg_greedy_select`].
 */
typedef enum EgSelectionMode {
  EG_SELECTION_MODE_BOTTOM_UP = 0,
  EG_SELECTION_MODE_TOP_DOWN = 1,
} EgSelectionMode;

/**
 * Opaque feature store handle.
 */
typedef struct EgFeatureSet EgFeatureSet;

/**
 * Opaque fitted Gaussian model handle.
 */
typedef struct EgModel EgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *eg_last_error_message(void);

/**
 * Reads the feature store at `path` (base path without `.fvs`/`.json`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum EgStatus eg_feature_set_read(const char *path, struct EgFeatureSet **out);

/**
 * # Safety
 * `set` must come from [`eg_feature_set_read`] and not be used afterwards.
 */
void eg_feature_set_free(struct EgFeatureSet *set);

/**
 * Row count and feature dimension of `set`.
 *
 * # Safety
 * `set` must be a live handle; `n` and `d` valid for one write each.
 */
enum EgStatus eg_feature_set_dims(const struct EgFeatureSet *set, size_t *n, size_t *d);

/**
 * Fits a Gaussian model on the (all-normal) rows of `train`.
 *
 * # Safety
 * `train` must be a live handle and `out` valid for one write.
 */
enum EgStatus eg_model_fit(const struct EgFeatureSet *train, struct EgModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum EgStatus eg_model_read(const char *path, struct EgModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum EgStatus eg_model_write(const struct EgModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void eg_model_free(struct EgModel *model);

/**
 * Feature dimension of `model`, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t eg_model_dim(const struct EgModel *model);

/**
 * Ledoit-Wolf shrinkage intensity used by `model`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum EgStatus eg_model_shrinkage(const struct EgModel *model, double *out);

/**
 * Mahalanobis distance of the `len`-vector `x` (must equal the model dim).
 *
 * # Safety
 * `model` must be a live handle, `x` readable for `len` doubles and `out`
 * valid for one write.
 */
enum EgStatus eg_model_mahalanobis(const struct EgModel *model,
                                   const double *x,
                                   size_t len,
                                   double *out);

/**
 * Writes the white vector of `x` into `out` (both of length `len`).
 *
 * # Safety
 * `model` must be a live handle, `x` readable and `out` writable for
 * `len` doubles.
 */
enum EgStatus eg_model_whiten(const struct EgModel *model,
                              const double *x,
                              size_t len,
                              double *out);

/**
 * AUROC of `scores` against 0/1 `labels` (1 = anomalous), ties counted half.
 *
 * # Safety
 * `scores` and `labels` must be readable for `n` elements and `out` valid
 * for one write.
 */
enum EgStatus eg_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Greedy eigencomponent search over row-major `n×d` white vectors.
 *
 * Bottom-up adds components until `k` are selected; top-down removes them
 * until `k` remain. Each step's component and greedy AUROC are written to
 * `components` / `aurocs` (capacity `capacity` each) and the step count to
 * `steps`. With too small a buffer, `steps` receives the required length and
 * [`EgStatus::BufferTooSmall`] is returned.
 *
 * # Safety
 * `white` must be readable for `n*d` doubles and `labels` for `n` bytes;
 * `components` and `aurocs` writable for `capacity` elements; `steps` valid
 * for one write.
 */
enum EgStatus eg_greedy_select(const double *white,
                               const uint8_t *labels,
                               size_t n,
                               size_t d,
                               size_t k,
                               enum EgSelectionMode mode,
                               size_t *components,
                               double *aurocs,
                               size_t capacity,
                               size_t *steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EIGENGREEDY_H */
