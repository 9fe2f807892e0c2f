#ifndef NILM_FUSION_H
#define NILM_FUSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NilmStatus {
  NILM_STATUS_OK = 0,
  NILM_STATUS_INVALID_ARGUMENT = 1,
  NILM_STATUS_UNSUPPORTED = 2,
  NILM_STATUS_INVALID_STATE = 3,
  NILM_STATUS_NUMERIC = 4,
  NILM_STATUS_CONFIG = 5,
  NILM_STATUS_DATA = 6,
  NILM_STATUS_IO = 7,
  NILM_STATUS_NULL_POINTER = 8,
  NILM_STATUS_PANIC = 9,
} NilmStatus;

/**
 * Trained classifier with its best-validation weights (opaque).
 */
typedef struct NilmClassifier NilmClassifier;

/**
 * Fitted feature transform (opaque).
 */
typedef struct NilmTransform NilmTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *nilm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nilm_version(void);

/**
 * Loads a `transform.json` written by `nilm-fusion train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NilmStatus nilm_transform_load(const char *path, struct NilmTransform **out);

/**
 * Samples per input window, or 0 for a NULL handle.
 *
 * # Safety
 * `t` must be NULL or a live handle from [`nilm_transform_load`].
 */
size_t nilm_transform_input_len(const struct NilmTransform *t);

/**
 * Features per output row, or 0 for a NULL handle.
 *
 * # Safety
 * `t` must be NULL or a live handle from [`nilm_transform_load`].
 */
size_t nilm_transform_output_dim(const struct NilmTransform *t);

/**
 * Maps `n_rows` windows of `row_len` samples (current and voltage, both
 * row-major) to features written into `out` (`n_rows * output_dim` values).
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes; `t` must be live.
 */
enum NilmStatus nilm_transform_apply(const struct NilmTransform *t,
                                     const double *currents,
                                     const double *voltages,
                                     size_t n_rows,
                                     size_t row_len,
                                     double *out,
                                     size_t out_len);

/**
 * # Safety
 * `t` must be NULL or a handle from [`nilm_transform_load`] not yet freed.
 */
void nilm_transform_free(struct NilmTransform *t);

/**
 * Loads a `checkpoint.bin` and keeps its best-validation weights.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NilmStatus nilm_classifier_load(const char *path, struct NilmClassifier **out);

/**
 * # Safety
 * `c` must be NULL or a live handle from [`nilm_classifier_load`].
 */
size_t nilm_classifier_input_dim(const struct NilmClassifier *c);

/**
 * # Safety
 * `c` must be NULL or a live handle from [`nilm_classifier_load`].
 */
size_t nilm_classifier_n_classes(const struct NilmClassifier *c);

/**
 * # Safety
 * `c` must be NULL or a live handle from [`nilm_classifier_load`].
 */
size_t nilm_classifier_param_count(const struct NilmClassifier *c);

/**
 * Eval-mode prediction. Writes `n_rows * n_classes` sigmoid probabilities
 * to `probs` and 0/1 labels to `labels`; either output may be NULL to skip it.
 *
 * # Safety
 * `features` must hold `n_rows * n_features` values and non-NULL outputs
 * `n_rows * n_classes` elements; `c` must be live.
 */
enum NilmStatus nilm_classifier_predict(const struct NilmClassifier *c,
                                        const double *features,
                                        size_t n_rows,
                                        size_t n_features,
                                        double *probs,
                                        uint8_t *labels);

/**
 * # Safety
 * `c` must be NULL or a handle from [`nilm_classifier_load`] not yet freed.
 */
void nilm_classifier_free(struct NilmClassifier *c);

/**
 * Sample-averaged F1 of two row-major 0/1 matrices.
 *
 * # Safety
 * `pred` and `truth` must hold `n_rows * n_cols` bytes; `out` must be valid.
 */
enum NilmStatus nilm_f1_mean(const uint8_t *pred,
                             const uint8_t *truth,
                             size_t n_rows,
                             size_t n_cols,
                             double *out);

/**
 * Splits `current` into active and non-active parts relative to `voltage`.
 * `active` and `non_active` receive `len` values; the scalar outputs may be NULL.
 *
 * # Safety
 * All non-NULL pointers must reference buffers of `len` elements (one
 * element for the scalar outputs).
 */
enum NilmStatus nilm_fryze_decompose(const double *voltage,
                                     const double *current,
                                     size_t len,
                                     double *active,
                                     double *non_active,
                                     double *active_power,
                                     double *v_rms);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NILM_FUSION_H */
