#ifndef TPNET_H
#define TPNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum TpnetStatus {
  TPNET_STATUS_OK = 0,
  TPNET_STATUS_NULL_POINTER = 1,
  TPNET_STATUS_INVALID_ARGUMENT = 2,
  TPNET_STATUS_SHAPE_MISMATCH = 3,
  TPNET_STATUS_INVALID_SPEC = 4,
  TPNET_STATUS_CHECKPOINT = 5,
  TPNET_STATUS_IO = 6,
  TPNET_STATUS_BUFFER_TOO_SMALL = 7,
  TPNET_STATUS_PANIC = 8,
  TPNET_STATUS_OTHER = 9,
} TpnetStatus;

typedef enum TpnetTransform {
  TPNET_TRANSFORM_DCT = 0,
  TPNET_TRANSFORM_HT = 1,
  TPNET_TRANSFORM_BWT = 2,
} TpnetTransform;

typedef enum TpnetConvention {
  TPNET_CONVENTION_MATRIX_PRODUCT = 0,
  TPNET_CONVENTION_FAST_TRANSFORM = 1,
  TPNET_CONVENTION_HT_FREE = 2,
} TpnetConvention;

/**
 * Opaque model handle.
 */
typedef struct TpnetModel TpnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *tpnet_last_error(void);

/**
 * 2-D transform of one `h x w` row-major plane. `output` holds `h * w`
 * values and may alias `input`.
 *
 * # Safety
 * `input` and `output` must point to `h * w` doubles.
 */
enum TpnetStatus tpnet_transform2d(enum TpnetTransform kind,
                                   bool inverse,
                                   const double *input,
                                   size_t h,
                                   size_t w,
                                   double *output);

/**
 * Parameter and MAC totals for a variant string such as `"3c-dct"`.
 *
 * # Safety
 * `variant` must be a NUL-terminated string; the outputs must be valid.
 */
enum TpnetStatus tpnet_count(const char *variant,
                             enum TpnetConvention convention,
                             uint64_t *params,
                             uint64_t *macs);

/**
 * Builds a freshly initialized model.
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TpnetStatus tpnet_model_new(const char *variant, uint64_t seed, struct TpnetModel **out);

/**
 * Loads a single-precision checkpoint written by `tpnet train` or
 * [`tpnet_model_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TpnetStatus tpnet_model_load(const char *path, struct TpnetModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum TpnetStatus tpnet_model_save(const struct TpnetModel *model, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void tpnet_model_free(struct TpnetModel *model);

/**
 * Number of trainable scalars.
 *
 * # Safety
 * `model` must come from this library and `out` be valid.
 */
enum TpnetStatus tpnet_model_num_params(const struct TpnetModel *model, uint64_t *out);

/**
 * Side length of the square input images the model expects.
 *
 * # Safety
 * `model` must come from this library and `out` be valid.
 */
enum TpnetStatus tpnet_model_input_size(const struct TpnetModel *model, size_t *out);

/**
 * Eval-mode logits. `input` is `batch x 3 x S x S` normalized floats;
 * `logits` receives `batch x 10` values and must hold `logits_len` of them.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum TpnetStatus tpnet_model_forward(const struct TpnetModel *model,
                                     const float *input,
                                     size_t batch,
                                     float *logits,
                                     size_t logits_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TPNET_H */
