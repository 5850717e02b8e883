#ifndef METER_H
#define METER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MeterActivation {
  METER_ACTIVATION_RELU = 0,
  METER_ACTIVATION_SILU = 1,
} MeterActivation;

typedef enum MeterStatus {
  METER_STATUS_OK = 0,
  METER_STATUS_NULL_POINTER = 1,
  METER_STATUS_INVALID_ARGUMENT = 2,
  METER_STATUS_DIMENSION = 3,
  METER_STATUS_CONFIG = 4,
  METER_STATUS_IO = 5,
  METER_STATUS_CHECKSUM = 6,
  METER_STATUS_MISSING_TENSOR = 7,
  METER_STATUS_UNEXPECTED_TENSOR = 8,
  METER_STATUS_VARIANT_MISMATCH = 9,
  METER_STATUS_ACTIVATION_MISMATCH = 10,
  METER_STATUS_UNSUPPORTED_VERSION = 11,
  METER_STATUS_MALFORMED = 12,
  METER_STATUS_DECODE = 13,
  METER_STATUS_BUFFER_TOO_SMALL = 14,
  METER_STATUS_PANIC = 15,
} MeterStatus;

typedef enum MeterVariant {
  METER_VARIANT_S = 0,
  METER_VARIANT_XS = 1,
  METER_VARIANT_XXS = 2,
} MeterVariant;

/**
 * Opaque model handle.
 */
typedef struct MeterModel MeterModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *meter_version(void);

/**
 * Length in bytes, without the terminator, of the last error on this thread;
 * 0 if the last call succeeded.
 */
size_t meter_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the number of bytes written, excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t meter_last_error(char *buf, size_t len);

/**
 * Builds a model with seeded random weights for a 256x192 indoor setup.
 * `variant` and `activation` take [`MeterVariant`] and [`MeterActivation`]
 * codes.
 *
 * # Safety
 * `out` must point to writable storage for one handle pointer.
 */
enum MeterStatus meter_model_build(uint32_t variant,
                                   uint32_t activation,
                                   uint64_t seed,
                                   struct MeterModel **out);

/**
 * Loads a weight archive, requiring the given variant and activation.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable
 * storage for one handle pointer.
 */
enum MeterStatus meter_model_load(const char *path,
                                  uint32_t variant,
                                  uint32_t activation,
                                  struct MeterModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum MeterStatus meter_model_save(const struct MeterModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void meter_model_free(struct MeterModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MeterStatus meter_model_param_count(const struct MeterModel *model, uint64_t *out);

/**
 * Multiply-accumulates of one forward pass at `width` x `height`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MeterStatus meter_model_mac_count(const struct MeterModel *model,
                                       size_t width,
                                       size_t height,
                                       uint64_t *out);

/**
 * Depth map extent for an input of `width` x `height`.
 *
 * # Safety
 * `out_width` and `out_height` must be writable.
 */
enum MeterStatus meter_output_size(size_t width,
                                   size_t height,
                                   size_t *out_width,
                                   size_t *out_height);

/**
 * Predicts depth in meters for one planar RGB image.
 *
 * `rgb` holds `3 * width * height` values in [0, 1], channel-major
 * (all red, then green, then blue). `depth` receives
 * `(width / 2) * (height / 2)` values, row-major.
 *
 * # Safety
 * `model` must be a live handle, `rgb` must point to `3 * width * height`
 * readable floats and `depth` to `depth_len` writable floats.
 */
enum MeterStatus meter_model_infer(const struct MeterModel *model,
                                   const float *rgb,
                                   size_t width,
                                   size_t height,
                                   float *depth,
                                   size_t depth_len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* METER_H */
