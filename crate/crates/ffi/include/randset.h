#ifndef RANDSET_H
#define RANDSET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible function.
 */
typedef enum RandsetStatus {
  RANDSET_STATUS_OK = 0,
  RANDSET_STATUS_NULL_POINTER = 1,
  RANDSET_STATUS_INVALID_ARGUMENT = 2,
  RANDSET_STATUS_PARSE = 3,
  RANDSET_STATUS_IO = 4,
  RANDSET_STATUS_NO_COMPONENTS = 5,
  RANDSET_STATUS_RADIUS_MISMATCH = 6,
  RANDSET_STATUS_NEGATIVE_DISTANCE = 7,
  RANDSET_STATUS_FORMAT = 8,
  RANDSET_STATUS_PANIC = 9,
} RandsetStatus;

/**
 * Smoothing kernel of the kNN posterior.
 */
typedef enum RandsetKernel {
  RANDSET_KERNEL_UNIFORM = 0,
  RANDSET_KERNEL_EPANECHNIKOV = 1,
} RandsetKernel;

/**
 * Per-component features of one realisation.
 */
typedef struct RandsetFeatures RandsetFeatures;

/**
 * Symmetric distance matrix.
 */
typedef struct RandsetMatrix RandsetMatrix;

/**
 * Binary image.
 */
typedef struct RandsetRaster RandsetRaster;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *randset_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *randset_version(void);

/**
 * Parses a PBM file (P1 or P4) held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum RandsetStatus randset_raster_from_pbm(const uint8_t *data,
                                           size_t len,
                                           struct RandsetRaster **out_raster);

/**
 * Builds a raster from `width * height` row-major bytes, nonzero meaning
 * foreground.
 *
 * # Safety
 * `bits` must point to `width * height` readable bytes.
 */
enum RandsetStatus randset_raster_from_bits(size_t width,
                                            size_t height,
                                            const uint8_t *bits,
                                            struct RandsetRaster **out_raster);

/**
 * Simulates one realisation of the model given as a JSON spec.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string.
 */
enum RandsetStatus randset_raster_simulate(const char *spec_json,
                                           uint64_t seed,
                                           struct RandsetRaster **out_raster);

/**
 * # Safety
 * `raster` must be a live handle or null; `width`/`height` writable or null.
 */
enum RandsetStatus randset_raster_size(const struct RandsetRaster *raster,
                                       size_t *width,
                                       size_t *height);

/**
 * # Safety
 * `raster` must be a live handle; `count` writable.
 */
enum RandsetStatus randset_raster_foreground_count(const struct RandsetRaster *raster,
                                                   size_t *count);

/**
 * Encodes a raster as PBM. The buffer is released with
 * [`randset_bytes_free`].
 *
 * # Safety
 * `raster` must be a live handle; `out_data` and `out_len` writable.
 */
enum RandsetStatus randset_raster_to_pbm(const struct RandsetRaster *raster,
                                         bool plain,
                                         uint8_t **out_data,
                                         size_t *out_len);

/**
 * Releases a buffer from [`randset_raster_to_pbm`].
 *
 * # Safety
 * `data` and `len` must come from one call to `randset_raster_to_pbm`.
 */
void randset_bytes_free(uint8_t *data, size_t len);

/**
 * # Safety
 * `raster` must be a handle from this library or null.
 */
void randset_raster_free(struct RandsetRaster *raster);

/**
 * Extracts component features with disc radius `r`. `label` may be null.
 *
 * # Safety
 * `raster` must be a live handle; `id` NUL-terminated; `label` NUL-terminated or null.
 */
enum RandsetStatus randset_features_extract(const struct RandsetRaster *raster,
                                            uint32_t r,
                                            const char *id,
                                            const char *label,
                                            struct RandsetFeatures **out_features);

/**
 * # Safety
 * `features` must be a live handle; `count` writable.
 */
enum RandsetStatus randset_features_count(const struct RandsetFeatures *features, size_t *count);

/**
 * Reads component `index`: its P/A ratio and its C-function. `t` receives
 * up to `t_capacity` values; `t_len` receives the full length.
 *
 * # Safety
 * `features` must be a live handle; `t` must hold `t_capacity` doubles.
 */
enum RandsetStatus randset_features_component(const struct RandsetFeatures *features,
                                              size_t index,
                                              double *pa_ratio,
                                              double *t,
                                              size_t t_capacity,
                                              size_t *t_len);

/**
 * # Safety
 * `features` must be a handle from this library or null.
 */
void randset_features_free(struct RandsetFeatures *features);

/**
 * Pairwise N-distance matrix of `n` realisations. `mode` is `ratio`,
 * `curvature`, `both` or `combined:<alpha>`; `count` 0 means all
 * components.
 *
 * # Safety
 * `items` must hold `n` live feature handles; `mode` NUL-terminated.
 */
enum RandsetStatus randset_matrix_compute(const struct RandsetFeatures *const *items,
                                          size_t n,
                                          const char *mode,
                                          size_t depth,
                                          size_t count,
                                          uint64_t seed,
                                          struct RandsetMatrix **out_matrix);

/**
 * Builds a matrix from `n * n` row-major values (symmetric, zero diagonal).
 *
 * # Safety
 * `values` must hold `n * n` doubles.
 */
enum RandsetStatus randset_matrix_from_values(size_t n,
                                              const double *values,
                                              struct RandsetMatrix **out_matrix);

/**
 * # Safety
 * `matrix` must be a live handle; `n` writable.
 */
enum RandsetStatus randset_matrix_size(const struct RandsetMatrix *matrix, size_t *n);

/**
 * # Safety
 * `matrix` must be a live handle; `value` writable.
 */
enum RandsetStatus randset_matrix_get(const struct RandsetMatrix *matrix,
                                      size_t i,
                                      size_t j,
                                      double *value);

/**
 * # Safety
 * `matrix` must be a handle from this library or null.
 */
void randset_matrix_free(struct RandsetMatrix *matrix);

/**
 * k-medoids clustering; writes one cluster index per realisation.
 *
 * # Safety
 * `matrix` must be a live handle; `assignment` must hold `n` entries.
 */
enum RandsetStatus randset_kmedoids(const struct RandsetMatrix *matrix,
                                    size_t k,
                                    uint64_t seed,
                                    size_t max_iter,
                                    size_t *assignment);

/**
 * Ward clustering cut at `k` clusters; writes one cluster index per
 * realisation.
 *
 * # Safety
 * `matrix` must be a live handle; `assignment` must hold `n` entries.
 */
enum RandsetStatus randset_ward(const struct RandsetMatrix *matrix,
                                size_t k,
                                bool paper_literal_first_merge,
                                size_t *assignment);

/**
 * Kernel-posterior kNN: classifies the rows `test` from the labelled rows
 * `train`. Labels are `0..k`.
 *
 * # Safety
 * `train`/`train_labels` must hold `n_train` entries, `test` and
 * `predicted` `n_test` entries.
 */
enum RandsetStatus randset_knn(const struct RandsetMatrix *matrix,
                               const size_t *train,
                               const size_t *train_labels,
                               size_t n_train,
                               const size_t *test,
                               size_t n_test,
                               enum RandsetKernel kernel,
                               size_t *predicted);

/**
 * Empirical N-distance of two samples of reals under `|x - y|`.
 *
 * # Safety
 * `xs` must hold `nx` doubles and `ys` `ny` doubles.
 */
enum RandsetStatus randset_n_distance_scalar(const double *xs,
                                             size_t nx,
                                             const double *ys,
                                             size_t ny,
                                             double *value);

/**
 * Depth-`depth` functional kernel of two vectors of length `n`.
 *
 * # Safety
 * `f` and `g` must hold `n` doubles.
 */
enum RandsetStatus randset_kernel_functional(const double *f,
                                             const double *g,
                                             size_t n,
                                             size_t depth,
                                             double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANDSET_H */
