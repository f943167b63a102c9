#ifndef KGM_H
#define KGM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes. The nonzero values 2-4 match the `kgm` exit codes.
 */
typedef enum KgmStatus {
  KGM_STATUS_OK = 0,
  KGM_STATUS_NULL_POINTER = 1,
  KGM_STATUS_VALIDATION = 2,
  KGM_STATUS_DATA = 3,
  KGM_STATUS_NUMERICAL = 4,
  KGM_STATUS_BUFFER_TOO_SMALL = 5,
  KGM_STATUS_PANIC = 6,
} KgmStatus;

typedef enum KgmMethod {
  KGM_METHOD_K1 = 0,
  KGM_METHOD_K2 = 1,
  KGM_METHOD_P1 = 2,
  KGM_METHOD_P2 = 3,
  KGM_METHOD_S = 4,
  KGM_METHOD_BURG = 5,
} KgmMethod;

typedef enum KgmGrouping {
  KGM_GROUPING_MODULES = 0,
  KGM_GROUPING_NODES = 1,
} KgmGrouping;

/*
 Sample covariance lags.
 */
typedef struct KgmLags KgmLags;

/*
 An estimate together with the data and settings that produced it.
 */
typedef struct KgmResult KgmResult;

/*
 Estimator settings. Obtain defaults from [`kgm_estimate_options_default`].
 */
typedef struct KgmEstimateOptions {
  double eps;
  double outer_tol;
  size_t max_outer;
  size_t grid_points;
} KgmEstimateOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *kgm_last_error_message(void);

/*
 Library version as a static nul-terminated string.
 */
const char *kgm_version(void);

struct KgmEstimateOptions kgm_estimate_options_default(void);

/*
 Lags R̂_0..R̂_order of a row-major `nobs × channels` series.

 # Safety
 `data` must point to `nobs * channels` readable doubles and `out` to a
 writable handle slot.
 */
enum KgmStatus kgm_lags_from_series(const double *data,
                                    size_t nobs,
                                    size_t channels,
                                    size_t order,
                                    struct KgmLags **out);

/*
 # Safety
 `lags` must be null or a handle from this library not yet freed.
 */
void kgm_lags_free(struct KgmLags *lags);

/*
 Runs an estimator on the lags. A null `options` uses the defaults.

 # Safety
 Handles must be live; `options` null or readable; `out` writable.
 */
enum KgmStatus kgm_estimate(const struct KgmLags *lags,
                            enum KgmMethod method,
                            size_t m1,
                            size_t m2,
                            const struct KgmEstimateOptions *options,
                            struct KgmResult **out);

/*
 # Safety
 `result` must be null or a handle from this library not yet freed.
 */
void kgm_result_free(struct KgmResult *result);

/*
 Channel count m = m1·m2, or 0 for a null handle.

 # Safety
 `result` must be null or live.
 */
size_t kgm_result_dim(const struct KgmResult *result);

/*
 AR order n, or 0 for a null handle.

 # Safety
 `result` must be null or live.
 */
size_t kgm_result_order(const struct KgmResult *result);

/*
 Fraction of tuples where the raw support differs from Ê1 ⊗ Ê2, or NaN for a
 null handle.

 # Safety
 `result` must be null or live.
 */
double kgm_result_defect(const struct KgmResult *result);

/*
 # Safety
 `result` must be null or live.
 */
size_t kgm_result_outer_iterations(const struct KgmResult *result);

/*
 Copies S_0..S_n as (n+1) row-major m×m blocks into `buf`.

 # Safety
 `buf` must hold `len` writable doubles.
 */
enum KgmStatus kgm_result_coefficients(const struct KgmResult *result, double *buf, size_t len);

/*
 Copies Ê1 (m1×m1) and Ê2 (m2×m2) row-major as 0/1 bytes.

 # Safety
 `e1` must hold `len1` and `e2` `len2` writable bytes.
 */
enum KgmStatus kgm_result_supports(const struct KgmResult *result,
                                   uint8_t *e1,
                                   size_t len1,
                                   uint8_t *e2,
                                   size_t len2);

/*
 Serializes the result in the `result.json` format. Release the string
 with [`kgm_string_free`].

 # Safety
 `result` must be live and `out` writable.
 */
enum KgmStatus kgm_result_to_json(const struct KgmResult *result, char **out);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void kgm_string_free(char *s);

/*
 Residual cross-spectrum norm for the pair (a, b) on a `grid_points` grid,
 written to `buf` (one value per grid angle θ_g = −π + 2πg/G).

 # Safety
 `result` must be live and `buf` hold `len` writable doubles.
 */
enum KgmStatus kgm_edge_residual_spectrum(const struct KgmResult *result,
                                          enum KgmGrouping grouping,
                                          size_t a,
                                          size_t b,
                                          size_t grid_points,
                                          double *buf,
                                          size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGM_H */
