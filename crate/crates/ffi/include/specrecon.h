#ifndef SPECRECON_H
#define SPECRECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_ARGUMENT = 2,
  SR_STATUS_SIZE_MISMATCH = 3,
  SR_STATUS_POLE_HIT = 4,
  SR_STATUS_NO_CONVERGENCE = 5,
  SR_STATUS_INTERLACING_VIOLATION = 6,
  SR_STATUS_BUFFER_TOO_SMALL = 7,
  SR_STATUS_NUMERIC = 8,
  SR_STATUS_PANIC = 99,
} SrStatus;

/**
 * Opaque spectrum handle, values stored descending.
 */
typedef struct SrSpectrum SrSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` writes.
 */
size_t sr_last_error_message(char *buf, size_t cap);

/**
 * Static name of a status code.
 */
const char *sr_status_name(enum SrStatus status);

/**
 * Builds a spectrum from `len` values in any order. Tiny negative values
 * from rounding are clamped to zero; larger ones are rejected.
 *
 * # Safety
 * `values` must be valid for `len` reads and `out` for one write.
 */
enum SrStatus sr_spectrum_new(const double *values, size_t len, struct SrSpectrum **out);

/**
 * Number of values; 0 for a null handle.
 *
 * # Safety
 * `spec` must be null or a live handle.
 */
size_t sr_spectrum_len(const struct SrSpectrum *spec);

/**
 * Copies the values, descending, into `out`.
 *
 * # Safety
 * `spec` must be a live handle and `out` valid for `cap` writes.
 */
enum SrStatus sr_spectrum_values(const struct SrSpectrum *spec, double *out, size_t cap);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `spec` must be null or a handle not yet freed.
 */
void sr_spectrum_free(struct SrSpectrum *spec);

/**
 * Eigenvalues of the arrowhead matrix `[[diag(nu), e], [e^T, e_diag]]`,
 * where `e_off[s]` pairs with the `s`-th largest value of `nu`.
 *
 * # Safety
 * `nu` must be a live handle, `e_off` valid for `len` reads and `out` for
 * one write.
 */
enum SrStatus sr_secular_solve(const struct SrSpectrum *nu,
                               double e_diag,
                               const double *e_off,
                               size_t len,
                               struct SrSpectrum **out);

/**
 * Writes 1 to `out` when `restricted` interlaces `full`, else 0.
 *
 * # Safety
 * Both handles must be live and `out` valid for one write.
 */
enum SrStatus sr_interlacing_check(const struct SrSpectrum *full,
                                   const struct SrSpectrum *restricted,
                                   int32_t *out);

/**
 * Population estimates for every index of `sample` at aspect ratio `c`
 * with exclusion half-width `k`. `valid[i]` is 0 where the estimator broke
 * down and the raw value was returned. Both buffers need `cap >= len`.
 *
 * # Safety
 * `sample` must be a live handle; `estimates` and `valid` valid for `cap`
 * writes (`valid` may be null).
 */
enum SrStatus sr_invert_spectrum(const struct SrSpectrum *sample,
                                 double c,
                                 size_t k,
                                 double *estimates,
                                 uint8_t *valid,
                                 size_t cap);

/**
 * Marchenko–Pastur density at `x` for aspect ratio `c = n / p`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SrStatus sr_mp_density(double x, double c, double *out);

/**
 * Marchenko–Pastur distribution function, point mass included.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SrStatus sr_mp_cdf(double x, double c, double *out);

/**
 * Limiting Stieltjes transform `m` at `x + i eta` for a population measure
 * with `len` atoms and weights (normalized internally), plus the density
 * `Im m / pi`. Any of the outputs may be null.
 *
 * # Safety
 * `atoms` and `weights` must be valid for `len` reads.
 */
enum SrStatus sr_stieltjes_fixed_point(const double *atoms,
                                       const double *weights,
                                       size_t len,
                                       double c,
                                       double x,
                                       double eta,
                                       double *m_re,
                                       double *m_im,
                                       double *density);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECRECON_H */
