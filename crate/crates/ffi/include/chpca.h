#ifndef CHPCA_H
#define CHPCA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum ChpcaStatus {
  CHPCA_STATUS_OK = 0,
  CHPCA_STATUS_NULL_POINTER = 1,
  /*
   Bad option value (sample count, multiplier, detrend method, ...).
   */
  CHPCA_STATUS_INVALID_ARGUMENT = 2,
  /*
   Data the pipeline cannot use: non-positive counts, constant rows, short series.
   */
  CHPCA_STATUS_INVALID_INPUT = 3,
  /*
   Caller buffer is shorter than required.
   */
  CHPCA_STATUS_BUFFER_TOO_SMALL = 4,
  CHPCA_STATUS_NUMERICAL = 5,
  CHPCA_STATUS_PANIC = 6,
} ChpcaStatus;

typedef enum ChpcaDetrend {
  CHPCA_DETREND_NONE = 0,
  CHPCA_DETREND_STATE_SPACE = 1,
  CHPCA_DETREND_MOVING_AVERAGE7 = 2,
} ChpcaDetrend;

/*
 Opaque result of [`chpca_analyze`].
 */
typedef struct ChpcaSpectrum ChpcaSpectrum;

typedef struct ChpcaOptions {
  uint32_t rrs_samples;
  double confidence_multiplier;
  uint64_t seed;
  /*
   One of the [`ChpcaDetrend`] values.
   */
  uint32_t detrend;
  /*
   Non-zero: the input is already a standardized panel and preparation is skipped.
   */
  uint8_t standardized_input;
  /*
   Non-zero: keep `(1/T) W W*` without rescaling to unit diagonal.
   */
  uint8_t raw_scale;
} ChpcaOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *chpca_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *chpca_version(void);

/*
 20 samples, multiplier 2.33, seed 0, state-space detrending, normalized matrix.
 */
struct ChpcaOptions chpca_options_default(void);

/*
 Runs the pipeline on a row-major `n_series x n_days` buffer.

 With `standardized_input` unset the rows are positive daily counts. `options`
 may be null for the defaults. On success `*out` receives a new handle.

 # Safety
 `values` must point to `n_series * n_days` readable doubles and `out` must be
 a valid pointer. `options`, when non-null, must point to a `ChpcaOptions`.
 */
enum ChpcaStatus chpca_analyze(const double *values,
                               size_t n_series,
                               size_t n_days,
                               const struct ChpcaOptions *options,
                               struct ChpcaSpectrum **out);

/*
 Releases a handle from [`chpca_analyze`]. Null is ignored.

 # Safety
 `spectrum` must be null or a handle not yet freed.
 */
void chpca_spectrum_free(struct ChpcaSpectrum *spectrum);

/*
 Number of series (and eigenvalues); 0 for a null handle.

 # Safety
 `spectrum` must be null or a live handle.
 */
size_t chpca_spectrum_dim(const struct ChpcaSpectrum *spectrum);

/*
 Number of ranks flagged against the RRS ensemble.

 # Safety
 `spectrum` must be null or a live handle.
 */
size_t chpca_spectrum_significant_count(const struct ChpcaSpectrum *spectrum);

/*
 Copies the eigenvalues, largest first, into `out[0..dim]`.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum ChpcaStatus chpca_spectrum_eigenvalues(const struct ChpcaSpectrum *spectrum,
                                            double *out,
                                            size_t len);

/*
 Copies the 1-based `rank` eigenvector into `re[0..dim]` and `im[0..dim]`.

 # Safety
 `re` and `im` must each point to `len` writable doubles.
 */
enum ChpcaStatus chpca_spectrum_eigenvector(const struct ChpcaSpectrum *spectrum,
                                            size_t rank,
                                            double *re,
                                            double *im,
                                            size_t len);

/*
 Per-rank RRS mean and standard error.

 # Safety
 `mean` and `se` must each point to `len` writable doubles.
 */
enum ChpcaStatus chpca_spectrum_rrs(const struct ChpcaSpectrum *spectrum,
                                    double *mean,
                                    double *se,
                                    size_t len);

/*
 Writes 1 for each significant rank and 0 otherwise.

 # Safety
 `flags` must point to `len` writable bytes.
 */
enum ChpcaStatus chpca_spectrum_significance(const struct ChpcaSpectrum *spectrum,
                                             uint8_t *flags,
                                             size_t len);

/*
 Analytic signal of one real series: `re` receives the input, `im` its Hilbert transform.

 # Safety
 `series`, `re` and `im` must each point to `len` doubles.
 */
enum ChpcaStatus chpca_analytic_signal(const double *series, size_t len, double *re, double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHPCA_H */
