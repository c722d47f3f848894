#ifndef FASTSLOW_H
#define FASTSLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * `FS_MAP_*` kinds for [`fs_fast_map_new`].
 */
#define FS_MAP_POMEAU_MANNEVILLE 0

#define FS_MAP_MODIFIED_POMEAU_MANNEVILLE 1

#define FS_MAP_DOUBLING 2

/**
 * Status codes returned by every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_ARGUMENT = 2,
  FS_STATUS_DOMAIN = 3,
  FS_STATUS_NUMERICAL = 4,
  FS_STATUS_TOO_MANY_FAILURES = 5,
  FS_STATUS_PANIC = 6,
} FsStatus;

/**
 * Opaque finished ensemble holding terminal values.
 */
typedef struct FsEnsemble FsEnsemble;

/**
 * Opaque fast map.
 */
typedef struct FsFastMap FsFastMap;

/**
 * Limit-variance estimate.
 */
typedef struct FsCovariance {
  double sigma2;
  double f0_second_moment;
  double standard_error;
  /**
   * 1 when the autocovariance sum came out negative.
   */
  int32_t negative_variance;
} FsCovariance;

/**
 * `dX = sigma X^(1/2) dW + alpha (beta - X) dt`, `X(0) = xi`.
 */
typedef struct FsCirParams {
  double sigma2;
  double alpha;
  double beta;
  double xi;
} FsCirParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 */
size_t fs_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Creates a fast map; `gamma` is ignored for the doubling map.
 */
enum FsStatus fs_fast_map_new(int32_t kind, double gamma, struct FsFastMap **out);

/**
 * Releases a map; null is ignored.
 */
void fs_fast_map_free(struct FsFastMap *map);

/**
 * One application of the map.
 */
enum FsStatus fs_fast_map_step(const struct FsFastMap *map, double y, double *out);

/**
 * Writes `len` orbit points from `eta` after discarding `burn_in` iterates.
 */
enum FsStatus fs_fast_map_orbit(const struct FsFastMap *map,
                                double eta,
                                size_t burn_in,
                                double *out,
                                size_t len);

/**
 * Green-Kubo estimate for the centred identity observable on one orbit.
 */
enum FsStatus fs_green_kubo_identity(const struct FsFastMap *map,
                                     double eta,
                                     size_t length,
                                     size_t burn_in,
                                     size_t lag_cutoff,
                                     struct FsCovariance *out);

/**
 * Runs a fast-slow ensemble. `system_json` is a JSON slow-system description,
 * e.g. `{"epsilon":0.2,"xi":1.0,"f0":{"kind":"identity"},"h":{...},"f":{...}}`.
 * Fast initial conditions are uniform with `burn_in` discarded iterates.
 */
enum FsStatus fs_map_ensemble_new(const struct FsFastMap *map,
                                  const char *system_json,
                                  size_t realizations,
                                  uint64_t seed,
                                  size_t workers,
                                  double horizon,
                                  double grid_dt,
                                  size_t burn_in,
                                  struct FsEnsemble **out);

/**
 * Exact CIR ensemble at `horizon` (one exact transition per realization).
 */
enum FsStatus fs_cir_ensemble_new(struct FsCirParams params,
                                  size_t realizations,
                                  uint64_t seed,
                                  size_t workers,
                                  double horizon,
                                  struct FsEnsemble **out);

/**
 * Releases an ensemble; null is ignored.
 */
void fs_ensemble_free(struct FsEnsemble *e);

/**
 * Number of successful realizations.
 */
size_t fs_ensemble_len(const struct FsEnsemble *e);

/**
 * Number of failed realizations.
 */
size_t fs_ensemble_failures(const struct FsEnsemble *e);

/**
 * Fraction of realizations whose square-root coefficient was clamped.
 */
double fs_ensemble_clamp_fraction(const struct FsEnsemble *e);

/**
 * Copies terminal values (in realization order) into `out[0..len]`;
 * `len` must equal [`fs_ensemble_len`].
 */
enum FsStatus fs_ensemble_terminal(const struct FsEnsemble *e, double *out, size_t len);

/**
 * One-sample KS distance of the ensemble against the exact CIR law at `t`.
 */
enum FsStatus fs_ensemble_ks_cir(const struct FsEnsemble *e,
                                 struct FsCirParams params,
                                 double t,
                                 double *out);

/**
 * `E X(t)` of the CIR process; NaN for invalid parameters.
 */
double fs_cir_mean(struct FsCirParams params, double t);

/**
 * `P(X(t) <= x)` of the CIR process.
 */
enum FsStatus fs_cir_cdf(struct FsCirParams params, double t, double x, double *out);

/**
 * `len` exact draws of `X(t)` from the stream `(seed, stream_index)`.
 */
enum FsStatus fs_cir_sample(struct FsCirParams params,
                            double t,
                            uint64_t seed,
                            uint64_t stream_index,
                            double *out,
                            size_t len);

/**
 * `len` stable draws with exponent `1 / gamma` from the stream `(seed, stream_index)`.
 */
enum FsStatus fs_stable_sample(double gamma,
                               double skew,
                               double scale,
                               uint64_t seed,
                               uint64_t stream_index,
                               double *out,
                               size_t len);

/**
 * Two-sample Kolmogorov-Smirnov distance.
 */
enum FsStatus fs_ks_two_sample(const double *a, size_t na, const double *b, size_t nb, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FASTSLOW_H */
