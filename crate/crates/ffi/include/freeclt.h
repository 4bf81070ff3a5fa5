#ifndef FREECLT_H
#define FREECLT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcltStatus {
  FCLT_STATUS_OK = 0,
  FCLT_STATUS_USAGE = 2,
  FCLT_STATUS_CAP = 3,
  FCLT_STATUS_HYPOTHESIS = 4,
  FCLT_STATUS_NUMERIC = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  FCLT_STATUS_INTERNAL = 70,
} FcltStatus;

typedef enum FcltBasis {
  FCLT_BASIS_HERMITE = 0,
  FCLT_BASIS_CHEBYSHEV = 1,
} FcltBasis;

typedef enum FcltWorld {
  FCLT_WORLD_CLASSICAL = 0,
  FCLT_WORLD_FREE = 1,
} FcltWorld;

typedef enum FcltDiagramClass {
  FCLT_DIAGRAM_CLASS_PAIRINGS = 0,
  FCLT_DIAGRAM_CLASS_NONCROSSING = 1,
  FCLT_DIAGRAM_CLASS_CLASSICAL = 2,
  FCLT_DIAGRAM_CLASS_FREE = 3,
  FCLT_DIAGRAM_CLASS_FREE_CONNECTED = 4,
} FcltDiagramClass;

/**
 * Opaque stationary covariance model.
 */
typedef struct FcltModel FcltModel;

/**
 * Opaque functional series `Σ c_k P_k`.
 */
typedef struct FcltSeries FcltSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *fclt_last_error(void);

/**
 * Builds a series from `c_0..c_{len-1}`; `c_0` must be 0.
 *
 * # Safety
 * `coeffs` must point to `len` doubles and `out` must be writable.
 */
enum FcltStatus fclt_series_new(enum FcltBasis b,
                                const double *coeffs,
                                size_t len,
                                struct FcltSeries **out);

/**
 * Releases a series; null is ignored.
 *
 * # Safety
 * `s` must come from [`fclt_series_new`] and not have been freed.
 */
void fclt_series_free(struct FcltSeries *s);

/**
 * # Safety
 * `out` must be writable.
 */
enum FcltStatus fclt_model_geometric(double a, struct FcltModel **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum FcltStatus fclt_model_power(double beta, struct FcltModel **out);

/**
 * Finite-support model `r(t) = values[|t|]`; `values[0]` must be 1.
 *
 * # Safety
 * `values` must point to `len` doubles and `out` must be writable.
 */
enum FcltStatus fclt_model_tabulated(const double *values, size_t len, struct FcltModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `m` must come from one of the `fclt_model_*` constructors and not have been freed.
 */
void fclt_model_free(struct FcltModel *m);

/**
 * Joint cumulant of `P_{n_i}(X_{t_i})`, `i < k`, by the diagram formula.
 *
 * # Safety
 * `degrees` and `times` must point to `k` values, `model` must be live and
 * `out` writable.
 */
enum FcltStatus fclt_joint_cumulant(enum FcltWorld w,
                                    const size_t *degrees,
                                    const int64_t *times,
                                    size_t k,
                                    const struct FcltModel *model,
                                    double *out);

/**
 * The same cumulant through the Wick/Möbius oracle (`Σ n_i ≤ 12`).
 *
 * # Safety
 * As for [`fclt_joint_cumulant`].
 */
enum FcltStatus fclt_oracle_cumulant(enum FcltWorld w,
                                     const size_t *degrees,
                                     const int64_t *times,
                                     size_t k,
                                     const struct FcltModel *model,
                                     double *out);

/**
 * `σ² = Σ_t` of the functional covariance, with the truncation tail bound.
 *
 * # Safety
 * Handles must be live; `value` must be writable; `tail_bound` may be null.
 */
enum FcltStatus fclt_sigma_squared(const struct FcltSeries *series,
                                   const struct FcltModel *model,
                                   double tail_tol,
                                   double *value,
                                   double *tail_bound);

/**
 * Raw cumulant `κ_R(S_N)`; the world follows the series basis.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FcltStatus fclt_kappa(const struct FcltSeries *series,
                           const struct FcltModel *model,
                           size_t n,
                           size_t r,
                           double *out);

/**
 * Number of partitions of the given class for the row table `rows[0..k]`.
 *
 * # Safety
 * `rows` must point to `k` values and `out` must be writable.
 */
enum FcltStatus fclt_count_diagrams(enum FcltDiagramClass class_,
                                    const size_t *rows,
                                    size_t k,
                                    uint64_t *out);

/**
 * Stieltjes transform of the semicircle law of variance `sigma²` at `re + i·im`.
 *
 * # Safety
 * `out_re` and `out_im` must be writable.
 */
enum FcltStatus fclt_stieltjes_semicircle(double re,
                                          double im,
                                          double sigma,
                                          double *out_re,
                                          double *out_im);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fclt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREECLT_H */
