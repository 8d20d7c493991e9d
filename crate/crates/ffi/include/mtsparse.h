#ifndef MTSPARSE_H
#define MTSPARSE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MtsStatus {
  MtsStatus_Ok = 0,
  MtsStatus_NullPointer = 1,
  MtsStatus_InvalidArgument = 2,
  MtsStatus_Io = 3,
  MtsStatus_Convergence = 4,
  MtsStatus_Internal = 5,
} MtsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MtsDataset MtsDataset;

/**
 * Opaque fit handle: coefficients plus the serialized report.
 */
typedef struct MtsFit MtsFit;

/**
 * Options for the powered-l1 estimator.
 */
typedef struct MtsLassoesOptions {
  double alpha;
  double lambda;
  /**
   * Nonzero penalizes `1 + ||b||_1` (the augmented norm); zero the plain norm.
   */
  uint8_t augmented_norm;
  uintptr_t max_outer;
  uintptr_t max_inner;
  double tol;
} MtsLassoesOptions;

/**
 * Options for the row-wise group estimator.
 */
typedef struct MtsGroupOptions {
  double lambda;
  uintptr_t max_sweeps;
  double tol;
} MtsGroupOptions;

/**
 * Options for the nuclear-norm estimator.
 */
typedef struct MtsRingOptions {
  double lambda;
  double gamma;
  double zero_tol;
  /**
   * Nonzero enables the multiplicative lambda rule toward `target_rank`.
   */
  uint8_t has_target_rank;
  uintptr_t target_rank;
  double lambda_factor;
  uintptr_t svd_refresh_every;
  double init_scale;
  uintptr_t max_passes;
  double tol;
  uint64_t seed;
} MtsRingOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mts_version(void);

/**
 * Copies the last error message into `buf` (truncated to `len - 1` bytes,
 * always NUL-terminated). Returns the full message length.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes, or be null (in which
 * case only the length is returned).
 */
uintptr_t mts_last_error_message(char *buf, uintptr_t len);

/**
 * Default option values matching the library defaults.
 */
struct MtsLassoesOptions mts_lassoes_options_default(void);

struct MtsGroupOptions mts_group_options_default(void);

struct MtsRingOptions mts_ring_options_default(void);

/**
 * Reads a dataset from a manifest path.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string, `out` a valid pointer.
 */
enum MtsStatus mts_dataset_read(const char *manifest_path, struct MtsDataset **out);

/**
 * Generates the decaying-variance simulation design.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MtsStatus mts_dataset_generate_decay(uintptr_t n,
                                          uintptr_t p,
                                          uintptr_t m,
                                          double noise_sigma,
                                          uint64_t seed,
                                          struct MtsDataset **out);

/**
 * # Safety
 * `ds` must be a handle from this library or null.
 */
uintptr_t mts_dataset_tasks(const struct MtsDataset *ds);

/**
 * # Safety
 * `ds` must be a handle from this library or null.
 */
uintptr_t mts_dataset_features(const struct MtsDataset *ds);

/**
 * # Safety
 * `ds` must be a handle from this library (or null, a no-op) and must not
 * be used afterwards.
 */
void mts_dataset_free(struct MtsDataset *ds);

/**
 * Fits the powered-l1 estimator. On `Convergence` the handle is still valid
 * (flagged best iterate).
 *
 * # Safety
 * `ds`, `opts`, and `out` must be valid pointers.
 */
enum MtsStatus mts_fit_lassoes(const struct MtsDataset *ds,
                               const struct MtsLassoesOptions *opts,
                               struct MtsFit **out);

/**
 * Fits the row-wise group estimator.
 *
 * # Safety
 * `ds`, `opts`, and `out` must be valid pointers.
 */
enum MtsStatus mts_fit_group(const struct MtsDataset *ds,
                             const struct MtsGroupOptions *opts,
                             struct MtsFit **out);

/**
 * Fits the nuclear-norm estimator.
 *
 * # Safety
 * `ds`, `opts`, and `out` must be valid pointers.
 */
enum MtsStatus mts_fit_ring(const struct MtsDataset *ds,
                            const struct MtsRingOptions *opts,
                            struct MtsFit **out);

/**
 * # Safety
 * `fit` must be a handle from this library or null.
 */
uintptr_t mts_fit_rows(const struct MtsFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library or null.
 */
uintptr_t mts_fit_cols(const struct MtsFit *fit);

/**
 * Final objective value of the returned iterate.
 *
 * # Safety
 * `fit` must be a handle from this library or null.
 */
double mts_fit_objective(const struct MtsFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library or null.
 */
uint8_t mts_fit_converged(const struct MtsFit *fit);

/**
 * Copies the row-major `rows x cols` coefficient matrix into `buf`.
 *
 * # Safety
 * `buf` must point to at least `len` writable doubles.
 */
enum MtsStatus mts_fit_copy_coefficients(const struct MtsFit *fit, double *buf, uintptr_t len);

/**
 * Borrowed pointer to the fit report serialized as JSON; valid until the
 * fit handle is freed.
 *
 * # Safety
 * `fit` must be a handle from this library or null.
 */
const char *mts_fit_report_json(const struct MtsFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library (or null, a no-op) and must not
 * be used afterwards.
 */
void mts_fit_free(struct MtsFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTSPARSE_H */
