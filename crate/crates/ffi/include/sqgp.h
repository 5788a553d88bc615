#ifndef SQGP_H
#define SQGP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Covariance families accepted by [`sqgp_fit`].
 */
typedef enum {
  SQGP_KERNEL_LAPLACIAN = 0,
  SQGP_KERNEL_GAUSSIAN = 1,
} SqgpKernel;

/**
 * Observation models accepted by [`sqgp_fit`].
 */
typedef enum {
  SQGP_LIKELIHOOD_GAUSSIAN = 0,
  SQGP_LIKELIHOOD_POISSON = 1,
} SqgpLikelihood;

/**
 * Status codes; nonzero values mirror the CLI exit codes.
 */
typedef enum {
  SQGP_STATUS_OK = 0,
  SQGP_STATUS_CONFIG_ERROR = 2,
  SQGP_STATUS_DATA_ERROR = 3,
  SQGP_STATUS_NUMERICAL_ERROR = 4,
  SQGP_STATUS_NULL_POINTER = 5,
  SQGP_STATUS_PANIC = 6,
} SqgpStatus;

/**
 * Opaque fitted model: kernel, observation model, and the latent-space
 * summary it predicts from.
 */
typedef struct SqgpModel SqgpModel;

/**
 * Opaque summarized dataset.
 */
typedef struct SqgpSummary SqgpSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. Valid until the
 * next call into the library from the same thread; never free it.
 */
const char *sqgp_last_error_message(void);

/**
 * Build a summary from raw parts: `z` is m×d row-major, `ybar` has length m,
 * `svar` may be NULL (treated as zeros), `counts` has length m.
 *
 * # Safety
 * Pointers must reference buffers of the stated lengths and stay valid for
 * the duration of the call.
 */
SqgpStatus sqgp_summary_create(const double *z,
                               const double *ybar,
                               const double *svar,
                               const uint64_t *counts,
                               uintptr_t m,
                               uintptr_t d,
                               SqgpSummary **out);

/**
 * Grid-summarize complete data: `x` is n×d row-major, `y` has length n, and
 * `lo`/`hi`/`cell` are per-dimension grid bounds and cell sizes.
 *
 * # Safety
 * Pointers must reference buffers of the stated lengths.
 */
SqgpStatus sqgp_summarize_grid(const double *x,
                               const double *y,
                               uintptr_t n,
                               uintptr_t d,
                               const double *lo,
                               const double *hi,
                               const double *cell,
                               SqgpSummary **out);

/**
 * Number of cells in a summary; 0 for NULL.
 *
 * # Safety
 * `summary` must be NULL or a live handle from this library.
 */
uintptr_t sqgp_summary_cells(const SqgpSummary *summary);

/**
 * Input dimension of a summary; 0 for NULL.
 *
 * # Safety
 * `summary` must be NULL or a live handle from this library.
 */
uintptr_t sqgp_summary_dim(const SqgpSummary *summary);

/**
 * Release a summary handle. NULL is a no-op.
 *
 * # Safety
 * The handle must have come from this library and not been freed before.
 */
void sqgp_summary_free(SqgpSummary *summary);

/**
 * Fit hyperparameters to a summary. `sigma2_fixed` holds the Gaussian
 * observation variance fixed; pass NaN to fit it (ignored for Poisson).
 *
 * # Safety
 * `summary` must be a live handle; `out` must be a valid pointer.
 */
SqgpStatus sqgp_fit(const SqgpSummary *summary,
                    SqgpLikelihood likelihood,
                    SqgpKernel kernel,
                    double sigma2_fixed,
                    SqgpModel **out);

/**
 * Fitted parameters, written as
 * `[length_scale, signal_variance, noise_variance, sigma2 (NaN for Poisson), mean_const]`.
 *
 * # Safety
 * `out_params` must point to at least 5 doubles.
 */
SqgpStatus sqgp_model_params(const SqgpModel *model, double *out_params);

/**
 * 1 when the optimizer met its tolerance, 0 otherwise (best iterate is
 * still usable), -1 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle from this library.
 */
int sqgp_model_converged(const SqgpModel *model);

/**
 * Predict at `nstar` query points (row-major, dimension matching the
 * summary). `out_mean` receives observable-scale predictions. When
 * `out_variance` is non-NULL it receives latent posterior variances
 * (diagonal only; memory stays linear in the number of queries).
 *
 * # Safety
 * Buffers must match the stated lengths; `model` must be a live handle.
 */
SqgpStatus sqgp_predict(const SqgpModel *model,
                        const double *xstar,
                        uintptr_t nstar,
                        uintptr_t d,
                        double *out_mean,
                        double *out_variance);

/**
 * Release a model handle. NULL is a no-op.
 *
 * # Safety
 * The handle must have come from this library and not been freed before.
 */
void sqgp_model_free(SqgpModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SQGP_H */
