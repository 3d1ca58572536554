#ifndef SEMPLE_H
#define SEMPLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Values 2 to 7 match the exit codes of the `semple` CLI.
typedef enum SempleStatus {
  SEMPLE_STATUS_OK = 0,
  SEMPLE_STATUS_NULL_POINTER = 1,
  SEMPLE_STATUS_INVALID_INPUT = 2,
  SEMPLE_STATUS_SCHEMA = 3,
  SEMPLE_STATUS_INGESTION = 4,
  SEMPLE_STATUS_IO = 5,
  SEMPLE_STATUS_FIT_FAILED = 6,
  SEMPLE_STATUS_SAMPLING_FAILED = 7,
  SEMPLE_STATUS_PANIC = 8,
} SempleStatus;

// Inverse mixture giving the surrogate posterior `q(θ | y)`.
typedef struct SempleInverse SempleInverse;

// Fitted forward mixture of experts `q̃(y | θ)`.
typedef struct SempleMixture SempleMixture;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *semple_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library from the same thread.
const char *semple_last_error_message(void);

// Static name of a status code.
const char *semple_status_name(enum SempleStatus status);

// Fit a mixture by EM to `n` pairs. `theta` is `n × theta_dim`, `y` is `n × obs_dim`.
// `diagonal` selects diagonal noise covariances.
//
// # Safety
// `theta` and `y` must point to arrays of the stated sizes; `out` must be writable.
enum SempleStatus semple_mixture_fit(const double *theta,
                                     const double *y,
                                     size_t n,
                                     size_t theta_dim,
                                     size_t obs_dim,
                                     size_t k,
                                     bool diagonal,
                                     uint64_t seed,
                                     struct SempleMixture **out);

// Read a mixture written by the CLI or [`semple_mixture_write`].
//
// # Safety
// `file` must be a NUL-terminated string; `out` must be writable.
enum SempleStatus semple_mixture_read(const char *file, struct SempleMixture **out);

// # Safety
// `mix` must be a live handle and `file` a NUL-terminated string.
enum SempleStatus semple_mixture_write(const struct SempleMixture *mix, const char *file);

// # Safety
// `mix` must be null or a handle not yet freed.
void semple_mixture_free(struct SempleMixture *mix);

// # Safety
// `mix` must be a live handle; the out pointers must be writable.
enum SempleStatus semple_mixture_dims(const struct SempleMixture *mix,
                                      size_t *components,
                                      size_t *theta_dim,
                                      size_t *obs_dim);

// Surrogate log-likelihood `log q̃(y | θ)`.
//
// # Safety
// `mix` must be a live handle, the arrays must have the stated lengths and `out` must be writable.
enum SempleStatus semple_mixture_loglik(const struct SempleMixture *mix,
                                        const double *y,
                                        size_t y_len,
                                        const double *theta,
                                        size_t theta_len,
                                        double *out);

// Gradient of `log q̃(y | θ)` with respect to θ, written to `grad` (length `theta_len`).
//
// # Safety
// As [`semple_mixture_loglik`]; `grad` must hold `theta_len` values.
enum SempleStatus semple_mixture_loglik_grad(const struct SempleMixture *mix,
                                             const double *y,
                                             size_t y_len,
                                             const double *theta,
                                             size_t theta_len,
                                             double *grad);

// Closed-form inverse of a forward mixture.
//
// # Safety
// `mix` must be a live handle; `out` must be writable.
enum SempleStatus semple_inverse_new(const struct SempleMixture *mix, struct SempleInverse **out);

// # Safety
// `inv` must be null or a handle not yet freed.
void semple_inverse_free(struct SempleInverse *inv);

// Surrogate posterior log-density `log q(θ | y)`.
//
// # Safety
// `inv` must be a live handle, the arrays must have the stated lengths and `out` must be writable.
enum SempleStatus semple_inverse_logpdf(const struct SempleInverse *inv,
                                        const double *y,
                                        size_t y_len,
                                        const double *theta,
                                        size_t theta_len,
                                        double *out);

// `n` iid draws from `q(θ | y)` into `out` (`n × theta_dim`, row-major).
//
// # Safety
// `inv` must be a live handle, `y` must hold `y_len` values and `out` `n · theta_dim` values.
enum SempleStatus semple_inverse_sample(const struct SempleInverse *inv,
                                        const double *y,
                                        size_t y_len,
                                        size_t n,
                                        uint64_t seed,
                                        double *out);

// Exact OU log-likelihood of `n` scalar observations; `theta` is `log(c₁, c₂, c₃, ξ)`.
//
// # Safety
// `times` and `obs` must hold `n` values, `theta` four values; `out` must be writable.
enum SempleStatus semple_ou_kalman_loglik(const double *times,
                                          const double *obs,
                                          size_t n,
                                          const double *theta,
                                          double *out);

// Univariate effective sample size; `degenerate` is set for a constant chain.
//
// # Safety
// `chain` must hold `n` values; the out pointers must be writable.
enum SempleStatus semple_ess(const double *chain, size_t n, double *ess, bool *degenerate);

// Wasserstein-1 distance between two empirical samples.
//
// # Safety
// `a` and `b` must hold `na` and `nb` values; `out` must be writable.
enum SempleStatus semple_wasserstein1(const double *a,
                                      size_t na,
                                      const double *b,
                                      size_t nb,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMPLE_H */
