#ifndef AMPUD_H
#define AMPUD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum AmpudStatus {
  AMPUD_STATUS_OK = 0,
  AMPUD_STATUS_NULL_POINTER = 1,
  AMPUD_STATUS_INVALID_ARGUMENT = 2,
  AMPUD_STATUS_DIMENSION_MISMATCH = 3,
  AMPUD_STATUS_DIVERGED = 4,
  AMPUD_STATUS_CONTRACT_VIOLATION = 5,
  AMPUD_STATUS_PARSE = 6,
  AMPUD_STATUS_IO = 7,
  AMPUD_STATUS_PANIC = 8,
} AmpudStatus;

// A scalar Gaussian mixture prior.
typedef struct AmpudMixture AmpudMixture;

// A measurement system `y = A x + z`.
typedef struct AmpudSystem AmpudSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next call into the library from this thread.
const char *ampud_last_error(void);

// Library version as a static NUL-terminated string.
const char *ampud_version(void);

// Draw `n` samples of the signal described by `source_json`, e.g.
// `{"kind":"mconst"}`, into `out_x`.
//
// # Safety
// `source_json` must be a NUL-terminated string and `out_x` must hold `n` values.
enum AmpudStatus ampud_signal_generate(const char *source_json,
                                       size_t n,
                                       uint64_t seed,
                                       double *out_x);

// Build a system from a row-major `m x n` matrix, `m` measurements and the
// noise variance.
//
// # Safety
// `a` must hold `m * n` values, `y` must hold `m` values and `out` must be writable.
enum AmpudStatus ampud_system_new(const double *a,
                                  size_t m,
                                  size_t n,
                                  const double *y,
                                  double sigma_z_sq,
                                  struct AmpudSystem **out);

// Generate a random test instance at the given SNR in dB. The true signal is
// written to `out_x` when it is not NULL.
//
// # Safety
// `source_json` must be a NUL-terminated string, `out` writable and `out_x`
// NULL or able to hold `n` values.
enum AmpudStatus ampud_system_generate(const char *source_json,
                                       size_t n,
                                       size_t m,
                                       double snr_db,
                                       uint64_t seed,
                                       struct AmpudSystem **out,
                                       double *out_x);

// Number of measurements and signal length.
//
// # Safety
// `sys` must be a live handle; `out_m` and `out_n` may be NULL.
enum AmpudStatus ampud_system_dims(const struct AmpudSystem *sys, size_t *out_m, size_t *out_n);

// # Safety
// `sys` must be NULL or a handle not yet freed.
void ampud_system_free(struct AmpudSystem *sys);

// Run `t_max` AMP iterations with damping `lambda`.
//
// `denoiser_json` selects the denoiser, e.g. `{"kind":"universal"}` or
// `{"kind":"gm_iid"}`. `source_json` is only consulted by denoisers that need
// the true source and may be NULL otherwise. The estimate goes to `out_x`
// (length `n`); `out_sigma_hat_sq`, when not NULL, receives the per-iteration
// noise estimates for iterations `0..=t_max` (length `t_max + 1`).
//
// # Safety
// Strings must be NUL-terminated or NULL as documented; buffers must have the
// stated lengths.
enum AmpudStatus ampud_reconstruct(const struct AmpudSystem *sys,
                                   const char *denoiser_json,
                                   const char *source_json,
                                   size_t t_max,
                                   double lambda,
                                   double *out_x,
                                   double *out_sigma_hat_sq);

// Mixture from `s` weights, means and variances. Weights must sum to one.
//
// # Safety
// The three arrays must hold `s` values and `out` must be writable.
enum AmpudStatus ampud_mixture_new(const double *alpha,
                                   const double *mu,
                                   const double *sigma_sq,
                                   size_t s,
                                   struct AmpudMixture **out);

// Fit a mixture prior to `n` noisy observations `q = x + N(0, sigma_v_sq)`.
// `em_json` tunes the fit and may be NULL for defaults.
//
// # Safety
// `q` must hold `n` values, `em_json` must be NULL or NUL-terminated and
// `out` must be writable.
enum AmpudStatus ampud_mixture_fit(const double *q,
                                   size_t n,
                                   double sigma_v_sq,
                                   const char *em_json,
                                   struct AmpudMixture **out);

// Number of components.
//
// # Safety
// `mix` must be a live handle and `out_s` writable.
enum AmpudStatus ampud_mixture_len(const struct AmpudMixture *mix, size_t *out_s);

// Copy the components out; each array must hold `ampud_mixture_len` values.
//
// # Safety
// `mix` must be a live handle and the arrays large enough.
enum AmpudStatus ampud_mixture_components(const struct AmpudMixture *mix,
                                          double *out_alpha,
                                          double *out_mu,
                                          double *out_sigma_sq);

// # Safety
// `mix` must be NULL or a handle not yet freed.
void ampud_mixture_free(struct AmpudMixture *mix);

// Posterior mean of each `q[i]` under the mixture prior with Gaussian noise of
// variance `sigma_v_sq`. `out_deriv` may be NULL.
//
// # Safety
// `q`, `out_x` and a non-NULL `out_deriv` must hold `n` values.
enum AmpudStatus ampud_mixture_denoise(const struct AmpudMixture *mix,
                                       double sigma_v_sq,
                                       const double *q,
                                       size_t n,
                                       double *out_x,
                                       double *out_deriv);

// Denoise a sequence observed in Gaussian noise of variance `sigma_v_sq`
// with the universal context-clustering denoiser. `cfg_json` may be NULL for
// defaults. `out_mean_deriv` may be NULL.
//
// # Safety
// `q` and `out_x` must hold `n` values; `cfg_json` must be NULL or NUL-terminated.
enum AmpudStatus ampud_universal_denoise(const double *q,
                                         size_t n,
                                         double sigma_v_sq,
                                         const char *cfg_json,
                                         double *out_x,
                                         double *out_mean_deriv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMPUD_H */
