#ifndef PHASE_SCOPE_H
#define PHASE_SCOPE_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_SIZE_MISMATCH = 3,
  PS_STATUS_DEGENERATE = 4,
  PS_STATUS_TOO_LARGE = 5,
  PS_STATUS_NUMERICAL = 6,
  PS_STATUS_PANIC = 7,
} PsStatus;

typedef enum PsBoundary {
  PS_BOUNDARY_OPEN = 0,
  PS_BOUNDARY_PERIODIC = 1,
} PsBoundary;

/**
 * Exact spectrum of one model.
 */
typedef struct PsSpectrum PsSpectrum;

/**
 * ANNNI chain parameters.
 */
typedef struct PsModel {
  size_t num_sites;
  double j1;
  double j2;
  double bx;
  enum PsBoundary boundary;
} PsModel;

typedef struct PsZneResult {
  double e0;
  double e0_stderr;
  double a;
  /**
   * Nonzero when the exponential fit was replaced by the linear fallback.
   */
  int32_t linear;
} PsZneResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *ps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Diagonalize `model`, keeping `num_states` levels (0 for the default).
 *
 * # Safety
 * `model` must point to a valid `PsModel` and `out` to writable storage.
 */
enum PsStatus ps_spectrum_new(const struct PsModel *model,
                              size_t num_states,
                              struct PsSpectrum **out);

/**
 * # Safety
 * `spectrum` must come from `ps_spectrum_new` and not be used afterwards.
 */
void ps_spectrum_free(struct PsSpectrum *spectrum);

/**
 * Number of stored levels; 0 for a null handle.
 *
 * # Safety
 * `spectrum` must be null or a live handle.
 */
size_t ps_spectrum_len(const struct PsSpectrum *spectrum);

/**
 * Copy up to `len` energies into `out`, ascending.
 *
 * # Safety
 * `spectrum` must be a live handle and `out` must hold `len` doubles.
 */
enum PsStatus ps_spectrum_energies(const struct PsSpectrum *spectrum, double *out, size_t len);

/**
 * # Safety
 * `spectrum` must be a live handle and `out` writable.
 */
enum PsStatus ps_spectrum_ground_degeneracy(const struct PsSpectrum *spectrum, size_t *out);

/**
 * Perturbative fidelity susceptibility of the ground state with respect to J2.
 *
 * # Safety
 * `spectrum` must be a live handle and `out` writable.
 */
enum PsStatus ps_spectrum_fidelity_susceptibility(const struct PsSpectrum *spectrum, double *out);

/**
 * Parameter count of the `layers`-layer ansatz for `model`.
 *
 * # Safety
 * `model` must point to a valid `PsModel` and `out` be writable.
 */
enum PsStatus ps_ansatz_num_params(const struct PsModel *model, size_t layers, size_t *out);

/**
 * Noise-free energy of the ansatz at `params`.
 *
 * # Safety
 * `params` must hold `len` doubles; `model` and `out` must be valid.
 */
enum PsStatus ps_ansatz_energy(const struct PsModel *model,
                               size_t layers,
                               const double *params,
                               size_t len,
                               double *out);

/**
 * Optimize the ansatz for one model with the default strategy, writing the
 * angles to `params` (length `len`) and the energy to `energy`.
 *
 * # Safety
 * `params` must hold `len` writable doubles; `model` and `energy` must be valid.
 */
enum PsStatus ps_vqe_optimize(const struct PsModel *model,
                              size_t layers,
                              uint64_t seed,
                              double *params,
                              size_t len,
                              double *energy);

/**
 * Exponential zero-noise extrapolation of `len` points `(lambdas[i], values[i] ± stderrs[i])`.
 *
 * # Safety
 * The three arrays must hold `len` elements and `out` must be writable.
 */
enum PsStatus ps_zne_fit(const uint32_t *lambdas,
                         const double *values,
                         const double *stderrs,
                         size_t len,
                         struct PsZneResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASE_SCOPE_H */
