#ifndef QBELL_H
#define QBELL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QbellStatus {
  QBELL_STATUS_OK = 0,
  QBELL_STATUS_NULL_POINTER = 1,
  QBELL_STATUS_INVALID_ARGUMENT = 2,
  QBELL_STATUS_COMPUTATION = 3,
  QBELL_STATUS_INFEASIBLE = 4,
  QBELL_STATUS_IO = 5,
  QBELL_STATUS_PANIC = 6,
} QbellStatus;

/**
 * Bell operator for one dimension.
 */
typedef struct QbellOperator QbellOperator;

/**
 * Two-qudit density matrix.
 */
typedef struct QbellState QbellState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qbell_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the full message length excluding the NUL.
 * Returns 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null with `len == 0`.
 */
size_t qbell_last_error_message(char *buf, size_t len);

/**
 * Builds (or fetches from the cache) the Bell operator for `d` in 2..=14.
 *
 * # Safety
 * `out_op` must be a valid pointer.
 */
enum QbellStatus qbell_operator_new(size_t d, struct QbellOperator **out_op);

/**
 * # Safety
 * `op` must come from [`qbell_operator_new`] and not be used afterwards.
 */
void qbell_operator_free(struct QbellOperator *op);

/**
 * Local dimension `d`, or 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
size_t qbell_operator_dim(const struct QbellOperator *op);

/**
 * Writes the `d^2` eigenvalues in descending order.
 *
 * # Safety
 * `values` must be valid for `len` doubles.
 */
enum QbellStatus qbell_operator_eigenvalues(const struct QbellOperator *op,
                                            double *values,
                                            size_t len);

/**
 * Writes the `d^2 x d^2` matrix row-major as separate real and imaginary parts.
 *
 * # Safety
 * `re` and `im` must each be valid for `len` doubles.
 */
enum QbellStatus qbell_operator_entries(const struct QbellOperator *op,
                                        double *re,
                                        double *im,
                                        size_t len);

/**
 * The maximally entangled state `sum_l |l>|-l> / sqrt(d)`.
 *
 * # Safety
 * `out_state` must be a valid pointer.
 */
enum QbellStatus qbell_state_max_entangled(size_t d, struct QbellState **out_state);

/**
 * The spiral-spectrum state with Lorentzian amplitudes of width `gamma`.
 *
 * # Safety
 * `out_state` must be a valid pointer.
 */
enum QbellStatus qbell_state_lorentzian(double gamma, size_t d, struct QbellState **out_state);

/**
 * The source state, optionally after the designed equalizing filter.
 *
 * # Safety
 * `out_state` must be a valid pointer.
 */
enum QbellStatus qbell_state_source(double gamma,
                                    size_t d,
                                    bool filtered,
                                    struct QbellState **out_state);

/**
 * Applies diagonal local filters (entries per pair label, ascending) and
 * returns the renormalized state and the success probability.
 *
 * # Safety
 * `diag_a` and `diag_b` must each be valid for `len` doubles; the output
 * pointers must be valid.
 */
enum QbellStatus qbell_state_filter(const struct QbellState *state,
                                    const double *diag_a,
                                    const double *diag_b,
                                    size_t len,
                                    struct QbellState **out_state,
                                    double *out_probability);

/**
 * Local dimension `d`, or 0 for a null handle.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t qbell_state_dim(const struct QbellState *state);

/**
 * # Safety
 * `state` must come from a `qbell_state_*` constructor and not be used afterwards.
 */
void qbell_state_free(struct QbellState *state);

/**
 * `S_d = Tr(B rho)` for matching dimensions.
 *
 * # Safety
 * Handles must be live and `out_s` valid.
 */
enum QbellStatus qbell_bell_value(const struct QbellOperator *op,
                                  const struct QbellState *state,
                                  double *out_s);

/**
 * `S_d` and its Poisson standard deviation from coincidence counts laid out
 * as `counts[((a*2 + b)*d + v)*d + w]`, `len = 4 d^2`.
 *
 * # Safety
 * `counts` must be valid for `len` values; output pointers must be valid.
 */
enum QbellStatus qbell_s_from_counts(size_t d,
                                     const uint64_t *counts,
                                     size_t len,
                                     double *out_s,
                                     double *out_sigma);

/**
 * Fits `rate(l) = (A f(l, gamma))^2` to per-mode pair rates. `sigmas` may be
 * null for unweighted data.
 *
 * # Safety
 * Arrays must be valid for `len` elements; output pointers must be valid.
 */
enum QbellStatus qbell_fit_gamma(const int32_t *ells,
                                 const double *rates,
                                 const double *sigmas,
                                 size_t len,
                                 double *out_gamma,
                                 double *out_amplitude);

/**
 * Runs the witness maximization on the built-in d = 11 constraint set.
 *
 * # Safety
 * `out_best` must be valid.
 */
enum QbellStatus qbell_witness_paper_scenario(size_t n_starts, uint64_t seed, double *out_best);

/**
 * Separation `(measured - bound) / sigma` and whether it reaches `significance`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum QbellStatus qbell_certify(double bound,
                               double measured,
                               double sigma,
                               double significance,
                               double *out_separation,
                               bool *out_certified);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBELL_H */
