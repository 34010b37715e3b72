#ifndef VPB_H
#define VPB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VpbStatus {
  VPB_STATUS_OK = 0,
  VPB_STATUS_NULL_POINTER = 1,
  /**
   * Bad configuration or parameters.
   */
  VPB_STATUS_CONFIG = 2,
  /**
   * A checked property failed.
   */
  VPB_STATUS_INVARIANT = 3,
  /**
   * The solver could not proceed.
   */
  VPB_STATUS_RUNTIME = 4,
  /**
   * A buffer had the wrong length.
   */
  VPB_STATUS_LENGTH = 5,
  VPB_STATUS_PANIC = 6,
} VpbStatus;

/**
 * Collision operator on a velocity lattice.
 */
typedef struct VpbOperator VpbOperator;

/**
 * Time integration owned by the caller.
 */
typedef struct VpbSimulation VpbSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; valid until the next call.
 */
const char *vpb_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum VpbStatus vpb_operator_new(uintptr_t n,
                                double vmax,
                                double gamma,
                                double epsilon,
                                uintptr_t sphere_order,
                                struct VpbOperator **out);

/**
 * # Safety
 * `op` must come from [`vpb_operator_new`] and not be used afterwards.
 */
void vpb_operator_free(struct VpbOperator *op);

/**
 * Number of lattice points, `n^3`; 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
uintptr_t vpb_operator_len(const struct VpbOperator *op);

/**
 * `out = Q(f1, f2)` on the lattice; all buffers hold `len` values.
 *
 * # Safety
 * Pointers must be valid for `len` values; `out` must not alias the inputs.
 */
enum VpbStatus vpb_operator_apply_q(const struct VpbOperator *op,
                                    const double *f1,
                                    const double *f2,
                                    uintptr_t len,
                                    double *out);

/**
 * `out = L f` for the linearised operator.
 *
 * # Safety
 * As for [`vpb_operator_apply_q`].
 */
enum VpbStatus vpb_operator_apply_l(const struct VpbOperator *op,
                                    const double *f,
                                    uintptr_t len,
                                    double *out);

/**
 * Builds a simulation from TOML configuration text: initial data, boundary
 * datum and solver settings as the CLI would use them.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum VpbStatus vpb_simulation_from_toml(const char *toml, struct VpbSimulation **out);

/**
 * # Safety
 * `sim` must come from [`vpb_simulation_from_toml`] and not be used afterwards.
 */
void vpb_simulation_free(struct VpbSimulation *sim);

/**
 * Advances `steps` time steps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum VpbStatus vpb_simulation_step(struct VpbSimulation *sim, uintptr_t steps);

/**
 * Current time; NaN for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
double vpb_simulation_time(const struct VpbSimulation *sim);

/**
 * `|w f|_inf` of the current perturbation; NaN for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
double vpb_simulation_sup(const struct VpbSimulation *sim);

/**
 * Number of values in the state (space nodes times lattice points).
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
uintptr_t vpb_simulation_state_len(const struct VpbSimulation *sim);

/**
 * Copies the state, row-major by space node then lattice point.
 *
 * # Safety
 * `out` must be valid for `len` values.
 */
enum VpbStatus vpb_simulation_copy_state(const struct VpbSimulation *sim,
                                         double *out,
                                         uintptr_t len);

/**
 * `w(t, v) = exp(theta_tilde(t) |v|^2)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum VpbStatus vpb_weight(double t,
                          double vx,
                          double vy,
                          double vz,
                          double vartheta,
                          double theta,
                          double gamma,
                          double *out);

/**
 * Fits `log y = log A - lambda t^rho` to `n` samples.
 *
 * # Safety
 * `t` and `y` must be valid for `n` values; outputs must be valid pointers.
 */
enum VpbStatus vpb_decay_fit(const double *t,
                             const double *y,
                             uintptr_t n,
                             double rho,
                             double *lambda,
                             double *amplitude,
                             double *r_squared);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VPB_H */
