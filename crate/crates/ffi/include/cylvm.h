#ifndef CYLVM_H
#define CYLVM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Columns of the profile table.
 */
typedef enum cylvm_column {
  CYLVM_COLUMN_R = 0,
  CYLVM_COLUMN_PHI = 1,
  CYLVM_COLUMN_A_PHI = 2,
  CYLVM_COLUMN_A3 = 3,
  CYLVM_COLUMN_RHO = 4,
  CYLVM_COLUMN_J_PHI = 5,
  CYLVM_COLUMN_J3 = 6,
  CYLVM_COLUMN_ER = 7,
  CYLVM_COLUMN_B_PHI = 8,
  CYLVM_COLUMN_B3 = 9,
  CYLVM_COLUMN_XI = 10,
  CYLVM_COLUMN_ZETA = 11,
} cylvm_column;

/**
 * Result code of every fallible call.
 */
typedef enum cylvm_status {
  CYLVM_STATUS_OK = 0,
  CYLVM_STATUS_NULL_POINTER = 1,
  CYLVM_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration or violated precondition.
   */
  CYLVM_STATUS_CONFIG = 3,
  /**
   * Iteration limit, non-finite integrand or failed integration.
   */
  CYLVM_STATUS_NUMERICAL = 4,
  /**
   * The call needs a solved session.
   */
  CYLVM_STATUS_NOT_SOLVED = 5,
  /**
   * Column index or buffer length does not fit.
   */
  CYLVM_STATUS_OUT_OF_RANGE = 6,
  CYLVM_STATUS_IO = 7,
  CYLVM_STATUS_PANIC = 8,
} cylvm_status;

/**
 * Opaque session handle.
 */
typedef struct cylvm_session_t cylvm_session_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse and validate a TOML run configuration. `base_dir` resolves tabulated-profile paths and
 * may be null for the current directory. On success `*out` owns a session that must be released
 * with [`cylvm_session_free`].
 *
 * # Safety
 * `toml` must be a NUL-terminated string, `base_dir` null or NUL-terminated, `out` writable.
 */
enum cylvm_status cylvm_session_new(const char *toml,
                                    const char *base_dir,
                                    struct cylvm_session_t **out);

/**
 * Release a session. Null is ignored.
 *
 * # Safety
 * `s` must come from [`cylvm_session_new`] and not be used afterwards.
 */
void cylvm_session_free(struct cylvm_session_t *s);

/**
 * Run the fixed-point solve and reconstruct the fields. Replaces any earlier result.
 *
 * # Safety
 * `s` must be a live session.
 */
enum cylvm_status cylvm_session_solve(struct cylvm_session_t *s);

/**
 * Number of radial nodes of the configured grid; 0 for a null session.
 *
 * # Safety
 * `s` must be null or a live session.
 */
size_t cylvm_session_grid_len(const struct cylvm_session_t *s);

/**
 * Copy one profile column (a [`CylvmColumn`] value) into `buf`, which must hold at least the grid length.
 *
 * # Safety
 * `s` must be a live session and `buf` valid for `len` writes.
 */
enum cylvm_status cylvm_session_profile(const struct cylvm_session_t *s,
                                        uint32_t column,
                                        double *buf,
                                        size_t len);

/**
 * Picard sweeps taken by the last solve.
 *
 * # Safety
 * `s` must be a live session and `out` writable.
 */
enum cylvm_status cylvm_session_iterations(const struct cylvm_session_t *s, size_t *out);

/**
 * Certified sup-norm residual of the last solve.
 *
 * # Safety
 * `s` must be a live session and `out` writable.
 */
enum cylvm_status cylvm_session_residual(const struct cylvm_session_t *s, double *out);

/**
 * Envelope confinement verdict for the configured pinch mode. Solves internally, so the session
 * need not be solved first. `*pass` is 1 when the inequality holds and the outer sources vanish.
 *
 * # Safety
 * `s` must be a live session, `margin` and `pass` writable.
 */
enum cylvm_status cylvm_session_confinement(const struct cylvm_session_t *s,
                                            double *margin,
                                            int32_t *pass);

/**
 * Envelope `ξ(r)` for the constants `c₁, c₂ ≥ 0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum cylvm_status cylvm_envelope_xi(double c1, double c2, double r, double *out);

/**
 * Envelope `ζ(r)` for the constants `c₁, c₂ ≥ 0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum cylvm_status cylvm_envelope_zeta(double c1, double c2, double r, double *out);

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call on
 * the same thread.
 */
const char *cylvm_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CYLVM_H */
