/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef HJHOMOG_H
#define HJHOMOG_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HjStatus {
  HJ_STATUS_OK = 0,
  HJ_STATUS_NULL_POINTER = 1,
  HJ_STATUS_INVALID_UTF8 = 2,
  HJ_STATUS_INVALID_CONFIG = 3,
  HJ_STATUS_INVALID_SPEC = 4,
  HJ_STATUS_OUTSIDE_CLASS = 5,
  HJ_STATUS_UNDER_RESOLVED = 6,
  HJ_STATUS_OUT_OF_RANGE = 7,
  HJ_STATUS_DIVERGENCE = 8,
  HJ_STATUS_NON_CONVERGENCE = 9,
  HJ_STATUS_IO = 10,
  HJ_STATUS_PANIC = 11,
} HjStatus;

// Opaque Hamiltonian handle.
typedef struct HjSpec HjSpec;

// Opaque effective-Hamiltonian table handle.
typedef struct HjTable HjTable;

// Structure constants of a spec.
typedef struct HjAssumptions {
  double c0;
  double c1;
  double c2;
  double c3;
  double c4;
  double c5;
  double l;
  bool coercive_ok;
  bool lipschitz_ok;
} HjAssumptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a spec from JSON. `scheme_json` may be null for the default
// scheme settings.
//
// # Safety
// `spec_json` and a non-null `scheme_json` must be nul-terminated strings;
// `out` must be writable.
enum HjStatus hj_spec_from_json(const char *spec_json,
                                const char *scheme_json,
                                struct HjSpec **out);

// # Safety
// `spec` must come from [`hj_spec_from_json`] and not be used afterwards.
void hj_spec_free(struct HjSpec *spec);

// Number of grid axes the spec needs: space dimensions, plus one for `y`
// when the spec depends on it.
//
// # Safety
// `spec` must be a live handle or null.
uintptr_t hj_spec_axes(const struct HjSpec *spec);

// `F(x, y, t, p_x, p_y)`.
//
// # Safety
// `x` and `px` must hold `dims` values each; `value` must be writable.
enum HjStatus hj_spec_eval(const struct HjSpec *spec,
                           const double *x,
                           const double *px,
                           uintptr_t dims,
                           double y,
                           double t,
                           double py,
                           double *value);

// Sampled structure constants with the default probe settings.
//
// # Safety
// `spec` must be a live handle; `report` must be writable.
enum HjStatus hj_spec_assumptions(const struct HjSpec *spec, struct HjAssumptions *report);

// Ergodic constant from the discounted problems at `alphas` (strictly
// decreasing) on a grid with `cells[a]` cells per axis.
//
// # Safety
// `cells` holds `axes` values, `alphas` holds `n_alphas`; `lambda` is writable.
enum HjStatus hj_ergodic_discount(const struct HjSpec *spec,
                                  const uintptr_t *cells,
                                  uintptr_t axes,
                                  const double *alphas,
                                  uintptr_t n_alphas,
                                  double *lambda);

// Ergodic constant from the long-time slope over `horizon`.
//
// # Safety
// `cells` holds `axes` values; `lambda` is writable.
enum HjStatus hj_ergodic_longtime(const struct HjSpec *spec,
                                  const uintptr_t *cells,
                                  uintptr_t axes,
                                  double horizon,
                                  double *lambda);

// `F̄(P)` with the default discounts, no long-time cross-check.
//
// # Safety
// `cells` and `p` hold `axes` values each; `value` is writable.
enum HjStatus hj_effective_at(const struct HjSpec *spec,
                              const uintptr_t *cells,
                              const double *p,
                              uintptr_t axes,
                              double *value);

// Tabulates `F̄` on the lattice with `counts[a]` points on
// `[mins[a], maxs[a]]` per axis.
//
// # Safety
// `cells`, `mins`, `maxs`, `counts` hold `axes` values each; `out` is writable.
enum HjStatus hj_table_new(const struct HjSpec *spec,
                           const uintptr_t *cells,
                           const double *mins,
                           const double *maxs,
                           const uintptr_t *counts,
                           uintptr_t axes,
                           struct HjTable **out);

// # Safety
// `table` must come from [`hj_table_new`] and not be used afterwards.
void hj_table_free(struct HjTable *table);

// Number of lattice points.
//
// # Safety
// `table` must be a live handle or null.
uintptr_t hj_table_len(const struct HjTable *table);

// Copies the table values (lattice order, first axis fastest) into `values`.
//
// # Safety
// `values` must have room for `capacity` doubles.
enum HjStatus hj_table_values(const struct HjTable *table, double *values, uintptr_t capacity);

// Multilinear interpolation; fails with [`HjStatus::OutOfRange`] outside
// the lattice hull.
//
// # Safety
// `p` holds `axes` values; `value` is writable.
enum HjStatus hj_table_interpolate(const struct HjTable *table,
                                   const double *p,
                                   uintptr_t axes,
                                   double *value);

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *hj_last_error(void);

// Library version as a static nul-terminated string.
const char *hj_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJHOMOG_H */
