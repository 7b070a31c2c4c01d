#ifndef GKP_FTQC_H
#define GKP_FTQC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkpBoundary {
  GkpBoundary_Planar = 0,
  GkpBoundary_Periodic = 1,
} GkpBoundary;

typedef enum GkpLatticeKind {
  /**
   * Rotated planar code, `d*d` qubits.
   */
  GkpLatticeKind_Surface2d = 0,
  /**
   * Cubic cell lattice for repeated syndrome rounds.
   */
  GkpLatticeKind_Cells3d = 1,
} GkpLatticeKind;

typedef enum GkpMode {
  GkpMode_Digital = 0,
  GkpMode_Analog = 1,
} GkpMode;

typedef enum GkpNoiseModel {
  GkpNoiseModel_CodeCapacity = 0,
  GkpNoiseModel_Phenomenological = 1,
  GkpNoiseModel_Construction = 2,
} GkpNoiseModel;

typedef enum GkpStatus {
  GkpStatus_Ok = 0,
  GkpStatus_InvalidParameter = 1,
  GkpStatus_NullPointer = 2,
  GkpStatus_LatticeSize = 3,
  GkpStatus_SizeMismatch = 4,
  GkpStatus_Degenerate = 5,
  GkpStatus_DecoderFailure = 6,
  GkpStatus_Io = 7,
  GkpStatus_Panic = 8,
} GkpStatus;

/**
 * Opaque lattice handle.
 */
typedef struct GkpLattice GkpLattice;

/**
 * Result of one Monte Carlo point.
 */
typedef struct GkpRatePoint {
  uint64_t failures;
  uint64_t trials;
  double p_logical;
  double ci_low;
  double ci_high;
} GkpRatePoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t gkp_last_error(char *buf, uintptr_t len);

/**
 * Standard deviation for a squeezing level in dB.
 */
double gkp_sigma_from_db(double squeezing_db);

/**
 * Probability that one quadrature is binned correctly.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum GkpStatus gkp_p_correct(double sigma, double *out);

/**
 * Matching weight of a qubit with measured deviation `delta`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum GkpStatus gkp_edge_weight(double delta, double sigma, double cap, double *out);

/**
 * Postselected error probability and success probability for outcome
 * variance `variance`.
 *
 * # Safety
 * `e_post` and `p_suc` must be null or valid for writes.
 */
enum GkpStatus gkp_postselect(double v_up, double variance, double *e_post, double *p_suc);

/**
 * Build a lattice; on success `*out` owns a handle.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum GkpStatus gkp_lattice_new(enum GkpLatticeKind kind,
                               uintptr_t d,
                               enum GkpBoundary boundary,
                               struct GkpLattice **out);

/**
 * # Safety
 * `lattice` must be null or a handle from [`gkp_lattice_new`] not yet freed.
 */
void gkp_lattice_free(struct GkpLattice *lattice);

/**
 * Number of qubits (matching-graph edges); 0 for a null handle.
 *
 * # Safety
 * `lattice` must be null or a live handle.
 */
uintptr_t gkp_lattice_num_qubits(const struct GkpLattice *lattice);

/**
 * Number of checks (matching-graph nodes); 0 for a null handle.
 *
 * # Safety
 * `lattice` must be null or a live handle.
 */
uintptr_t gkp_lattice_num_checks(const struct GkpLattice *lattice);

/**
 * Decode one error configuration.
 *
 * `flips` and `correction` hold `n` bytes (0 or 1) in qubit order.
 * `weights` holds `n` matching weights and may be null in digital mode.
 * `*failed` is set to 1 on a logical error, else 0.
 *
 * # Safety
 * Pointers must be valid for `n` elements (or null where allowed).
 */
enum GkpStatus gkp_decode(const struct GkpLattice *lattice,
                          const uint8_t *flips,
                          const double *weights,
                          uintptr_t n,
                          enum GkpMode mode,
                          uint8_t *correction,
                          int32_t *failed);

/**
 * Estimate the logical error rate of one (model, d, sigma) point with
 * default settings (planar boundary, weight cap 25).
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum GkpStatus gkp_run_plan(enum GkpNoiseModel model,
                            uintptr_t d,
                            double sigma,
                            enum GkpMode mode,
                            uint64_t trials,
                            uint64_t seed,
                            struct GkpRatePoint *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GKP_FTQC_H */
