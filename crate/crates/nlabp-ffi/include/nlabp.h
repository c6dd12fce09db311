#ifndef NLABP_H
#define NLABP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NLABP_OK 0

#define NLABP_ERR_NULL -1

#define NLABP_ERR_DOMAIN -2

#define NLABP_ERR_PRECONDITION -3

#define NLABP_ERR_NONCONVERGENCE -4

#define NLABP_ERR_BUFFER -5

#define NLABP_ERR_IO -6

#define NLABP_ERR_PANIC -7

/**
 * Operators selectable in [`nlabp_operator`].
 */
typedef enum {
  NLABP_OPERATOR_FRAC_LAPLACIAN = 0,
  NLABP_OPERATOR_E_SIGMA = 1,
  NLABP_OPERATOR_PUCCI_MINUS = 2,
  NLABP_OPERATOR_PUCCI_PLUS = 3,
} NlabpOperator;

typedef struct NlabpCertificate NlabpCertificate;

typedef struct NlabpEnvelope NlabpEnvelope;

typedef struct NlabpField NlabpField;

typedef struct NlabpGrid NlabpGrid;

typedef struct NlabpParams NlabpParams;

typedef struct NlabpPlan NlabpPlan;

/**
 * Headline numbers of a certificate.
 */
typedef struct {
  double theorem_lhs;
  double theorem_rhs_without_c;
  /**
   * NaN when the right-hand side vanishes.
   */
  double empirical_c;
  size_t contact_nodes;
  /**
   * 1 when every step of the proof chain held.
   */
  int32_t passed;
} NlabpCertificateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating to `len` bytes. Returns the full
 * message length excluding the terminator.
 */
int32_t nlabp_last_error(char *buf, size_t len);

/**
 * `n ∈ {1,2,3}`, `0 < sigma < 2`, `0 < lambda <= big_lambda`.
 */
int32_t nlabp_params_new(size_t n,
                         double sigma,
                         double lambda,
                         double big_lambda,
                         NlabpParams **result);

void nlabp_params_free(NlabpParams *p);

/**
 * Grid `[-half_width, half_width]^n` with `points` nodes per axis.
 */
int32_t nlabp_grid_cube(size_t n, double half_width, size_t points, NlabpGrid **result);

int32_t nlabp_grid_len(const NlabpGrid *grid, size_t *len);

int32_t nlabp_grid_spacing(const NlabpGrid *grid, double *h);

/**
 * Writes the coordinates of node `index` into `x[0..n]`.
 */
int32_t nlabp_grid_point(const NlabpGrid *grid, size_t index, double *x);

void nlabp_grid_free(NlabpGrid *g);

/**
 * Field with zero exterior from `len == grid length` node values in grid
 * order (last axis fastest).
 */
int32_t nlabp_field_new(const NlabpGrid *grid,
                        const double *values,
                        size_t len,
                        NlabpField **result);

/**
 * Copies the node values into `buf`, which must hold `len >= grid length`.
 */
int32_t nlabp_field_values(const NlabpField *field, double *buf, size_t len);

void nlabp_field_free(NlabpField *f);

/**
 * Quadrature plan for grids of spacing `h` in dimension `n`; integrals are
 * truncated at `far_cutoff` and the remainder handled by the tail rule.
 */
int32_t nlabp_plan_new(size_t n, double h, double far_cutoff, NlabpPlan **result);

void nlabp_plan_free(NlabpPlan *q);

int32_t nlabp_riesz_constant(size_t n, double alpha, double *value);

/**
 * Evaluates `op` on `field` at the grid node `x[0..n]`.
 */
int32_t nlabp_operator(NlabpOperator op,
                       const NlabpField *field,
                       const double *x,
                       const NlabpParams *params,
                       const NlabpPlan *plan,
                       double *value);

/**
 * `((1/n) inf{Tr(AW) : A ⪰ 0, det A = 1})ⁿ` for the symmetric `n x n`
 * matrix stored row-major in `w`; equals `det W` when `W ⪰ 0`.
 */
int32_t nlabp_det_inf(const double *w, size_t n, double *value);

/**
 * Penalized σ-envelope of `obstacle` with penalty `epsilon` reduced
 * geometrically over `levels` halvings.
 */
int32_t nlabp_envelope_solve(const NlabpField *obstacle,
                             const NlabpParams *params,
                             const NlabpPlan *plan,
                             double epsilon,
                             size_t levels,
                             NlabpEnvelope **result);

/**
 * Copies the envelope values into `buf` (`len >= grid length`).
 */
int32_t nlabp_envelope_gamma(const NlabpEnvelope *env, double *buf, size_t len);

int32_t nlabp_envelope_contact_count(const NlabpEnvelope *env, size_t *count);

void nlabp_envelope_free(NlabpEnvelope *e);

/**
 * Certificate for `u` against the right-hand side `f`, default options.
 */
int32_t nlabp_abp_certificate(const NlabpField *u,
                              const NlabpField *f,
                              const NlabpParams *params,
                              const NlabpPlan *plan,
                              NlabpCertificate **result);

int32_t nlabp_certificate_summary(const NlabpCertificate *cert, NlabpCertificateSummary *summary);

/**
 * Writes the full certificate as NUL-terminated JSON. `needed` receives
 * the buffer size required including the terminator; a short buffer
 * gives [`NLABP_ERR_BUFFER`] and leaves `buf` untouched.
 */
int32_t nlabp_certificate_json(const NlabpCertificate *cert, char *buf, size_t len, size_t *needed);

void nlabp_certificate_free(NlabpCertificate *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLABP_H */
