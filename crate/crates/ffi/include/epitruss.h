#ifndef EPITRUSS_H
#define EPITRUSS_H

/* Generated by cbindgen. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum EptCommand {
  EPT_COMMAND_SOLVE = 0,
  EPT_COMMAND_SWEEP_EPS = 1,
  EPT_COMMAND_BISECT = 2,
} EptCommand;

typedef enum EptStatus {
  EPT_STATUS_OK = 0,
  EPT_STATUS_NULL_POINTER = 1,
  EPT_STATUS_INVALID_ARGUMENT = 2,
  EPT_STATUS_DIMENSION_MISMATCH = 3,
  EPT_STATUS_NOT_PSD = 4,
  EPT_STATUS_INVALID_CONFIG = 5,
  EPT_STATUS_BRACKET = 6,
  EPT_STATUS_IO = 7,
  EPT_STATUS_PANIC = 8,
} EptStatus;

/**
 * Assembled truss model.
 */
typedef struct EptModel EptModel;

/**
 * Outcome of a run.
 */
typedef struct EptResult EptResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ept_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ept_last_error(void);

/**
 * `lambda_max(X, Y)` for PSD `X`, `Y`; `+inf` when a kernel direction of `Y`
 * is not in the kernel of `X`.
 *
 * # Safety
 * `x` and `y` point to `n * n` doubles; `out` is writable.
 */
enum EptStatus ept_lambda_max(size_t n, const double *x, const double *y, double *out_value);

/**
 * `lambda_min(X, Y)`; `+inf` when `Y = 0`.
 *
 * # Safety
 * As [`ept_lambda_max`].
 */
enum EptStatus ept_lambda_min(size_t n, const double *x, const double *y, double *out_value);

/**
 * `lambda_max(X, Y + eps I)` for `eps > 0`.
 *
 * # Safety
 * As [`ept_lambda_max`].
 */
enum EptStatus ept_lambda_max_eps(size_t n,
                                  const double *x,
                                  const double *y,
                                  double eps,
                                  double *out_value);

/**
 * Builds the model described by a run configuration (JSON text).
 *
 * # Safety
 * `config_json` is a NUL-terminated string; `out_model` is writable. The
 * handle is released with [`ept_model_free`].
 */
enum EptStatus ept_model_from_json(const char *config_json, struct EptModel **out_model);

/**
 * # Safety
 * `model` is null or a handle from [`ept_model_from_json`] not yet freed.
 */
void ept_model_free(struct EptModel *model);

/**
 * Number of design variables, 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t ept_model_num_vars(const struct EptModel *model);

/**
 * Number of free degrees of freedom, 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t ept_model_dim(const struct EptModel *model);

/**
 * Robust compliance `lambda_max(QQ', K(x))`.
 *
 * # Safety
 * `model` is a live handle, `x` points to `len` doubles, `out_value` is writable.
 */
enum EptStatus ept_model_psi(const struct EptModel *model,
                             const double *x,
                             size_t len,
                             double *out_value);

/**
 * Robust compliance with `K(x) + eps I`.
 *
 * # Safety
 * As [`ept_model_psi`].
 */
enum EptStatus ept_model_psi_eps(const struct EptModel *model,
                                 const double *x,
                                 size_t len,
                                 double eps,
                                 double *out_value);

/**
 * `lambda_max(M(x), K(x))`, the reciprocal of the squared fundamental frequency.
 *
 * # Safety
 * As [`ept_model_psi`].
 */
enum EptStatus ept_model_phi(const struct EptModel *model,
                             const double *x,
                             size_t len,
                             double *out_value);

/**
 * `lambda_max(M(x), K(x) + eps I)`.
 *
 * # Safety
 * As [`ept_model_psi`].
 */
enum EptStatus ept_model_phi_eps(const struct EptModel *model,
                                 const double *x,
                                 size_t len,
                                 double eps,
                                 double *out_value);

/**
 * Runs a configuration. Nothing is written to disk and `GENEIG_SEED` is
 * ignored; the seed comes from the configuration.
 *
 * # Safety
 * `config_json` is a NUL-terminated string; `out_result` is writable. The
 * handle is released with [`ept_result_free`].
 */
enum EptStatus ept_solve(const char *config_json,
                         enum EptCommand command,
                         struct EptResult **out_result);

/**
 * # Safety
 * `result` is null or a handle from [`ept_solve`] not yet freed.
 */
void ept_result_free(struct EptResult *result);

/**
 * Final solver objective and the exact objective at the final design.
 *
 * # Safety
 * `result` is a live handle; the outputs are writable.
 */
enum EptStatus ept_result_objective(const struct EptResult *result,
                                    double *out_final,
                                    double *out_exact);

/**
 * Copies up to `cap` entries of the final design into `buf` and stores the
 * full length in `out_len`. Pass `cap = 0` to query the length.
 *
 * # Safety
 * `result` is a live handle; `buf` has room for `cap` doubles.
 */
enum EptStatus ept_result_design(const struct EptResult *result,
                                 double *buf,
                                 size_t cap,
                                 size_t *out_len);

/**
 * The full result record as JSON, or null on failure. Release with
 * [`ept_string_free`].
 *
 * # Safety
 * `result` is null or a live handle.
 */
char *ept_result_to_json(const struct EptResult *result);

/**
 * # Safety
 * `s` is null or a string returned by this library not yet freed.
 */
void ept_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPITRUSS_H */
