#ifndef VEKUA_H
#define VEKUA_H

/* Generated by cbindgen from crates/vekua-ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VkStatus {
  VK_STATUS_OK = 0,
  VK_STATUS_NULL_POINTER = 1,
  VK_STATUS_INVALID_INPUT = 2,
  VK_STATUS_PARSE = 3,
  VK_STATUS_EVAL = 4,
  VK_STATUS_NUMERICAL = 5,
  VK_STATUS_CONFIG = 6,
  VK_STATUS_IO = 7,
  /**
   * The boundary problem has no solution for the given data; the handle is still
   * produced and carries the defects.
   */
  VK_STATUS_UNSOLVABLE = 8,
  VK_STATUS_BUFFER_TOO_SMALL = 9,
  VK_STATUS_PANIC = 10,
} VkStatus;

typedef struct VkExpr VkExpr;

typedef struct VkMesh VkMesh;

typedef struct VkRh VkRh;

typedef struct VkSolution VkSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes, including the terminating NUL, of the last error message on this
 * thread; 0 if there is none.
 */
size_t vk_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated).
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
enum VkStatus vk_last_error_message(char *buf, size_t len);

/**
 * Graded polar mesh of the disk `|z| < radius` with singular point `a`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum VkStatus vk_mesh_new(double radius,
                          double a_re,
                          double a_im,
                          size_t n_r,
                          size_t n_t,
                          double grading,
                          struct VkMesh **out);

/**
 * # Safety
 * `mesh` must come from [`vk_mesh_new`] and not be used afterwards. Null is ignored.
 */
void vk_mesh_free(struct VkMesh *mesh);

/**
 * Number of nodes; 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t vk_mesh_len(const struct VkMesh *mesh);

/**
 * Node coordinates, ring by ring outward.
 *
 * # Safety
 * `mesh` must be a live handle; `re`, `im` must point to `len` writable doubles.
 */
enum VkStatus vk_mesh_nodes(const struct VkMesh *mesh, double *re, double *im, size_t len);

/**
 * Parses an expression in `z`, `zbar`, `absz`, `w`, `absw`, `phi`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VkStatus vk_expr_parse(const char *text, struct VkExpr **out);

/**
 * # Safety
 * `expr` must come from this library and not be used afterwards. Null is ignored.
 */
void vk_expr_free(struct VkExpr *expr);

/**
 * Value at `z` with singular point `a`.
 *
 * # Safety
 * `expr` must be a live handle; `out_re`, `out_im` valid pointers.
 */
enum VkStatus vk_expr_eval(const struct VkExpr *expr,
                           double z_re,
                           double z_im,
                           double a_re,
                           double a_im,
                           double *out_re,
                           double *out_im);

/**
 * Symbolic `d/dzbar` as a new handle.
 *
 * # Safety
 * `expr` must be a live handle and `out` a valid pointer.
 */
enum VkStatus vk_expr_dbar(const struct VkExpr *expr, struct VkExpr **out);

/**
 * Canonical text of an expression as a string owned by the caller; release it with
 * [`vk_string_free`].
 *
 * # Safety
 * `expr` must be a live handle and `out` a valid pointer.
 */
enum VkStatus vk_expr_to_string(const struct VkExpr *expr, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void vk_string_free(char *s);

/**
 * Solves `V + P V = T F + (z - a) Phi` for `dV/dzbar + (A0 V + B0 conj V)/|z - a| = F`.
 * Null expressions stand for zero.
 *
 * # Safety
 * `mesh` must be a live handle, expressions null or live, `out` a valid pointer.
 */
enum VkStatus vk_solve(const struct VkMesh *mesh,
                       const struct VkExpr *a0,
                       const struct VkExpr *b0,
                       const struct VkExpr *f,
                       const struct VkExpr *phi,
                       double beta,
                       struct VkSolution **out);

/**
 * Solves the problem whose exact solution is `v_exact`, with `F` and the boundary
 * term derived from it.
 *
 * # Safety
 * As for [`vk_solve`]; `v_exact` must be live.
 */
enum VkStatus vk_solve_manufactured(const struct VkMesh *mesh,
                                    const struct VkExpr *v_exact,
                                    const struct VkExpr *a0,
                                    const struct VkExpr *b0,
                                    double beta,
                                    size_t n_b,
                                    struct VkSolution **out);

/**
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t vk_solution_len(const struct VkSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle; `re`, `im` must point to `len` writable doubles.
 */
enum VkStatus vk_solution_values(const struct VkSolution *sol, double *re, double *im, size_t len);

/**
 * Max residual of the differential equation over interior rings; NaN for null.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
double vk_solution_residual(const struct VkSolution *sol);

/**
 * # Safety
 * `sol` must come from this library and not be used afterwards. Null is ignored.
 */
void vk_solution_free(struct VkSolution *sol);

/**
 * Boundary problem `Re[t^{-m} V] = g` on a mesh centered at its singular point 0.
 * Returns [`VkStatus::Unsolvable`] together with a handle when the solvability
 * conditions fail.
 *
 * # Safety
 * `mesh`, `g` must be live handles, the others null or live, `out` a valid pointer.
 */
enum VkStatus vk_rh_solve(const struct VkMesh *mesh,
                          int m,
                          const struct VkExpr *g,
                          const struct VkExpr *a0,
                          const struct VkExpr *b0,
                          const struct VkExpr *f,
                          size_t n_b,
                          struct VkRh **out);

/**
 * 1 if solvable, 0 if not, -1 for null.
 *
 * # Safety
 * `rh` must be null or a live handle.
 */
int vk_rh_solvable(const struct VkRh *rh);

/**
 * # Safety
 * `rh` must be null or a live handle.
 */
double vk_rh_boundary_residual(const struct VkRh *rh);

/**
 * Number of homogeneous solutions (`2m - 1` for `m >= 1`, else 0).
 *
 * # Safety
 * `rh` must be null or a live handle.
 */
size_t vk_rh_basis_count(const struct VkRh *rh);

/**
 * Particular solution at the mesh nodes.
 *
 * # Safety
 * `rh` must be a live handle; `re`, `im` must point to `len` writable doubles.
 */
enum VkStatus vk_rh_particular(const struct VkRh *rh, double *re, double *im, size_t len);

/**
 * Homogeneous solution `index` at the mesh nodes.
 *
 * # Safety
 * `rh` must be a live handle; `re`, `im` must point to `len` writable doubles.
 */
enum VkStatus vk_rh_basis(const struct VkRh *rh, size_t index, double *re, double *im, size_t len);

/**
 * Real defect numbers (`2k + 1` of them for `m = -k <= 0`); `*count` receives the
 * number available even when `buf` is too small.
 *
 * # Safety
 * `rh` must be a live handle, `count` valid, `buf` null or `len` writable doubles.
 */
enum VkStatus vk_rh_defects(const struct VkRh *rh, double *buf, size_t len, size_t *count);

/**
 * # Safety
 * `rh` must come from this library and not be used afterwards. Null is ignored.
 */
void vk_rh_free(struct VkRh *rh);

/**
 * Runs a JSON configuration as the command-line tool would, without writing files.
 * `*report` receives the JSON report (free with [`vk_string_free`]) and `*exit_code`
 * the tool's exit code.
 *
 * # Safety
 * `config_json`, `mode` must be NUL-terminated strings; `report`, `exit_code` valid.
 */
enum VkStatus vk_run_json(const char *config_json, const char *mode, char **report, int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEKUA_H */
