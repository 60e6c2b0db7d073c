#ifndef WASSDRO_H
#define WASSDRO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum WdStatus {
  WD_STATUS_OK = 0,
  WD_STATUS_NULL_POINTER = 1,
  WD_STATUS_INVALID_UTF8 = 2,
  WD_STATUS_DIMENSION = 3,
  WD_STATUS_PRECONDITION = 4,
  WD_STATUS_INVALID_INPUT = 5,
  WD_STATUS_PARSE = 6,
  WD_STATUS_SOLVER = 7,
  WD_STATUS_NOT_SUFFICIENTLY_EXPENSIVE = 8,
  WD_STATUS_UNBOUNDED_SUPPORT = 9,
  WD_STATUS_NO_FEASIBLE_CANDIDATE = 10,
  WD_STATUS_UNSUPPORTED_CONE = 11,
  WD_STATUS_IO = 12,
  WD_STATUS_BUFFER_TOO_SMALL = 13,
  WD_STATUS_PANIC = 14,
  WD_STATUS_OTHER = 15,
} WdStatus;

/*
 Conic file formats.
 */
typedef enum WdFormat {
  WD_FORMAT_CBF = 0,
  WD_FORMAT_SDPA = 1,
} WdFormat;

/*
 Termination of a solve.
 */
typedef enum WdSolveStatus {
  WD_SOLVE_STATUS_OPTIMAL = 0,
  WD_SOLVE_STATUS_PRIMAL_INFEASIBLE = 1,
  WD_SOLVE_STATUS_DUAL_INFEASIBLE = 2,
  WD_SOLVE_STATUS_NUMERICAL_TROUBLE = 3,
  WD_SOLVE_STATUS_ITER_LIMIT = 4,
} WdSolveStatus;

/*
 Opaque two-stage instance.
 */
typedef struct WdProblem WdProblem;

/*
 Opaque solve result.
 */
typedef struct WdSolution WdSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next call into the library on the same thread.
 */
const char *wd_last_error(void);

/*
 Library version as a static string.
 */
const char *wd_version(void);

/*
 Parses an instance from a JSON string.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WdStatus wd_problem_from_json(const char *json, struct WdProblem **out);

/*
 Loads an instance from a JSON file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WdStatus wd_problem_load(const char *path, struct WdProblem **out);

/*
 Releases an instance. Null is ignored.

 # Safety
 `p` must come from `wd_problem_from_json` or `wd_problem_load` and not be freed twice.
 */
void wd_problem_free(struct WdProblem *p);

/*
 First-stage dimension, uncertainty dimension and sample count.

 # Safety
 `p` must be a live handle; each output pointer may be null.
 */
enum WdStatus wd_problem_dims(const struct WdProblem *p, size_t *n1, size_t *k, size_t *samples);

/*
 Writes the number of validation findings to `findings` (0 means valid)
 and, if `report` is non-null, the JSON report to `*report`.

 # Safety
 `p` must be a live handle and `findings` a valid pointer.
 */
enum WdStatus wd_problem_validate(const struct WdProblem *p, size_t *findings, char **report);

/*
 Solves the copositive program with regularization `delta`. With `x` null
 the first stage is optimized; otherwise the worst-case cost of the
 `x_len` given values is bounded. An infeasible program is not an error:
 the solution reports its status and an infinite objective.

 # Safety
 `p` must be a live handle, `x` null or `x_len` readable doubles, `out` valid.
 */
enum WdStatus wd_solve_copositive(const struct WdProblem *p,
                                  double delta,
                                  const double *x,
                                  size_t x_len,
                                  struct WdSolution **out);

/*
 Solves the exact linear program of a 1-Wasserstein instance.

 # Safety
 `p` must be a live handle and `out` a valid pointer.
 */
enum WdStatus wd_solve_lp(const struct WdProblem *p, struct WdSolution **out);

/*
 Exports the copositive program (first stage optimized) in `format`.

 # Safety
 `p` must be a live handle and `out` a valid pointer; free `*out` with `wd_string_free`.
 */
enum WdStatus wd_export(const struct WdProblem *p, double delta, enum WdFormat format, char **out);

/*
 Solve status of a solution. Returns `NumericalTrouble` for a null handle.

 # Safety
 `s` must be null or a live handle.
 */
enum WdSolveStatus wd_solution_status(const struct WdSolution *s);

/*
 Objective value including the first-stage cost; NaN for a null handle.

 # Safety
 `s` must be null or a live handle.
 */
double wd_solution_objective(const struct WdSolution *s);

/*
 Copies the first-stage decision into `buf`. `needed` receives its length;
 if `len` is smaller, nothing is copied and `BufferTooSmall` is returned.

 # Safety
 `s` must be a live handle, `buf` null or `len` writable doubles, `needed` valid.
 */
enum WdStatus wd_solution_x(const struct WdSolution *s, double *buf, size_t len, size_t *needed);

/*
 Full solution record as JSON; free with `wd_string_free`. Null for a null handle.

 # Safety
 `s` must be null or a live handle.
 */
char *wd_solution_to_json(const struct WdSolution *s);

/*
 Releases a solution. Null is ignored.

 # Safety
 `s` must come from a solve function and not be freed twice.
 */
void wd_solution_free(struct WdSolution *s);

/*
 Releases a string returned by the library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void wd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WASSDRO_H */
