#ifndef CURVPATH_H
#define CURVPATH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_UTF8 = 2,
  CP_STATUS_INVALID_ARGUMENT = 3,
  CP_STATUS_CONFIG = 4,
  CP_STATUS_GEOMETRY = 5,
  CP_STATUS_NUMERICAL = 6,
  CP_STATUS_IO = 7,
  CP_STATUS_OUT_OF_RANGE = 8,
  CP_STATUS_PANIC = 9,
} CpStatus;

typedef enum CpCommand {
  CP_COMMAND_CHECK = 0,
  CP_COMMAND_ESTIMATE = 1,
  CP_COMMAND_SWEEP = 2,
} CpCommand;

typedef enum CpVerdict {
  CP_VERDICT_HOLDS = 0,
  CP_VERDICT_VIOLATED = 1,
  CP_VERDICT_INCONCLUSIVE = 2,
  /**
   * Estimates and series rows.
   */
  CP_VERDICT_NONE = 3,
} CpVerdict;

typedef enum CpFormat {
  CP_FORMAT_CSV = 0,
  CP_FORMAT_JSON = 1,
} CpFormat;

/**
 * Parsed run configuration.
 */
typedef struct CpConfig CpConfig;

/**
 * A manifold preset.
 */
typedef struct CpModel CpModel;

/**
 * Result of a run.
 */
typedef struct CpReport CpReport;

/**
 * Numeric part of a report row; empty cells are NaN.
 */
typedef struct CpRow {
  double horizon;
  double lhs;
  double lhs_stderr;
  double rhs;
  double rhs_stderr;
  double margin;
  enum CpVerdict verdict;
} CpRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cp_last_error_message(void);

/**
 * Release a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void cp_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *cp_version(void);

/**
 * Parse configuration text (`key = value` lines or a JSON report).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CpStatus cp_config_parse(const char *text, struct CpConfig **out);

/**
 * Set one key, overriding any earlier value.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum CpStatus cp_config_set(struct CpConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void cp_config_free(struct CpConfig *cfg);

/**
 * Resolve and run a configuration.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum CpStatus cp_run(const struct CpConfig *cfg, enum CpCommand command, struct CpReport **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void cp_report_free(struct CpReport *report);

/**
 * Process exit code of the report: 0 holds, 2 violated, 3 inconclusive.
 *
 * # Safety
 * `report` must be a live handle.
 */
int cp_report_exit_code(const struct CpReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum CpStatus cp_report_row_count(const struct CpReport *report, size_t *out);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum CpStatus cp_report_row(const struct CpReport *report, size_t index, struct CpRow *out);

/**
 * Render the report; free the result with [`cp_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum CpStatus cp_report_render(const struct CpReport *report, enum CpFormat format, char **out);

/**
 * Build a preset. `param` is the radius for `sphere` / `hyperbolic`, the
 * drift rate for `ou`, and ignored for `euclidean`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CpStatus cp_model_new(const char *name, size_t dim, double param, struct CpModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cp_model_free(struct CpModel *model);

/**
 * Constant `c` with `Ric_Z = c g`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum CpStatus cp_model_einstein_constant(const struct CpModel *model, double *out);

/**
 * Sampled infimum of `Ric_Z` over the ball of `radius` around the chart-0
 * point `x` (`dim` coordinates).
 *
 * # Safety
 * `model` must be a live handle, `x` point to `dim` doubles and `out` be valid.
 */
enum CpStatus cp_model_curvature_inf(const struct CpModel *model,
                                     const double *x,
                                     size_t dim,
                                     double radius,
                                     size_t samples,
                                     uint64_t seed,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CURVPATH_H */
