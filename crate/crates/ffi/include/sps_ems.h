#ifndef SPS_EMS_H
#define SPS_EMS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Plant fidelity; `Default` keeps the mode written in the config.
 */
typedef enum SpsMode {
  SPS_MODE_DEFAULT = 0,
  SPS_MODE_DEVICE = 1,
  SPS_MODE_DISPATCH = 2,
} SpsMode;

typedef enum SpsQpStatus {
  SPS_QP_STATUS_OPTIMAL = 0,
  SPS_QP_STATUS_MAX_ITERATIONS = 1,
  SPS_QP_STATUS_INFEASIBLE_DETECTED = 2,
} SpsQpStatus;

typedef enum SpsSolveEvent {
  SPS_SOLVE_EVENT_OPTIMAL = 0,
  SPS_SOLVE_EVENT_RELAXED = 1,
  SPS_SOLVE_EVENT_MAX_ITERATIONS_RELAXED = 2,
  SPS_SOLVE_EVENT_FAILED = 3,
} SpsSolveEvent;

typedef enum SpsStatus {
  SPS_STATUS_OK = 0,
  SPS_STATUS_NULL_POINTER = 1,
  SPS_STATUS_INVALID_ARGUMENT = 2,
  SPS_STATUS_CONFIG_ERROR = 3,
  SPS_STATUS_DOMAIN_ERROR = 4,
  SPS_STATUS_DIMENSION_ERROR = 5,
  SPS_STATUS_RUN_ABORTED = 6,
  SPS_STATUS_IO_ERROR = 7,
  SPS_STATUS_OUT_OF_RANGE = 8,
  SPS_STATUS_PANIC = 9,
} SpsStatus;

/**
 * Opaque configuration handle.
 */
typedef struct SpsConfig SpsConfig;

/**
 * Opaque simulation log handle.
 */
typedef struct SpsSimLog SpsSimLog;

/**
 * One sampled row of a simulation log, SI units.
 */
typedef struct SpsRow {
  double t;
  double p_load;
  double cmd_pg;
  double cmd_pb;
  double p_g;
  double p_b;
  double v_c;
  double soc;
  /**
   * Ampere-seconds.
   */
  double ah_throughput;
  /**
   * Ampere-hours.
   */
  double q_loss;
  double loss_pct;
  double delta_q_pct;
  double slack;
  size_t iterations;
  enum SpsSolveEvent status;
} SpsRow;

typedef struct SpsSummary {
  double final_q_loss;
  double final_loss_pct;
  double final_delta_q_pct;
  double ah_throughput;
  double max_soc_deviation;
  double max_pg_step;
  double max_abs_pb;
  double mean_iterations;
  size_t ramp_saturated_pg_steps;
  size_t relaxed_steps;
  size_t failed_steps;
  size_t max_iterations;
} SpsSummary;

typedef struct SpsQpInfo {
  enum SpsQpStatus status;
  size_t iterations;
  double primal_residual;
  double dual_residual;
  double objective;
  bool polished;
} SpsQpInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sps_version(void);

/**
 * Creates a handle holding the shipped default configuration.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum SpsStatus sps_config_default(struct SpsConfig **out);

/**
 * Parses a JSON configuration document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writing.
 */
enum SpsStatus sps_config_from_json(const char *json, struct SpsConfig **out);

/**
 * Serializes the resolved configuration. Release the string with
 * [`sps_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` be valid for writing.
 */
enum SpsStatus sps_config_to_json(const struct SpsConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from this library not yet freed.
 */
void sps_config_free(struct SpsConfig *cfg);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void sps_string_free(char *s);

/**
 * Runs one scenario (`"scenario-1"`, `"scenario-2"`, `"scenario-3"` or
 * `"custom"`). When the run aborts, the partial log is still returned in
 * `out` together with `SPS_STATUS_RUN_ABORTED`.
 *
 * # Safety
 * `cfg` must be a live handle, `scenario` a NUL-terminated string and
 * `out` valid for writing.
 */
enum SpsStatus sps_run(const struct SpsConfig *cfg,
                       const char *scenario,
                       enum SpsMode mode,
                       struct SpsSimLog **out);

/**
 * # Safety
 * `log` must be NULL or a handle from this library not yet freed.
 */
void sps_simlog_free(struct SpsSimLog *log);

/**
 * # Safety
 * `log` must be a live handle and `out` valid for writing.
 */
enum SpsStatus sps_simlog_row_count(const struct SpsSimLog *log, size_t *out);

/**
 * Number of controller solves recorded.
 *
 * # Safety
 * `log` must be a live handle and `out` valid for writing.
 */
enum SpsStatus sps_simlog_solve_count(const struct SpsSimLog *log, size_t *out);

/**
 * # Safety
 * `log` must be a live handle and `out` valid for writing.
 */
enum SpsStatus sps_simlog_row(const struct SpsSimLog *log, size_t index, struct SpsRow *out);

/**
 * # Safety
 * `log` must be a live handle and `out` valid for writing.
 */
enum SpsStatus sps_simlog_summary(const struct SpsSimLog *log, struct SpsSummary *out);

/**
 * Writes the row log as CSV.
 *
 * # Safety
 * `log` must be a live handle and `path` a NUL-terminated string.
 */
enum SpsStatus sps_simlog_write_csv(const struct SpsSimLog *log, const char *path);

/**
 * One step of the charge balance: `soc - p_b ts / (v_c capacity_as)`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum SpsStatus sps_soc_update(double soc,
                              double p_b,
                              double v_c,
                              double ts,
                              double capacity_as,
                              double *out);

/**
 * Solves `min ½xᵀPx + cᵀx  s.t.  lo ≤ Ax ≤ up` with default tolerances.
 * Matrices are dense and row-major; infinite bounds are allowed. `y_out`
 * and `info` may be NULL.
 *
 * # Safety
 * `p` must hold `n*n` values, `c` and `x_out` `n`, `a` `m*n`, and `lo`,
 * `up`, `y_out` `m` each. With `m == 0` the constraint pointers may be
 * NULL.
 */
enum SpsStatus sps_qp_solve(size_t n,
                            size_t m,
                            const double *p,
                            const double *c,
                            const double *a,
                            const double *lo,
                            const double *up,
                            double *x_out,
                            double *y_out,
                            struct SpsQpInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPS_EMS_H */
