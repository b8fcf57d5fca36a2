#ifndef AFLOW_H
#define AFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum AflowStatus {
  AFLOW_STATUS_OK = 0,
  AFLOW_STATUS_NULL_POINTER = 1,
  AFLOW_STATUS_INVALID_ARGUMENT = 2,
  AFLOW_STATUS_CONFIG = 3,
  AFLOW_STATUS_IO = 4,
  AFLOW_STATUS_SNAPSHOT = 5,
  /**
   * The flow stopped before t_max; any returned state is the last accepted one.
   */
  AFLOW_STATUS_BREAKDOWN = 6,
  AFLOW_STATUS_NUMERIC = 7,
  AFLOW_STATUS_BUFFER_TOO_SMALL = 8,
  AFLOW_STATUS_PANIC = 9,
} AflowStatus;

/**
 * Parsed run configuration.
 */
typedef struct AflowConfig AflowConfig;

/**
 * Metric state at one time, with `alpha_prime` carried for snapshots.
 */
typedef struct AflowState AflowState;

/**
 * Threshold values in floating point; infinite bounds are `INFINITY`.
 */
typedef struct AflowThresholds {
  double shi_k_ge2_lp;
  double shi_k_ge2_sup;
  double shi_k_ge3_sup;
  double shi_k2_lp;
  double shi_k2_sup;
  double weighted_g_lp;
  double weighted_g_sup;
  double weighted_gprime_lp;
  double weighted_gprime_sup;
  double extension;
  double mu;
  double pi1;
  double pi2;
  /**
   * 1 when the extension certificate holds for the given `alpha_prime`.
   */
  int32_t extendable;
} AflowThresholds;

typedef struct AflowAuditSummary {
  uint32_t entries;
  uint32_t passed;
  uint32_t failed;
  uint32_t not_applicable;
  /**
   * Largest residual among judged entries.
   */
  double worst_residual;
} AflowAuditSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null; `needed` null or valid.
 */
enum AflowStatus aflow_last_error(char *buf, size_t len, size_t *needed);

/**
 * Parses configuration text into a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AflowStatus aflow_config_parse(const char *text, struct AflowConfig **out);

/**
 * Renders the configuration with every default filled in.
 *
 * # Safety
 * `cfg` must come from [`aflow_config_parse`]; buffer rules as in [`aflow_last_error`].
 */
enum AflowStatus aflow_config_render(const struct AflowConfig *cfg,
                                     char *buf,
                                     size_t len,
                                     size_t *needed);

/**
 * Sets the output directory used when `aflow_run` writes files.
 *
 * # Safety
 * `cfg` must be a live handle and `dir` a NUL-terminated string.
 */
enum AflowStatus aflow_config_set_output_dir(struct AflowConfig *cfg, const char *dir);

/**
 * # Safety
 * `cfg` must be null or a handle from [`aflow_config_parse`], freed once.
 */
void aflow_config_free(struct AflowConfig *cfg);

/**
 * Runs the configured flow. `write_output` enables the output directory.
 * On `AFLOW_STATUS_BREAKDOWN` the last accepted state is still returned.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum AflowStatus aflow_run(const struct AflowConfig *cfg,
                           bool write_output,
                           struct AflowState **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AflowStatus aflow_state_load(const char *path, struct AflowState **out);

/**
 * # Safety
 * `state` must be a live handle and `path` a NUL-terminated string.
 */
enum AflowStatus aflow_state_save(const struct AflowState *state, const char *path);

/**
 * # Safety
 * `state` must be null or a handle returned by this library, freed once.
 */
void aflow_state_free(struct AflowState *state);

/**
 * # Safety
 * `state` must be a live handle and `t` a valid pointer.
 */
enum AflowStatus aflow_state_time(const struct AflowState *state, double *t);

/**
 * Grid size, active-axis bitmask and number of lattice points.
 *
 * # Safety
 * `state` must be a live handle; output pointers valid.
 */
enum AflowStatus aflow_state_grid(const struct AflowState *state,
                                  uint32_t *n,
                                  uint8_t *mask,
                                  size_t *points);

/**
 * Copies `g_{p̄q}` as interleaved (re, im) doubles, point-major, then p̄,
 * then q: `18 * points` values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum AflowStatus aflow_state_metric(const struct AflowState *state, double *buf, size_t len);

/**
 * Evaluates all α′ thresholds for `(a0, B, C0, p)`; `alpha_prime` only
 * affects `extendable`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AflowStatus aflow_thresholds(double a0,
                                  double b,
                                  double c0,
                                  double p,
                                  double alpha_prime,
                                  struct AflowThresholds *out);

/**
 * Exact rational form (e.g. `1/14`) of the threshold entry `name`.
 *
 * # Safety
 * `name` NUL-terminated; buffer rules as in [`aflow_last_error`].
 */
enum AflowStatus aflow_threshold_exact(double a0,
                                       double b,
                                       double c0,
                                       double p,
                                       const char *name,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

/**
 * Runs the identity audit on the state's metric.
 *
 * # Safety
 * `state` must be a live handle and `out` a valid pointer.
 */
enum AflowStatus aflow_audit(const struct AflowState *state, struct AflowAuditSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFLOW_H */
