#ifndef EGOLOG_H
#define EGOLOG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EgologStatus {
  EGOLOG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EGOLOG_STATUS_NULL_ARGUMENT = 1,
  /**
   * Bad value (non-UTF-8 string, wrong length, unknown metric) or a
   * missing prerequisite such as the corpus or a checkpoint.
   */
  EGOLOG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Filesystem failure.
   */
  EGOLOG_STATUS_IO = 3,
  /**
   * Malformed TOML, JSON, CSV or WAV.
   */
  EGOLOG_STATUS_FORMAT = 4,
  EGOLOG_STATUS_CHECKPOINT = 5,
  /**
   * Degenerate or non-finite numerics, or a tensor backend failure.
   */
  EGOLOG_STATUS_NUMERIC = 6,
  EGOLOG_STATUS_LLM = 7,
  EGOLOG_STATUS_PANIC = 8,
} EgologStatus;

typedef enum EgologTrainTarget {
  EGOLOG_TRAIN_TARGET_TEMPORAL = 0,
  EGOLOG_TRAIN_TARGET_SCENARIO = 1,
  EGOLOG_TRAIN_TARGET_SPATIAL = 2,
  EGOLOG_TRAIN_TARGET_HAR = 3,
} EgologTrainTarget;

typedef enum EgologSuite {
  EGOLOG_SUITE_ACTIVITY = 0,
  EGOLOG_SUITE_SCENARIO = 1,
} EgologSuite;

/**
 * Named scalar results from eval, ablate or collab-run.
 */
typedef struct EgologMetrics EgologMetrics;

/**
 * A workspace root plus the config every pipeline call uses.
 */
typedef struct EgologSession EgologSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *egolog_version(void);

/**
 * Message of the last failed call on this thread, or null if none has
 * failed. Valid until the next failing call on the same thread.
 */
const char *egolog_last_error(void);

/**
 * Opens a session on `workspace`. `config_path` may be null, in which case
 * `<workspace>/egolog.toml` is used when present and the defaults otherwise;
 * relative paths resolve against the workspace.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum EgologStatus egolog_session_new(const char *workspace,
                                     const char *config_path,
                                     struct EgologSession **out);

/**
 * Replaces the session config with one parsed from TOML text.
 *
 * # Safety
 * `session` must come from [`egolog_session_new`]; `toml` must be NUL-terminated.
 */
enum EgologStatus egolog_session_set_config(struct EgologSession *session, const char *toml);

/**
 * Overrides the config seed, like `--seed` on the command line.
 *
 * # Safety
 * `session` must come from [`egolog_session_new`].
 */
enum EgologStatus egolog_session_set_seed(struct EgologSession *session, uint64_t seed);

/**
 * # Safety
 * `session` must come from [`egolog_session_new`] and not be used afterwards.
 * Null is ignored.
 */
void egolog_session_free(struct EgologSession *session);

/**
 * Renders the corpus. `out_windows` (nullable) receives the manifest size.
 *
 * # Safety
 * `session` must come from [`egolog_session_new`].
 */
enum EgologStatus egolog_generate(const struct EgologSession *session, size_t *out_windows);

/**
 * # Safety
 * `session` must come from [`egolog_session_new`].
 */
enum EgologStatus egolog_train(const struct EgologSession *session, enum EgologTrainTarget target);

/**
 * Evaluates the trained models and writes `reports/metrics.csv`.
 *
 * # Safety
 * `session` must come from [`egolog_session_new`]; `out` must be writable.
 * Release the result with [`egolog_metrics_free`].
 */
enum EgologStatus egolog_eval(const struct EgologSession *session, struct EgologMetrics **out);

/**
 * Runs an ablation suite; one metric per table row.
 *
 * # Safety
 * As [`egolog_eval`].
 */
enum EgologStatus egolog_ablate(const struct EgologSession *session,
                                enum EgologSuite suite,
                                struct EgologMetrics **out);

/**
 * One confidence-gated LLM round. Metrics: sequences, low_confidence,
 * queries, accepted, rejected, records_used, applied (0 or 1).
 *
 * # Safety
 * As [`egolog_eval`].
 */
enum EgologStatus egolog_collab_run(const struct EgologSession *session,
                                    struct EgologMetrics **out);

/**
 * Writes the daily-log report. `out_windows` (nullable) receives the number
 * of activity windows in the stream.
 *
 * # Safety
 * `session` must come from [`egolog_session_new`].
 */
enum EgologStatus egolog_daily_log(const struct EgologSession *session, size_t *out_windows);

/**
 * Number of entries; 0 for null.
 *
 * # Safety
 * `metrics` must be null or a live handle.
 */
size_t egolog_metrics_len(const struct EgologMetrics *metrics);

/**
 * Name of entry `index`, or null when out of range. Owned by the handle.
 *
 * # Safety
 * `metrics` must be null or a live handle.
 */
const char *egolog_metrics_name(const struct EgologMetrics *metrics, size_t index);

/**
 * # Safety
 * `metrics` must be a live handle; `out` must be writable.
 */
enum EgologStatus egolog_metrics_value(const struct EgologMetrics *metrics,
                                       size_t index,
                                       double *out);

/**
 * Looks a metric up by name; `EGOLOG_STATUS_INVALID_ARGUMENT` if absent.
 *
 * # Safety
 * `metrics` must be a live handle; `name` NUL-terminated; `out` writable.
 */
enum EgologStatus egolog_metrics_get(const struct EgologMetrics *metrics,
                                     const char *name,
                                     double *out);

/**
 * # Safety
 * `metrics` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void egolog_metrics_free(struct EgologMetrics *metrics);

/**
 * GCC-PHAT time difference of arrival `t_left - t_right` in seconds, from
 * two equally long channels of at least one 25 ms frame. Lags are searched
 * in 1/48000 s steps over +-32 steps and refined to sub-step precision.
 *
 * # Safety
 * `left` and `right` must each point to `len` floats; `out_seconds` must be
 * writable.
 */
enum EgologStatus egolog_estimate_tdoa(const float *left,
                                       const float *right,
                                       size_t len,
                                       uint32_t sample_rate,
                                       double *out_seconds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EGOLOG_H */
