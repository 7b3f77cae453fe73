#ifndef DSM_H
#define DSM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum DsmStatus {
  DSM_STATUS_OK = 0,
  DSM_STATUS_NULL_POINTER = 1,
  DSM_STATUS_INVALID_ARGUMENT = 2,
  // Dataset missing, malformed or inconsistent.
  DSM_STATUS_DATA_ERROR = 3,
  // `dsm_env_step` after the last hour; call `dsm_env_reset`.
  DSM_STATUS_EPISODE_FINISHED = 4,
  // A caller buffer has the wrong length.
  DSM_STATUS_LENGTH_MISMATCH = 5,
  // Metric computation failed, e.g. a trace not aligned to whole days.
  DSM_STATUS_METRICS_ERROR = 6,
  // A Rust panic was caught at the boundary.
  DSM_STATUS_INTERNAL = 7,
} DsmStatus;

// A loaded or generated district.
typedef struct DsmDataset DsmDataset;

// A simulator over its own copy of a district.
typedef struct DsmEnv DsmEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *dsm_last_error(void);

// Loads a dataset directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DsmStatus dsm_dataset_load(const char *path, struct DsmDataset **out);

// Generates a synthetic district of `buildings` buildings over `days` days.
//
// # Safety
// `out` must be a valid pointer.
enum DsmStatus dsm_dataset_generate(uint32_t buildings,
                                    uint32_t days,
                                    uint64_t seed,
                                    struct DsmDataset **out);

// Releases a dataset. NULL is ignored.
//
// # Safety
// `dataset` must come from this library and not be used afterwards.
void dsm_dataset_free(struct DsmDataset *dataset);

// Number of hourly steps, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t dsm_dataset_horizon(const struct DsmDataset *dataset);

// Number of buildings, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t dsm_dataset_building_count(const struct DsmDataset *dataset);

// Creates a simulator with default plant parameters. The dataset is copied,
// so it may be freed while the simulator lives.
//
// # Safety
// `dataset` must be a live handle and `out` a valid pointer.
enum DsmStatus dsm_env_new(const struct DsmDataset *dataset, struct DsmEnv **out);

// Releases a simulator. NULL is ignored.
//
// # Safety
// `env` must come from this library and not be used afterwards.
void dsm_env_free(struct DsmEnv *env);

// Length of the observation vector, or 0 for NULL.
//
// # Safety
// `env` must be NULL or a live handle.
size_t dsm_env_observation_len(const struct DsmEnv *env);

// Length of the action vector, or 0 for NULL.
//
// # Safety
// `env` must be NULL or a live handle.
size_t dsm_env_action_len(const struct DsmEnv *env);

// Hour of day (1-24) of the next step, or 0 for NULL.
//
// # Safety
// `env` must be NULL or a live handle.
uint8_t dsm_env_hour(const struct DsmEnv *env);

// Restarts the episode and writes the first observation.
//
// # Safety
// `env` must be a live handle and `obs` point to `obs_len` writable doubles.
enum DsmStatus dsm_env_reset(struct DsmEnv *env, double *obs, size_t obs_len);

// Advances one hour.
//
// `e_total` receives the district consumption of the step and `done` is
// set once the final hour has been simulated. Either may be NULL.
//
// # Safety
// `env` must be a live handle, `actions` point to `action_len` doubles and
// `obs` to `obs_len` writable doubles.
enum DsmStatus dsm_env_step(struct DsmEnv *env,
                            const double *actions,
                            size_t action_len,
                            double *obs,
                            size_t obs_len,
                            double *e_total,
                            bool *done);

// Default rule-based action for the simulator's next hour.
//
// # Safety
// `env` must be a live handle and `out` point to `len` writable doubles.
enum DsmStatus dsm_env_rbc_action(const struct DsmEnv *env, double *out, size_t len);

// Scores `agent` against `baseline`, two hourly traces of `len` values.
// `out` receives six values: the five ratios in score-table column order, then the
// average score.
//
// # Safety
// `agent` and `baseline` must point to `len` doubles and `out` to 6 writable doubles.
enum DsmStatus dsm_score(const double *agent, const double *baseline, size_t len, double *out);

// Reward of one step under the default reward settings.
//
// # Safety
// `e_i` must point to `n_buildings` doubles, `actions` to `n_actions`
// doubles and `out` must be writable.
enum DsmStatus dsm_reward(double e_total,
                          const double *e_i,
                          size_t n_buildings,
                          uint8_t hour,
                          const double *actions,
                          size_t n_actions,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSM_H */
