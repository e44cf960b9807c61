#ifndef PREDRESS_H
#define PREDRESS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PredressStatus {
  PREDRESS_STATUS_OK = 0,
  PREDRESS_STATUS_NULL_ARGUMENT = 1,
  PREDRESS_STATUS_INVALID_ARGUMENT = 2,
  PREDRESS_STATUS_LIMIT_VIOLATION = 3,
  PREDRESS_STATUS_NOT_CONVERGED = 4,
  PREDRESS_STATUS_NON_FINITE = 5,
  PREDRESS_STATUS_IO = 6,
  PREDRESS_STATUS_PARSE = 7,
  PREDRESS_STATUS_ESTIMATOR = 8,
  PREDRESS_STATUS_PANIC = 9,
} PredressStatus;

// Which per-sample quantity [`predress_trajectory_copy`] extracts.
typedef enum PredressField {
  PREDRESS_FIELD_POSITION = 0,
  PREDRESS_FIELD_VELOCITY = 1,
  PREDRESS_FIELD_ACCELERATION = 2,
} PredressField;

typedef struct PredressLimits PredressLimits;

typedef struct PredressModel PredressModel;

typedef struct PredressTrajectory PredressTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Owned by the
// library; valid until the next call on this thread.
const char *predress_last_error(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PredressStatus predress_model_load(const char *path, struct PredressModel **out);

// # Safety
// `model` must be a valid model handle and `out` a valid pointer.
enum PredressStatus predress_model_n_channels(const struct PredressModel *model, size_t *out);

// # Safety
// `model` must be null or a handle from [`predress_model_load`], freed once.
void predress_model_free(struct PredressModel *model);

// Limits for `n` channels from four arrays of length `n`.
//
// # Safety
// The arrays must hold `n` values each and `out` must be a valid pointer.
enum PredressStatus predress_limits_new(size_t n,
                                        const double *pos_lo,
                                        const double *pos_hi,
                                        const double *vel_max,
                                        const double *acc_max,
                                        double safety_scale,
                                        struct PredressLimits **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PredressStatus predress_limits_load(const char *path, struct PredressLimits **out);

// # Safety
// `limits` must be null or a handle from this library, freed once.
void predress_limits_free(struct PredressLimits *limits);

// Integrates `model` from its start to its goal. `limits` may be null for
// an unconstrained rollout.
//
// # Safety
// Handles must be valid (or null for `limits`); `out` must be a valid pointer.
enum PredressStatus predress_rollout(const struct PredressModel *model,
                                     const struct PredressLimits *limits,
                                     double dt,
                                     struct PredressTrajectory **out);

// # Safety
// `traj` must be a valid trajectory handle; outputs must be valid pointers.
enum PredressStatus predress_trajectory_shape(const struct PredressTrajectory *traj,
                                              size_t *n_samples,
                                              size_t *n_channels,
                                              double *dt);

// Copies one quantity for every sample, row-major (`n_samples × n_channels`).
// `capacity` is the length of `buf` in doubles and must cover the whole table.
//
// # Safety
// `traj` must be valid and `buf` must hold `capacity` doubles.
enum PredressStatus predress_trajectory_copy(const struct PredressTrajectory *traj,
                                             enum PredressField field,
                                             double *buf,
                                             size_t capacity);

// # Safety
// `traj` must be null or a handle from this library, freed once.
void predress_trajectory_free(struct PredressTrajectory *traj);

// Symmetric midpoint projection of two points to at most `d_max` apart.
//
// # Safety
// All pointers must reference three doubles.
enum PredressStatus predress_enforce_max_distance(const double *left,
                                                  const double *right,
                                                  double d_max,
                                                  double *out_left,
                                                  double *out_right);

// Rotation vector `log(q_to ⊗ q_from⁻¹)`; quaternions are `[w, x, y, z]`.
//
// # Safety
// `q_from` and `q_to` must reference four doubles, `out` three.
enum PredressStatus predress_orientation_displacement(const double *q_from,
                                                      const double *q_to,
                                                      double *out);

// Runs the experiment described by the config file and returns the batch
// report as JSON. `n_episodes = 0` keeps the configured count; a null
// `seed` keeps the configured seed. Runs sequentially.
//
// # Safety
// `config_path` must be NUL-terminated, `seed` null or valid, `out` valid.
enum PredressStatus predress_simulate(const char *config_path,
                                      size_t n_episodes,
                                      const uint64_t *seed,
                                      char **out);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void predress_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREDRESS_H */
