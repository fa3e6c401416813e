#ifndef MSL_H
#define MSL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MslStatus {
  MSL_STATUS_OK = 0,
  MSL_STATUS_NULL_POINTER = 1,
  MSL_STATUS_INVALID_ARGUMENT = 2,
  MSL_STATUS_SHAPE_MISMATCH = 3,
  MSL_STATUS_MODE_MISMATCH = 4,
  MSL_STATUS_DIVERGENCE = 5,
  MSL_STATUS_OUT_OF_RANGE = 6,
  MSL_STATUS_PANIC = 7,
  MSL_STATUS_INTERNAL = 8,
} MslStatus;

/**
 * Why a trajectory stopped.
 */
typedef enum MslStopReason {
  MSL_STOP_REASON_MAX_ITERS = 0,
  MSL_STOP_REASON_TRAIN_LOSS = 1,
  MSL_STOP_REASON_TEST_ERROR = 2,
} MslStopReason;

/**
 * Planted low-rank matrix with its singular factors.
 */
typedef struct MslGroundTruth MslGroundTruth;

/**
 * Measurement operator, empirical or population.
 */
typedef struct MslOperator MslOperator;

/**
 * A finished gradient-descent run.
 */
typedef struct MslTrajectory MslTrajectory;

/**
 * Gradient-descent settings. Obtain defaults from [`msl_gd_config_default`].
 */
typedef struct MslGdConfig {
  /**
   * Absolute step size.
   */
  double mu;
  /**
   * Initialization scale.
   */
  double alpha;
  /**
   * Factor width.
   */
  size_t k;
  size_t max_iters;
  size_t record_every;
  /**
   * Stop once the train loss drops below this; `<= 0` disables the check.
   */
  double stop_train_loss;
  /**
   * Initialization seed.
   */
  uint64_t seed;
} MslGdConfig;

/**
 * One recorded iteration. Metrics that are undefined at that iterate are NaN.
 */
typedef struct MslRecord {
  size_t iter;
  double train_loss;
  double rel_test_error_fro;
  double rel_test_error_spec;
  double sigma_min_signal;
  double nuisance_norm;
  double angle_norm;
  double imbalance_norm;
  double imbalance_nuisance;
  double imbalance_signal_angle;
  double vw_imbalance;
  double delta_norm;
  double z_norm;
  double sigma_min_lz;
} MslRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *msl_last_error(void);

/**
 * Library version string (static storage).
 */
const char *msl_version(void);

/**
 * Random rank-`r` ground truth of shape `n1 x n2` with unit spectral norm.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum MslStatus msl_ground_truth_new(size_t n1,
                                    size_t n2,
                                    size_t r,
                                    uint64_t seed,
                                    struct MslGroundTruth **out);

/**
 * Releases a ground truth; NULL is ignored.
 *
 * # Safety
 * `gt` must come from [`msl_ground_truth_new`] and not be used afterwards.
 */
void msl_ground_truth_free(struct MslGroundTruth *gt);

/**
 * Shape, rank and condition number of a ground truth. Any output pointer may be NULL.
 *
 * # Safety
 * `gt` must be a live handle; non-null outputs must be valid for writes.
 */
enum MslStatus msl_ground_truth_info(const struct MslGroundTruth *gt,
                                     size_t *n1,
                                     size_t *n2,
                                     size_t *r,
                                     double *kappa);

/**
 * Copies `X` into `out` (row-major, `len == n1 * n2`).
 *
 * # Safety
 * `gt` must be a live handle and `out` valid for `len` writes.
 */
enum MslStatus msl_ground_truth_matrix(const struct MslGroundTruth *gt, double *out, size_t len);

/**
 * Gaussian operator with `m` measurements and `N(0, 1/m)` entries.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum MslStatus msl_operator_gaussian(size_t n1,
                                     size_t n2,
                                     size_t m,
                                     uint64_t seed,
                                     struct MslOperator **out);

/**
 * Population operator: `A* A` is the identity.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum MslStatus msl_operator_population(size_t n1, size_t n2, struct MslOperator **out);

/**
 * Releases an operator; NULL is ignored.
 *
 * # Safety
 * `op` must come from an `msl_operator_*` constructor and not be used afterwards.
 */
void msl_operator_free(struct MslOperator *op);

/**
 * Number of measurements (0 for a population operator), or 0 for NULL.
 *
 * # Safety
 * `op` must be NULL or a live handle.
 */
size_t msl_operator_m(const struct MslOperator *op);

/**
 * `out_i = <A_i, M>` for a row-major `n1 x n2` matrix `M`.
 *
 * # Safety
 * `op` must be a live handle, `mat` valid for `mat_len` reads and `out` for `out_len` writes.
 */
enum MslStatus msl_operator_apply(const struct MslOperator *op,
                                  const double *mat,
                                  size_t mat_len,
                                  double *out,
                                  size_t out_len);

/**
 * `out = sum_i y_i A_i`, written row-major.
 *
 * # Safety
 * `op` must be a live handle, `y` valid for `y_len` reads and `out` for `out_len` writes.
 */
enum MslStatus msl_operator_adjoint(const struct MslOperator *op,
                                    const double *y,
                                    size_t y_len,
                                    double *out,
                                    size_t out_len);

/**
 * Defaults: `mu = 0.01`, `alpha = 1e-5`, `k = 10`, `max_iters = 200000`,
 * `record_every = 10`, `stop_train_loss = 0.5e-9`, `seed = 0`.
 */
struct MslGdConfig msl_gd_config_default(void);

/**
 * Runs gradient descent on `gt` measured through `op`.
 *
 * # Safety
 * `gt`, `op` and `cfg` must be live; `out` must be valid for writes.
 */
enum MslStatus msl_run_trajectory(const struct MslGroundTruth *gt,
                                  const struct MslOperator *op,
                                  const struct MslGdConfig *cfg,
                                  struct MslTrajectory **out);

/**
 * Releases a trajectory; NULL is ignored.
 *
 * # Safety
 * `traj` must come from [`msl_run_trajectory`] and not be used afterwards.
 */
void msl_trajectory_free(struct MslTrajectory *traj);

/**
 * Number of recorded iterations, or 0 for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t msl_trajectory_len(const struct MslTrajectory *traj);

/**
 * Iterations run and stop reason. Either output may be NULL.
 *
 * # Safety
 * `traj` must be a live handle; non-null outputs must be valid for writes.
 */
enum MslStatus msl_trajectory_summary(const struct MslTrajectory *traj,
                                      size_t *iterations,
                                      enum MslStopReason *reason);

/**
 * Copies record `index` into `out`.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum MslStatus msl_trajectory_record(const struct MslTrajectory *traj,
                                     size_t index,
                                     struct MslRecord *out);

/**
 * Final factors `V` (`n1 x k`) and `W` (`n2 x k`), row-major.
 *
 * # Safety
 * `traj` must be a live handle; `v` and `w` valid for `v_len` and `w_len` writes.
 */
enum MslStatus msl_trajectory_factors(const struct MslTrajectory *traj,
                                      double *v,
                                      size_t v_len,
                                      double *w,
                                      size_t w_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSL_H */
