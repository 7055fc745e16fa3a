#ifndef RMDA_H
#define RMDA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. `Ok` is zero; everything else is a failure.
 */
typedef enum RmdaStatus {
  RMDA_STATUS_OK = 0,
  RMDA_STATUS_NULL_POINTER = 1,
  RMDA_STATUS_INVALID_ARGUMENT = 2,
  RMDA_STATUS_STRUCTURAL = 3,
  RMDA_STATUS_PARAMETER = 4,
  RMDA_STATUS_INPUT = 5,
  RMDA_STATUS_SCHEDULE = 6,
  RMDA_STATUS_FORMAT = 7,
  RMDA_STATUS_CONFIG = 8,
  RMDA_STATUS_DATA = 9,
  RMDA_STATUS_NUMERIC = 10,
  RMDA_STATUS_IO = 11,
  RMDA_STATUS_PANIC = 12,
} RmdaStatus;

typedef enum RmdaRegularizerKind {
  RMDA_REGULARIZER_KIND_NONE = 0,
  RMDA_REGULARIZER_KIND_L1 = 1,
  RMDA_REGULARIZER_KIND_GROUP_LASSO = 2,
  RMDA_REGULARIZER_KIND_SPARSE_GROUP_LASSO = 3,
  RMDA_REGULARIZER_KIND_GROUP_MCP = 4,
  RMDA_REGULARIZER_KIND_L1_GROUP_MCP = 5,
  RMDA_REGULARIZER_KIND_BOX_INDICATOR = 6,
} RmdaRegularizerKind;

/*
 Which iterate [`rmda_state_get`] copies out.
 */
typedef enum RmdaIterate {
  /*
   The averaged iterate `W`.
   */
  RMDA_ITERATE_W = 0,
  /*
   The proximal point `W~`, which carries the exact sparsity.
   */
  RMDA_ITERATE_W_TILDE = 1,
  /*
   The restart anchor `W0`.
   */
  RMDA_ITERATE_W0 = 2,
} RmdaIterate;

typedef struct RmdaOptimizer RmdaOptimizer;

typedef struct RmdaPartition RmdaPartition;

typedef struct RmdaRegularizer RmdaRegularizer;

/*
 Regularizer hyperparameters. Fields a kind does not use are ignored.

 `lambda` is the group weight (or the ℓ1 weight for `L1`), `lambda_l1` the
 ℓ1 weight of the sparse-group kinds, `omega` the MCP concavity, and
 `lo`/`hi` the box bounds.
 */
typedef struct RmdaRegularizerParams {
  enum RmdaRegularizerKind kind;
  double lambda;
  double lambda_l1;
  double omega;
  double lo;
  double hi;
} RmdaRegularizerParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or an empty string.

 The pointer stays valid until the next failing call on the same thread.
 */
const char *rmda_last_error(void);

/*
 Builds a group partition of `dim` coordinates.

 Group `g` holds `sizes[g]` consecutive entries of `indices`. `weights` may
 be null, giving each group the weight `sqrt(size)`.

 # Safety
 `sizes` and `weights` (when non-null) must point to `n_groups` values and
 `indices` to the sum of `sizes`. `out` must be writable.
 */
enum RmdaStatus rmda_partition_new(size_t dim,
                                   const size_t *sizes,
                                   size_t n_groups,
                                   const size_t *indices,
                                   size_t n_indices,
                                   const double *weights,
                                   struct RmdaPartition **out_partition);

/*
 Contiguous groups of `size` coordinates with `sqrt(size)` weights.

 # Safety
 `out_partition` must be writable.
 */
enum RmdaStatus rmda_partition_contiguous(size_t dim,
                                          size_t size,
                                          struct RmdaPartition **out_partition);

/*
 # Safety
 `partition` must be null or come from a `rmda_partition_*` constructor.
 */
void rmda_partition_free(struct RmdaPartition *partition);

/*
 Number of groups.

 # Safety
 `partition` must be a live handle.
 */
size_t rmda_partition_len(const struct RmdaPartition *partition);

/*
 Builds a regularizer. Group kinds copy `partition`, which the caller
 still owns; the other kinds accept null.

 # Safety
 `partition` must be null or a live handle; `out_regularizer` must be writable.
 */
enum RmdaStatus rmda_regularizer_new(struct RmdaRegularizerParams params,
                                     const struct RmdaPartition *partition,
                                     struct RmdaRegularizer **out_regularizer);

/*
 # Safety
 `reg` must be null or come from [`rmda_regularizer_new`].
 */
void rmda_regularizer_free(struct RmdaRegularizer *reg);

/*
 `psi(w)`; infinite outside a box.

 # Safety
 `w` must point to `len` values and `out_value` must be writable.
 */
enum RmdaStatus rmda_regularizer_value(const struct RmdaRegularizer *reg,
                                       const double *w,
                                       size_t len,
                                       double *out_value);

/*
 `prox_{tau psi}(v)` written to `out_buf`. `out_buf` may alias `v`.

 # Safety
 `v` and `out_buf` must each point to `len` values.
 */
enum RmdaStatus rmda_regularizer_prox(const struct RmdaRegularizer *reg,
                                      const double *v,
                                      size_t len,
                                      double tau,
                                      double *out_buf);

/*
 Fraction of groups of `partition` that are exactly zero in `w`.

 # Safety
 `w` must point to `len` values and `out_value` must be writable.
 */
enum RmdaStatus rmda_group_sparsity(const struct RmdaPartition *partition,
                                    const double *w,
                                    size_t len,
                                    double *out_value);

/*
 Creates an RMDA optimizer anchored at `w0`.

 `eta_json` and `c_json` are schedules over the epoch index. The
 regularizer is copied; the caller keeps ownership of `reg`.

 # Safety
 `w0` must point to `len` values, the strings must be NUL-terminated, and
 `out_state` must be writable.
 */
enum RmdaStatus rmda_state_new(const double *w0,
                               size_t len,
                               const struct RmdaRegularizer *reg,
                               const char *eta_json,
                               const char *c_json,
                               struct RmdaOptimizer **out_state);

/*
 # Safety
 `state` must be null or come from [`rmda_state_new`].
 */
void rmda_state_free(struct RmdaOptimizer *state);

/*
 One RMDA step with minibatch gradient `grad` at the current `W`. A failed
 step leaves the state unchanged.

 # Safety
 `grad` must point to `len` values.
 */
enum RmdaStatus rmda_state_step(struct RmdaOptimizer *state,
                                const double *grad,
                                size_t len,
                                uint64_t epoch);

/*
 Regularized dual averaging step: RMDA with the momentum fixed at one.

 # Safety
 `grad` must point to `len` values.
 */
enum RmdaStatus rmda_state_rda_step(struct RmdaOptimizer *state,
                                    const double *grad,
                                    size_t len,
                                    uint64_t epoch);

/*
 Re-anchors at the current `W` and clears the dual average.

 # Safety
 `state` must be a live handle.
 */
enum RmdaStatus rmda_state_restart(struct RmdaOptimizer *state);

/*
 Copies one of the iterates into `out_buf`, which must hold exactly the
 parameter dimension.

 # Safety
 `out_buf` must point to `len` writable values.
 */
enum RmdaStatus rmda_state_get(const struct RmdaOptimizer *state,
                               enum RmdaIterate which,
                               double *out_buf,
                               size_t len);

/*
 Parameter dimension, or 0 for a null handle.

 # Safety
 `state` must be null or a live handle.
 */
size_t rmda_state_dim(const struct RmdaOptimizer *state);

/*
 Steps since the last restart.

 # Safety
 `state` must be null or a live handle.
 */
uint64_t rmda_state_t(const struct RmdaOptimizer *state);

/*
 Accumulated dual-averaging weight `alpha`.

 # Safety
 `state` must be null or a live handle.
 */
double rmda_state_alpha(const struct RmdaOptimizer *state);

/*
 Trains from a TOML experiment config and returns the run summary as a
 JSON string, to be released with [`rmda_string_free`].

 # Safety
 `config_toml` must be NUL-terminated and `out_summary_json` writable.
 */
enum RmdaStatus rmda_run_experiment(const char *config_toml, char **out_summary_json);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void rmda_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RMDA_H */
