#ifndef POLICY_POISON_H
#define POLICY_POISON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_INVALID_ARGUMENT = 1,
  PP_STATUS_SHAPE_MISMATCH = 2,
  PP_STATUS_MISSING_COVERAGE = 3,
  PP_STATUS_ITERATION_LIMIT = 4,
  PP_STATUS_ILL_POSED = 5,
  PP_STATUS_NOT_STABILIZABLE = 6,
  PP_STATUS_NOT_IDENTIFIABLE = 7,
  PP_STATUS_INFEASIBLE = 8,
  PP_STATUS_SOLVER_FAILURE = 9,
  PP_STATUS_PARSE_ERROR = 10,
  PP_STATUS_VERIFICATION_FAILED = 11,
  PP_STATUS_IO_ERROR = 12,
  PP_STATUS_NULL_POINTER = 13,
  PP_STATUS_PANIC = 14,
} PpStatus;

/**
 * Attack cost norm codes accepted by the `norm` arguments.
 */
typedef enum PpNorm {
  PP_NORM_L1 = 1,
  PP_NORM_L2 = 2,
  PP_NORM_L_INF = 3,
} PpNorm;

/**
 * Opaque continuous dataset.
 */
typedef struct PpContinuousDataset PpContinuousDataset;

/**
 * Opaque result of an LQR attack.
 */
typedef struct PpLqrAttack PpLqrAttack;

/**
 * Opaque tabular dataset.
 */
typedef struct PpTabularDataset PpTabularDataset;

/**
 * Opaque result of a tabular attack.
 */
typedef struct PpTceAttack PpTceAttack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *pp_version(void);

/**
 * Message of the last failed call on this thread, or NULL if the last
 * status-returning call succeeded. The pointer is valid until the next
 * status-returning call on the same thread.
 */
const char *pp_last_error_message(void);

/**
 * Releases a string returned by a `*_json` call.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pp_string_free(char *s);

/**
 * Builds a tabular dataset from parallel arrays of length `len`.
 *
 * # Safety
 * Each array must hold `len` elements; `out` must be writable.
 */
enum PpStatus pp_tabular_dataset_new(size_t num_states,
                                     size_t num_actions,
                                     const size_t *states,
                                     const size_t *actions,
                                     const double *rewards,
                                     const size_t *next_states,
                                     size_t len,
                                     struct PpTabularDataset **out);

/**
 * Reads a tabular dataset from CSV or JSON.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PpStatus pp_tabular_dataset_read(const char *path, struct PpTabularDataset **out);

/**
 * Number of transitions, or 0 for a NULL handle.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t pp_tabular_dataset_len(const struct PpTabularDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a live handle, not used afterwards.
 */
void pp_tabular_dataset_free(struct PpTabularDataset *dataset);

/**
 * Builds a continuous dataset. `states` and `next_states` hold `len` rows of
 * `state_dim` values, `actions` holds `len` rows of `action_dim` values.
 *
 * # Safety
 * Arrays must have the stated sizes; `out` must be writable.
 */
enum PpStatus pp_continuous_dataset_new(size_t state_dim,
                                        size_t action_dim,
                                        const double *states,
                                        const double *actions,
                                        const double *rewards,
                                        const double *next_states,
                                        size_t len,
                                        struct PpContinuousDataset **out);

/**
 * Reads a continuous dataset from CSV or JSON.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PpStatus pp_continuous_dataset_read(const char *path, struct PpContinuousDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t pp_continuous_dataset_len(const struct PpContinuousDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a live handle, not used afterwards.
 */
void pp_continuous_dataset_free(struct PpContinuousDataset *dataset);

/**
 * Cheapest reward poisoning that makes `target` (one action per state) the
 * unique greedy policy by `margin`. `norm` is a [`PpNorm`] code.
 *
 * # Safety
 * `dataset` must be live, `target` must hold `target_len` entries and `out`
 * must be writable.
 */
enum PpStatus pp_tce_attack(const struct PpTabularDataset *dataset,
                            double discount,
                            const size_t *target,
                            size_t target_len,
                            double margin,
                            uint32_t norm,
                            struct PpTceAttack **out);

/**
 * # Safety
 * `attack` must be live and `cost` writable.
 */
enum PpStatus pp_tce_attack_cost(const struct PpTceAttack *attack, double *cost);

/**
 * Copies the poisoned rewards; `len` must equal the dataset length.
 *
 * # Safety
 * `attack` must be live and `rewards` must hold `len` doubles.
 */
enum PpStatus pp_tce_attack_rewards(const struct PpTceAttack *attack, double *rewards, size_t len);

/**
 * Re-learns on the poisoned data and reports whether every check passed.
 * A failed check is not an error: the call still returns OK.
 *
 * # Safety
 * Handles must be live, `dataset` must be the attacked one and `passed`
 * writable.
 */
enum PpStatus pp_tce_attack_verify(const struct PpTceAttack *attack,
                                   const struct PpTabularDataset *dataset,
                                   bool *passed);

/**
 * Full result as JSON; release with [`pp_string_free`]. NULL on failure.
 *
 * # Safety
 * `attack` must be NULL or live.
 */
char *pp_tce_attack_json(const struct PpTceAttack *attack);

/**
 * # Safety
 * `attack` must be NULL or a live handle, not used afterwards.
 */
void pp_tce_attack_free(struct PpTceAttack *attack);

/**
 * Poisons the rewards so the learner recovers the controller that drives the
 * state to `goal` under the loss ½|s − goal|² + action_cost·|a|².
 * `eps` bounds the learned action cost from below.
 *
 * # Safety
 * `dataset` must be live, `goal` must hold `goal_len` doubles and `out` must
 * be writable.
 */
enum PpStatus pp_lqr_attack(const struct PpContinuousDataset *dataset,
                            const double *goal,
                            size_t goal_len,
                            double action_cost,
                            double eps,
                            double gamma,
                            uint32_t norm,
                            struct PpLqrAttack **out);

/**
 * # Safety
 * `attack` must be live and `cost` writable.
 */
enum PpStatus pp_lqr_attack_cost(const struct PpLqrAttack *attack, double *cost);

/**
 * # Safety
 * `attack` must be live and `rewards` must hold `len` doubles.
 */
enum PpStatus pp_lqr_attack_rewards(const struct PpLqrAttack *attack, double *rewards, size_t len);

/**
 * Policy the learner recovers from the poisoned data: `gain` receives the
 * m×n matrix K row-major, `offset` the m-vector k.
 *
 * # Safety
 * `attack` must be live; buffers must hold `gain_len` and `offset_len`
 * doubles.
 */
enum PpStatus pp_lqr_attack_learned_policy(const struct PpLqrAttack *attack,
                                           double *gain,
                                           size_t gain_len,
                                           double *offset,
                                           size_t offset_len);

/**
 * # Safety
 * Handles must be live, `dataset` must be the attacked one and `passed`
 * writable.
 */
enum PpStatus pp_lqr_attack_verify(const struct PpLqrAttack *attack,
                                   const struct PpContinuousDataset *dataset,
                                   bool *passed);

/**
 * # Safety
 * `attack` must be NULL or live.
 */
char *pp_lqr_attack_json(const struct PpLqrAttack *attack);

/**
 * # Safety
 * `attack` must be NULL or a live handle, not used afterwards.
 */
void pp_lqr_attack_free(struct PpLqrAttack *attack);

/**
 * Optimal discounted LQR policy a = Ks + k for dynamics (A, B) and loss
 * ½s'Qs + q's + a'Ra + c. A and Q are n×n, B is n×m, R is m×m, all
 * row-major. Writes K (m×n, row-major) and k (m).
 *
 * # Safety
 * Every array must hold the number of doubles implied by `n` and `m`.
 */
enum PpStatus pp_lqr_optimal_policy(size_t n,
                                    size_t m,
                                    const double *a,
                                    const double *b,
                                    const double *q_mat,
                                    const double *r_mat,
                                    const double *q_vec,
                                    double c,
                                    double gamma,
                                    double *gain,
                                    double *offset);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLICY_POISON_H */
