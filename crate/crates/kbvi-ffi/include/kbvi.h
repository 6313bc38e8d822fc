#ifndef KBVI_H
#define KBVI_H

/* Generated by cbindgen from the kbvi-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible FFI call.
 */
typedef enum KbviStatus {
  KBVI_STATUS_OK = 0,
  /**
   * A parameter was out of range or inconsistent.
   */
  KBVI_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A required pointer was null.
   */
  KBVI_STATUS_NULL_POINTER = 2,
  /**
   * A string argument was not valid UTF-8.
   */
  KBVI_STATUS_UTF8 = 3,
  /**
   * The callee panicked; the handle state is unspecified.
   */
  KBVI_STATUS_INTERNAL = 4,
} KbviStatus;

/**
 * Opaque agent handle: a kernel agent plus any partially recorded
 * episode.
 */
typedef struct KbviAgent KbviAgent;

/**
 * Opaque environment handle: a Puddle World spec plus the cursor of
 * the episode being rolled.
 */
typedef struct KbviEnv KbviEnv;

/**
 * Agent construction parameters. Obtain defaults from
 * [`kbvi_agent_params_default`] and override selectively.
 */
typedef struct KbviAgentParams {
  /**
   * 0 = Bernstein, 1 = Hoeffding, 2 = no bonus.
   */
  uint32_t bonus_kind;
  /**
   * 0 = theory constants, 1 = scaled by `bonus_scale`.
   */
  uint32_t bonus_mode;
  double bonus_scale;
  double sigma;
  double beta;
  double delta;
  double lambda_r;
  double lambda_p;
  double merge_threshold;
  /**
   * Planned episode budget K (enters the derived constants).
   */
  uint64_t episodes;
  /**
   * Negative keeps per-action sample pools; otherwise the distance
   * between distinct actions.
   */
  double action_gap;
} KbviAgentParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *kbvi_version(void);

/**
 * Create a named Puddle World variant (`standard`, `goal10`, `easy`)
 * with the given noise level and horizon. `horizon == 0` keeps the
 * default.
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KbviStatus kbvi_env_new(const char *variant,
                             double noise_std,
                             uint32_t horizon,
                             struct KbviEnv **out);

/**
 * # Safety
 * `env` must be a pointer from [`kbvi_env_new`], not yet freed.
 */
void kbvi_env_free(struct KbviEnv *env);

/**
 * # Safety
 * `env` must be a valid handle.
 */
uint32_t kbvi_env_state_dim(const struct KbviEnv *env);

/**
 * # Safety
 * `env` must be a valid handle.
 */
uint32_t kbvi_env_action_count(const struct KbviEnv *env);

/**
 * # Safety
 * `env` must be a valid handle.
 */
uint32_t kbvi_env_horizon(const struct KbviEnv *env);

/**
 * # Safety
 * `env` must be a valid handle.
 */
double kbvi_env_reward_scale(const struct KbviEnv *env);

/**
 * Start an episode with the given seed and write the initial state
 * (length `kbvi_env_state_dim`).
 *
 * # Safety
 * `env` must be a valid handle and `state_out` must point to at least
 * `kbvi_env_state_dim` doubles.
 */
enum KbviStatus kbvi_env_reset(struct KbviEnv *env, uint64_t seed, double *state_out);

/**
 * Advance the running episode by one action. Writes the next state and
 * the reward of the current step. Fails once the horizon is exhausted
 * or before any reset.
 *
 * # Safety
 * `env` must be a valid handle; out-pointers must be valid
 * (`next_state_out` holds `kbvi_env_state_dim` doubles).
 */
enum KbviStatus kbvi_env_step(struct KbviEnv *env,
                              uint32_t action,
                              double *next_state_out,
                              double *reward_out);

/**
 * Fill `out` with the default agent parameters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum KbviStatus kbvi_agent_params_default(struct KbviAgentParams *out);

/**
 * Create an agent bound to the environment's shape and reward model.
 *
 * # Safety
 * `env`, `params` and `out` must be valid pointers; the environment
 * may be freed independently of the agent afterwards.
 */
enum KbviStatus kbvi_agent_new(const struct KbviEnv *env,
                               const struct KbviAgentParams *params,
                               struct KbviAgent **out);

/**
 * # Safety
 * `agent` must be a pointer from [`kbvi_agent_new`], not yet freed.
 */
void kbvi_agent_free(struct KbviAgent *agent);

/**
 * Greedy action of the current plan at `(step, state)`.
 *
 * # Safety
 * Pointers must be valid; `state` holds `dim` doubles matching the
 * environment's state dimension; steps are 1-based.
 */
enum KbviStatus kbvi_agent_act(const struct KbviAgent *agent,
                               uint32_t step,
                               const double *state,
                               uintptr_t dim,
                               uint32_t *action_out);

/**
 * Record one transition of the episode in progress. Steps must be
 * recorded in order 1..=horizon before [`kbvi_agent_end_episode`].
 *
 * # Safety
 * Pointers must be valid; `state` and `next_state` hold the
 * environment's state dimension.
 */
enum KbviStatus kbvi_agent_record(struct KbviAgent *agent,
                                  uint32_t step,
                                  const double *state,
                                  uint32_t action,
                                  double reward,
                                  const double *next_state);

/**
 * Finish the recorded episode: fold it into the agent's buffers and
 * replan. Fails unless exactly `horizon` steps were recorded.
 *
 * # Safety
 * `agent` must be a valid handle.
 */
enum KbviStatus kbvi_agent_end_episode(struct KbviAgent *agent);

/**
 * Convenience: roll one full greedy episode on `env` with the given
 * seed, train the agent on it, and write the episodic return.
 *
 * # Safety
 * Handles and `return_out` must be valid; the agent must have been
 * created for an environment of the same shape.
 */
enum KbviStatus kbvi_run_episode(const struct KbviEnv *env,
                                 struct KbviAgent *agent,
                                 uint64_t seed,
                                 double *return_out);

/**
 * The empirical Bernstein bound on `|sum_i xs_i|` for a martingale
 * difference sequence with `|x_i| <= c`, at confidence `delta` in
 * `(0, e^-1)`.
 *
 * # Safety
 * `xs` must point to `len` doubles and `out` must be valid.
 */
enum KbviStatus kbvi_bernstein_bound(const double *xs,
                                     uintptr_t len,
                                     double c,
                                     double delta,
                                     double *out);

/**
 * Owned string helper for future growth; currently unused by the API
 * surface but kept so bindings can free any string we may return.
 *
 * # Safety
 * `s` must be a string returned by this library, not yet freed.
 */
void kbvi_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KBVI_H */
