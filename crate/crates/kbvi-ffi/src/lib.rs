//! C ABI for the kbvi library.
//!
//! Environments and agents are opaque handles created and destroyed by
//! this library; every fallible call returns a [`KbviStatus`] and
//! writes results through out-pointers. The generated header lives at
//! `include/kbvi.h`.
//!
//! Typical training loop from C:
//!
//! ```c
//! KbviEnv *env; KbviAgent *agent; KbviAgentParams params;
//! kbvi_agent_params_default(&params);
//! kbvi_env_new("standard", 0.004, 50, &env);
//! kbvi_agent_new(env, &params, &agent);
//! for (uint64_t k = 1; k <= 300; k++) {
//!     double ret;
//!     kbvi_run_episode(env, agent, k, &ret);
//! }
//! ```

use kbvi::agent::{AgentConfig, KernelAgent};
use kbvi::bonus::{BonusConfig, BonusKind};
use kbvi::envs::{make_variant, PuddleSpec};
use kbvi::metric::{run_episode, ActionId, Env, ProductMetric, StatePoint, Trajectory, TrajectoryStep};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

/// Status code of every fallible FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KbviStatus {
    Ok = 0,
    /// A parameter was out of range or inconsistent.
    InvalidArgument = 1,
    /// A required pointer was null.
    NullPointer = 2,
    /// A string argument was not valid UTF-8.
    Utf8 = 3,
    /// The callee panicked; the handle state is unspecified.
    Internal = 4,
}

struct EpisodeCursor {
    seed: u64,
    step: usize,
    state: StatePoint,
}

/// Opaque environment handle: a Puddle World spec plus the cursor of
/// the episode being rolled.
pub struct KbviEnv {
    spec: Arc<PuddleSpec>,
    cursor: Option<EpisodeCursor>,
}

/// Opaque agent handle: a kernel agent plus any partially recorded
/// episode.
pub struct KbviAgent {
    agent: KernelAgent,
    env: Arc<PuddleSpec>,
    pending: Vec<TrajectoryStep>,
}

/// Agent construction parameters. Obtain defaults from
/// [`kbvi_agent_params_default`] and override selectively.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct KbviAgentParams {
    /// 0 = Bernstein, 1 = Hoeffding, 2 = no bonus.
    pub bonus_kind: u32,
    /// 0 = theory constants, 1 = scaled by `bonus_scale`.
    pub bonus_mode: u32,
    pub bonus_scale: f64,
    pub sigma: f64,
    pub beta: f64,
    pub delta: f64,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub merge_threshold: f64,
    /// Planned episode budget K (enters the derived constants).
    pub episodes: u64,
    /// Negative keeps per-action sample pools; otherwise the distance
    /// between distinct actions.
    pub action_gap: f64,
}

fn run_guarded(body: impl FnOnce() -> KbviStatus) -> KbviStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => KbviStatus::Internal,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kbvi_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Create a named Puddle World variant (`standard`, `goal10`, `easy`)
/// with the given noise level and horizon. `horizon == 0` keeps the
/// default.
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_new(
    variant: *const c_char,
    noise_std: f64,
    horizon: u32,
    out: *mut *mut KbviEnv,
) -> KbviStatus {
    if variant.is_null() || out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let name = match CStr::from_ptr(variant).to_str() {
            Ok(name) => name,
            Err(_) => return KbviStatus::Utf8,
        };
        let mut spec = match make_variant(name) {
            Ok(spec) => spec,
            Err(_) => return KbviStatus::InvalidArgument,
        };
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return KbviStatus::InvalidArgument;
        }
        spec = spec.with_noise(noise_std);
        if horizon > 0 {
            spec = spec.with_horizon(horizon as usize);
        }
        let env = Box::new(KbviEnv { spec: Arc::new(spec), cursor: None });
        out.write(Box::into_raw(env));
        KbviStatus::Ok
    })
}

/// # Safety
/// `env` must be a pointer from [`kbvi_env_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_free(env: *mut KbviEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_state_dim(env: *const KbviEnv) -> u32 {
    (*env).spec.state_dim() as u32
}

/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_action_count(env: *const KbviEnv) -> u32 {
    (*env).spec.action_count() as u32
}

/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_horizon(env: *const KbviEnv) -> u32 {
    (*env).spec.horizon() as u32
}

/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_reward_scale(env: *const KbviEnv) -> f64 {
    (*env).spec.reward_scale()
}

/// Start an episode with the given seed and write the initial state
/// (length `kbvi_env_state_dim`).
///
/// # Safety
/// `env` must be a valid handle and `state_out` must point to at least
/// `kbvi_env_state_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_reset(
    env: *mut KbviEnv,
    seed: u64,
    state_out: *mut f64,
) -> KbviStatus {
    if env.is_null() || state_out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let env = &mut *env;
        let state = env.spec.reset(seed);
        std::ptr::copy_nonoverlapping(state.coords().as_ptr(), state_out, state.dim());
        env.cursor = Some(EpisodeCursor { seed, step: 1, state });
        KbviStatus::Ok
    })
}

/// Advance the running episode by one action. Writes the next state and
/// the reward of the current step. Fails once the horizon is exhausted
/// or before any reset.
///
/// # Safety
/// `env` must be a valid handle; out-pointers must be valid
/// (`next_state_out` holds `kbvi_env_state_dim` doubles).
#[no_mangle]
pub unsafe extern "C" fn kbvi_env_step(
    env: *mut KbviEnv,
    action: u32,
    next_state_out: *mut f64,
    reward_out: *mut f64,
) -> KbviStatus {
    if env.is_null() || next_state_out.is_null() || reward_out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let env = &mut *env;
        let spec = env.spec.clone();
        let cursor = match env.cursor.as_mut() {
            Some(cursor) => cursor,
            None => return KbviStatus::InvalidArgument,
        };
        if cursor.step > spec.horizon() || action as usize >= spec.action_count() {
            return KbviStatus::InvalidArgument;
        }
        let mut rng = kbvi::rng::stream(cursor.seed, &[cursor.step as u64]);
        let (next, reward) =
            spec.step(cursor.step, &cursor.state, ActionId(action as usize), &mut rng);
        std::ptr::copy_nonoverlapping(next.coords().as_ptr(), next_state_out, next.dim());
        reward_out.write(reward);
        cursor.state = next;
        cursor.step += 1;
        KbviStatus::Ok
    })
}

/// Fill `out` with the default agent parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_params_default(out: *mut KbviAgentParams) -> KbviStatus {
    if out.is_null() {
        return KbviStatus::NullPointer;
    }
    let defaults = AgentConfig::default();
    out.write(KbviAgentParams {
        bonus_kind: 0,
        bonus_mode: 1,
        bonus_scale: defaults.bonus.scale,
        sigma: defaults.sigma,
        beta: defaults.beta,
        delta: defaults.delta,
        lambda_r: defaults.lambda_r,
        lambda_p: defaults.lambda_p,
        merge_threshold: defaults.merge_threshold,
        episodes: defaults.episodes as u64,
        action_gap: -1.0,
    });
    KbviStatus::Ok
}

fn agent_config(params: &KbviAgentParams) -> Result<AgentConfig, ()> {
    let bonus_kind = match params.bonus_kind {
        0 => BonusKind::Bernstein,
        1 => BonusKind::Hoeffding,
        2 => BonusKind::Zero,
        _ => return Err(()),
    };
    let bonus = match params.bonus_mode {
        0 => BonusConfig::theory(),
        1 => BonusConfig::scaled(params.bonus_scale).map_err(|_| ())?,
        _ => return Err(()),
    };
    let metric = if params.action_gap < 0.0 {
        ProductMetric::disjoint()
    } else {
        ProductMetric::with_gap(params.action_gap)
    };
    Ok(AgentConfig {
        bonus_kind,
        bonus,
        sigma: params.sigma,
        beta: params.beta,
        delta: params.delta,
        lambda_r: params.lambda_r,
        lambda_p: params.lambda_p,
        merge_threshold: params.merge_threshold,
        episodes: params.episodes as usize,
        metric,
    })
}

/// Create an agent bound to the environment's shape and reward model.
///
/// # Safety
/// `env`, `params` and `out` must be valid pointers; the environment
/// may be freed independently of the agent afterwards.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_new(
    env: *const KbviEnv,
    params: *const KbviAgentParams,
    out: *mut *mut KbviAgent,
) -> KbviStatus {
    if env.is_null() || params.is_null() || out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let spec = (*env).spec.clone();
        let config = match agent_config(&*params) {
            Ok(config) => config,
            Err(()) => return KbviStatus::InvalidArgument,
        };
        let agent = match KernelAgent::new(spec.clone() as Arc<dyn Env>, config) {
            Ok(agent) => agent,
            Err(_) => return KbviStatus::InvalidArgument,
        };
        let handle = Box::new(KbviAgent { agent, env: spec, pending: Vec::new() });
        out.write(Box::into_raw(handle));
        KbviStatus::Ok
    })
}

/// # Safety
/// `agent` must be a pointer from [`kbvi_agent_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_free(agent: *mut KbviAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Greedy action of the current plan at `(step, state)`.
///
/// # Safety
/// Pointers must be valid; `state` holds `dim` doubles matching the
/// environment's state dimension; steps are 1-based.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_act(
    agent: *const KbviAgent,
    step: u32,
    state: *const f64,
    dim: usize,
    action_out: *mut u32,
) -> KbviStatus {
    if agent.is_null() || state.is_null() || action_out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let handle = &*agent;
        if dim != handle.env.state_dim()
            || step == 0
            || step as usize > handle.env.horizon()
        {
            return KbviStatus::InvalidArgument;
        }
        let coords = std::slice::from_raw_parts(state, dim).to_vec();
        if coords.iter().any(|c| !c.is_finite()) {
            return KbviStatus::InvalidArgument;
        }
        let action = handle.agent.act(step as usize, &StatePoint::new(coords));
        action_out.write(action.0 as u32);
        KbviStatus::Ok
    })
}

/// Record one transition of the episode in progress. Steps must be
/// recorded in order 1..=horizon before [`kbvi_agent_end_episode`].
///
/// # Safety
/// Pointers must be valid; `state` and `next_state` hold the
/// environment's state dimension.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_record(
    agent: *mut KbviAgent,
    step: u32,
    state: *const f64,
    action: u32,
    reward: f64,
    next_state: *const f64,
) -> KbviStatus {
    if agent.is_null() || state.is_null() || next_state.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let handle = &mut *agent;
        let dim = handle.env.state_dim();
        if step as usize != handle.pending.len() + 1
            || step as usize > handle.env.horizon()
            || action as usize >= handle.env.action_count()
        {
            return KbviStatus::InvalidArgument;
        }
        let state = std::slice::from_raw_parts(state, dim).to_vec();
        let next = std::slice::from_raw_parts(next_state, dim).to_vec();
        if state.iter().chain(&next).any(|c| !c.is_finite()) || !reward.is_finite() {
            return KbviStatus::InvalidArgument;
        }
        handle.pending.push(TrajectoryStep {
            step: step as usize,
            state: StatePoint::new(state),
            action: ActionId(action as usize),
            reward,
            next_state: StatePoint::new(next),
        });
        KbviStatus::Ok
    })
}

/// Finish the recorded episode: fold it into the agent's buffers and
/// replan. Fails unless exactly `horizon` steps were recorded.
///
/// # Safety
/// `agent` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn kbvi_agent_end_episode(agent: *mut KbviAgent) -> KbviStatus {
    if agent.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let handle = &mut *agent;
        let steps = std::mem::take(&mut handle.pending);
        let trajectory =
            match Trajectory::new(steps, handle.env.horizon(), handle.env.reward_scale()) {
                Ok(trajectory) => trajectory,
                Err(_) => return KbviStatus::InvalidArgument,
            };
        handle.agent.observe(&trajectory);
        handle.agent.plan();
        KbviStatus::Ok
    })
}

/// Convenience: roll one full greedy episode on `env` with the given
/// seed, train the agent on it, and write the episodic return.
///
/// # Safety
/// Handles and `return_out` must be valid; the agent must have been
/// created for an environment of the same shape.
#[no_mangle]
pub unsafe extern "C" fn kbvi_run_episode(
    env: *const KbviEnv,
    agent: *mut KbviAgent,
    seed: u64,
    return_out: *mut f64,
) -> KbviStatus {
    if env.is_null() || agent.is_null() || return_out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let handle = &mut *agent;
        let spec = (*env).spec.clone();
        if spec.horizon() != handle.env.horizon()
            || spec.state_dim() != handle.env.state_dim()
            || spec.action_count() != handle.env.action_count()
        {
            return KbviStatus::InvalidArgument;
        }
        let trajectory = run_episode(&*spec, |h, s| handle.agent.act(h, s), seed);
        handle.agent.observe(&trajectory);
        handle.agent.plan();
        return_out.write(trajectory.total_return());
        KbviStatus::Ok
    })
}

/// The empirical Bernstein bound on `|sum_i xs_i|` for a martingale
/// difference sequence with `|x_i| <= c`, at confidence `delta` in
/// `(0, e^-1)`.
///
/// # Safety
/// `xs` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbvi_bernstein_bound(
    xs: *const f64,
    len: usize,
    c: f64,
    delta: f64,
    out: *mut f64,
) -> KbviStatus {
    if (xs.is_null() && len > 0) || out.is_null() {
        return KbviStatus::NullPointer;
    }
    run_guarded(|| {
        let xs = if len == 0 { &[] } else { std::slice::from_raw_parts(xs, len) };
        match kbvi::concentration::empirical_bernstein_bound(xs, c, delta) {
            Ok(bound) => {
                out.write(bound);
                KbviStatus::Ok
            }
            Err(_) => KbviStatus::InvalidArgument,
        }
    })
}

/// Owned string helper for future growth; currently unused by the API
/// surface but kept so bindings can free any string we may return.
///
/// # Safety
/// `s` must be a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kbvi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    unsafe fn new_env(variant: &str, noise: f64, horizon: u32) -> *mut KbviEnv {
        let name = CString::new(variant).unwrap();
        let mut env: *mut KbviEnv = ptr::null_mut();
        assert_eq!(kbvi_env_new(name.as_ptr(), noise, horizon, &mut env), KbviStatus::Ok);
        env
    }

    #[test]
    fn env_lifecycle_and_shape() {
        unsafe {
            let env = new_env("standard", 0.0, 5);
            assert_eq!(kbvi_env_state_dim(env), 2);
            assert_eq!(kbvi_env_action_count(env), 4);
            assert_eq!(kbvi_env_horizon(env), 5);
            assert_eq!(kbvi_env_reward_scale(env), 100.0);
            kbvi_env_free(env);
        }
    }

    #[test]
    fn unknown_variant_is_invalid() {
        unsafe {
            let name = CString::new("swamp").unwrap();
            let mut env: *mut KbviEnv = ptr::null_mut();
            assert_eq!(
                kbvi_env_new(name.as_ptr(), 0.0, 0, &mut env),
                KbviStatus::InvalidArgument
            );
            assert_eq!(kbvi_env_new(ptr::null(), 0.0, 0, &mut env), KbviStatus::NullPointer);
        }
    }

    #[test]
    fn reset_step_walks_deterministically() {
        unsafe {
            let env = new_env("standard", 0.0, 3);
            let mut state = [0.0f64; 2];
            assert_eq!(kbvi_env_reset(env, 7, state.as_mut_ptr()), KbviStatus::Ok);
            assert_eq!(state, [0.0, 0.0]);
            let mut reward = 0.0;
            assert_eq!(
                kbvi_env_step(env, 1, state.as_mut_ptr(), &mut reward),
                KbviStatus::Ok
            );
            assert_eq!(state, [0.1, 0.0]);
            assert_eq!(reward, 0.0);
            // Bad action index.
            assert_eq!(
                kbvi_env_step(env, 9, state.as_mut_ptr(), &mut reward),
                KbviStatus::InvalidArgument
            );
            // Stepping past the horizon fails.
            for _ in 0..2 {
                assert_eq!(
                    kbvi_env_step(env, 1, state.as_mut_ptr(), &mut reward),
                    KbviStatus::Ok
                );
            }
            assert_eq!(
                kbvi_env_step(env, 1, state.as_mut_ptr(), &mut reward),
                KbviStatus::InvalidArgument
            );
            kbvi_env_free(env);
        }
    }

    #[test]
    fn agent_training_via_run_episode() {
        unsafe {
            let env = new_env("standard", 0.0, 4);
            let mut params = KbviAgentParams {
                bonus_kind: 0,
                bonus_mode: 1,
                bonus_scale: 1e-6,
                sigma: 0.025,
                beta: 0.2,
                delta: 0.1,
                lambda_r: 10.0,
                lambda_p: 0.9,
                merge_threshold: 0.02,
                episodes: 5,
                action_gap: -1.0,
            };
            let mut agent: *mut KbviAgent = ptr::null_mut();
            assert_eq!(kbvi_agent_new(env, &params, &mut agent), KbviStatus::Ok);
            for k in 1..=3u64 {
                let mut ret = f64::NAN;
                assert_eq!(kbvi_run_episode(env, agent, k, &mut ret), KbviStatus::Ok);
                assert!(ret.is_finite());
            }
            let state = [0.0f64, 0.0];
            let mut action = u32::MAX;
            assert_eq!(
                kbvi_agent_act(agent, 1, state.as_ptr(), 2, &mut action),
                KbviStatus::Ok
            );
            assert!(action < 4);
            kbvi_agent_free(agent);

            // Invalid parameter combinations are rejected.
            params.bonus_scale = -1.0;
            assert_eq!(kbvi_agent_new(env, &params, &mut agent), KbviStatus::InvalidArgument);
            kbvi_env_free(env);
        }
    }

    #[test]
    fn manual_record_path_matches_horizon_contract() {
        unsafe {
            let env = new_env("standard", 0.0, 2);
            let mut params = std::mem::MaybeUninit::<KbviAgentParams>::uninit();
            assert_eq!(kbvi_agent_params_default(params.as_mut_ptr()), KbviStatus::Ok);
            let params = params.assume_init();
            let mut agent: *mut KbviAgent = ptr::null_mut();
            assert_eq!(kbvi_agent_new(env, &params, &mut agent), KbviStatus::Ok);

            let s0 = [0.0f64, 0.0];
            let s1 = [0.1f64, 0.0];
            let s2 = [0.2f64, 0.0];
            // Ending early fails.
            assert_eq!(
                kbvi_agent_record(agent, 1, s0.as_ptr(), 1, 0.0, s1.as_ptr()),
                KbviStatus::Ok
            );
            assert_eq!(kbvi_agent_end_episode(agent), KbviStatus::InvalidArgument);
            // Out-of-order steps fail.
            assert_eq!(
                kbvi_agent_record(agent, 1, s0.as_ptr(), 1, 0.0, s1.as_ptr()),
                KbviStatus::Ok
            );
            assert_eq!(
                kbvi_agent_record(agent, 1, s1.as_ptr(), 1, 0.0, s2.as_ptr()),
                KbviStatus::InvalidArgument
            );
            assert_eq!(
                kbvi_agent_record(agent, 2, s1.as_ptr(), 1, 0.0, s2.as_ptr()),
                KbviStatus::Ok
            );
            assert_eq!(kbvi_agent_end_episode(agent), KbviStatus::Ok);
            kbvi_agent_free(agent);
            kbvi_env_free(env);
        }
    }

    #[test]
    fn bernstein_bound_through_ffi() {
        unsafe {
            let xs = [0.0f64; 16];
            let mut bound = 0.0;
            assert_eq!(
                kbvi_bernstein_bound(xs.as_ptr(), xs.len(), 1.0, 0.01, &mut bound),
                KbviStatus::Ok
            );
            assert!((bound - 7.0 * 200.0f64.ln()).abs() < 1e-9);
            assert_eq!(
                kbvi_bernstein_bound(xs.as_ptr(), xs.len(), 1.0, 0.9, &mut bound),
                KbviStatus::InvalidArgument
            );
        }
    }

    #[test]
    fn version_is_nul_terminated() {
        let ptr = kbvi_version();
        assert!(!ptr.is_null());
        let version = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
        assert!(!version.is_empty());
    }
}
