//! Environments: the Puddle World family and a small deterministic
//! grid environment with an exact dynamic-programming oracle.

use crate::error::{Error, Result};
use crate::metric::{ActionId, Env, StatePoint};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

/// Axis-aligned closed box in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Box2 {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Box2 { min, max }
    }

    /// Membership with boundary included.
    pub fn contains(&self, point: &StatePoint) -> bool {
        let c = point.coords();
        c[0] >= self.min[0] && c[0] <= self.max[0] && c[1] >= self.min[1] && c[1] <= self.max[1]
    }
}

/// The continuous Puddle World on `[-1, 1]^2`: four directional actions
/// with a fixed displacement, Gaussian step noise, a rewarded goal box
/// and penalized puddle boxes. The goal is non-absorbing; episodes
/// always run the full horizon and the goal pays on every step spent
/// inside it.
#[derive(Clone, Debug)]
pub struct PuddleSpec {
    pub displacement: f64,
    pub noise_std: f64,
    pub start: [f64; 2],
    pub goal: Box2,
    pub goal_reward: f64,
    pub puddles: Vec<(Box2, f64)>,
    pub horizon: usize,
}

/// Named reward layouts of the Puddle World.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PuddleVariant {
    /// Goal pays +100; two puddles at -10.
    Standard,
    /// Goal pays +10; puddles as in `Standard`.
    Goal10,
    /// Single puddle at -1; goal pays +100.
    Easy,
}

impl PuddleVariant {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "standard" => Ok(PuddleVariant::Standard),
            "goal10" => Ok(PuddleVariant::Goal10),
            "easy" => Ok(PuddleVariant::Easy),
            other => Err(Error::input(format!(
                "unknown puddle world variant '{other}' (expected standard, goal10 or easy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PuddleVariant::Standard => "standard",
            PuddleVariant::Goal10 => "goal10",
            PuddleVariant::Easy => "easy",
        }
    }
}

/// Build a named variant with the default noise level and horizon.
pub fn make_variant(name: &str) -> Result<PuddleSpec> {
    Ok(PuddleSpec::variant(PuddleVariant::parse(name)?))
}

impl PuddleSpec {
    pub const ACTIONS: usize = 4;

    pub fn variant(variant: PuddleVariant) -> Self {
        let goal = Box2::new([0.8, 0.8], [1.0, 1.0]);
        let puddle_upper = Box2::new([0.2, 0.6], [0.4, 0.8]);
        let puddle_lower = Box2::new([0.6, 0.2], [0.8, 0.4]);
        let (goal_reward, puddles) = match variant {
            PuddleVariant::Standard => (100.0, vec![(puddle_upper, -10.0), (puddle_lower, -10.0)]),
            PuddleVariant::Goal10 => (10.0, vec![(puddle_upper, -10.0), (puddle_lower, -10.0)]),
            PuddleVariant::Easy => (100.0, vec![(puddle_upper, -1.0)]),
        };
        PuddleSpec {
            displacement: 0.1,
            noise_std: 0.01,
            start: [0.0, 0.0],
            goal,
            goal_reward,
            puddles,
            horizon: 50,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Reward of occupying `state`: the goal first, then puddles, zero
    /// elsewhere (the shipped layouts keep the regions disjoint).
    pub fn reward_at(&self, state: &StatePoint) -> f64 {
        if self.goal.contains(state) {
            return self.goal_reward;
        }
        for (region, penalty) in &self.puddles {
            if region.contains(state) {
                return *penalty;
            }
        }
        0.0
    }

    /// Apply one action: displacement, then per-coordinate Gaussian
    /// noise, then componentwise clipping to the state box.
    pub fn step_state(
        &self,
        state: &StatePoint,
        action: ActionId,
        rng: &mut dyn RngCore,
    ) -> Result<StatePoint> {
        let direction = match action.0 {
            0 => [-1.0, 0.0],
            1 => [1.0, 0.0],
            2 => [0.0, 1.0],
            3 => [0.0, -1.0],
            other => {
                return Err(Error::input(format!("action index {other} outside 0..4")));
            }
        };
        let c = state.coords();
        let mut next = [0.0f64; 2];
        for i in 0..2 {
            let noise: f64 = rng.sample(StandardNormal);
            next[i] = (c[i] + self.displacement * direction[i] + self.noise_std * noise)
                .clamp(-1.0, 1.0);
        }
        Ok(StatePoint::new(next.to_vec()))
    }
}

impl Env for PuddleSpec {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0, -1.0], vec![1.0, 1.0])
    }

    fn reward_scale(&self) -> f64 {
        self.goal_reward
    }

    fn reset(&self, _seed: u64) -> StatePoint {
        StatePoint::new(self.start.to_vec())
    }

    fn reward(&self, _step: usize, state: &StatePoint, _action: ActionId) -> f64 {
        self.reward_at(state)
    }

    fn step(
        &self,
        step: usize,
        state: &StatePoint,
        action: ActionId,
        rng: &mut dyn RngCore,
    ) -> (StatePoint, f64) {
        let reward = self.reward(step, state, action);
        let next = self
            .step_state(state, action, rng)
            .expect("policy produced an invalid action index");
        (next, reward)
    }
}

/// A finite deterministic MDP embedded in a metric space, used as a
/// brute-force oracle for the kernel estimators and for optimism
/// checks.
#[derive(Clone, Debug)]
pub struct GridOracleSpec {
    coords: Vec<StatePoint>,
    transitions: Vec<Vec<usize>>,
    rewards: Vec<Vec<f64>>,
    horizon: usize,
    start: usize,
    reward_scale: f64,
}

impl GridOracleSpec {
    pub fn deterministic(
        coords: Vec<StatePoint>,
        transitions: Vec<Vec<usize>>,
        rewards: Vec<Vec<f64>>,
        horizon: usize,
        start: usize,
        reward_scale: f64,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::input("grid oracle needs at least one state"));
        }
        if horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        if start >= n {
            return Err(Error::input(format!("start state {start} outside 0..{n}")));
        }
        if transitions.len() != n || rewards.len() != n {
            return Err(Error::input("transition and reward tables must cover every state"));
        }
        let actions = transitions[0].len();
        if actions == 0 {
            return Err(Error::input("grid oracle needs at least one action"));
        }
        for (s, (t, r)) in transitions.iter().zip(&rewards).enumerate() {
            if t.len() != actions || r.len() != actions {
                return Err(Error::input(format!("state {s} has ragged action tables")));
            }
            if let Some(bad) = t.iter().find(|&&target| target >= n) {
                return Err(Error::input(format!(
                    "state {s} transitions to out-of-range state {bad}"
                )));
            }
            if let Some(bad) = r.iter().find(|&&reward| reward > reward_scale) {
                return Err(Error::input(format!(
                    "state {s} reward {bad} exceeds reward scale {reward_scale}"
                )));
            }
        }
        Ok(GridOracleSpec { coords, transitions, rewards, horizon, start, reward_scale })
    }

    pub fn state_count(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[StatePoint] {
        &self.coords
    }

    pub fn transition(&self, state: usize, action: usize) -> usize {
        self.transitions[state][action]
    }

    pub fn reward_table(&self, state: usize, action: usize) -> f64 {
        self.rewards[state][action]
    }

    /// Index of the grid state at (or numerically closest to) `point`.
    pub fn state_index(&self, point: &StatePoint) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, c) in self.coords.iter().enumerate() {
            let d = c.distance(point);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((idx, d));
            }
        }
        best.and_then(|(idx, d)| (d < 1e-9).then_some(idx))
    }
}

/// Exact optimal value and Q tables of a grid oracle, computed by
/// backward dynamic programming on the true model.
#[derive(Clone, Debug)]
pub struct OracleValues {
    /// `v[h-1][state]` for `h = 1..=horizon+1`; the last row is the
    /// terminal zero.
    pub v: Vec<Vec<f64>>,
    /// `q[h-1][state][action]` for `h = 1..=horizon`.
    pub q: Vec<Vec<Vec<f64>>>,
}

pub fn grid_oracle_values(spec: &GridOracleSpec) -> OracleValues {
    let n = spec.state_count();
    let actions = spec.transitions[0].len();
    let horizon = spec.horizon;
    let mut v = vec![vec![0.0; n]; horizon + 1];
    let mut q = vec![vec![vec![0.0; actions]; n]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..actions {
                let value = spec.rewards[s][a] + v[h + 1][spec.transitions[s][a]];
                q[h][s][a] = value;
                best = best.max(value);
            }
            v[h][s] = best;
        }
    }
    OracleValues { v, q }
}

impl Env for GridOracleSpec {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn action_count(&self) -> usize {
        self.transitions[0].len()
    }

    fn state_dim(&self) -> usize {
        self.coords[0].dim()
    }

    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.state_dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for point in &self.coords {
            for (i, c) in point.coords().iter().enumerate() {
                lo[i] = lo[i].min(*c);
                hi[i] = hi[i].max(*c);
            }
        }
        (lo, hi)
    }

    fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    fn reset(&self, _seed: u64) -> StatePoint {
        self.coords[self.start].clone()
    }

    fn reward(&self, _step: usize, state: &StatePoint, action: ActionId) -> f64 {
        let idx = self.state_index(state).expect("state off the grid");
        self.rewards[idx][action.0]
    }

    fn step(
        &self,
        step: usize,
        state: &StatePoint,
        action: ActionId,
        _rng: &mut dyn RngCore,
    ) -> (StatePoint, f64) {
        let idx = self.state_index(state).expect("state off the grid");
        let reward = self.reward(step, state, action);
        let next = self.coords[self.transitions[idx][action.0]].clone();
        (next, reward)
    }
}
