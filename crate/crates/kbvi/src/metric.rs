//! Core geometry and MDP types: points, the product metric on
//! state-action pairs, Lipschitz constants of the optimal value
//! functions, the environment interface and episode rollouts.

use crate::error::{Error, Result};
use crate::rng;
use rand::RngCore;

/// A point in a continuous state space. Coordinates are finite and the
/// dimension is fixed per environment.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePoint {
    coords: Vec<f64>,
}

impl StatePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()), "non-finite coordinate");
        StatePoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean distance to another point of the same dimension.
    pub fn distance(&self, other: &StatePoint) -> f64 {
        self.distance_sq(other).sqrt()
    }

    /// Squared Euclidean distance (cheaper when only comparisons or
    /// Gaussian exponents are needed).
    pub fn distance_sq(&self, other: &StatePoint) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }

    /// Largest absolute coordinate difference; a lower bound on the
    /// Euclidean distance.
    pub fn max_component_gap(&self, other: &StatePoint) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for StatePoint {
    fn from(coords: Vec<f64>) -> Self {
        StatePoint::new(coords)
    }
}

impl From<[f64; 2]> for StatePoint {
    fn from(coords: [f64; 2]) -> Self {
        StatePoint::new(coords.to_vec())
    }
}

/// Index into an environment's finite action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Distance contribution of the action coordinate.
///
/// Actions in the shipped environments are discrete labels with no
/// geometry, so the action metric is either a fixed gap (0 pools kernel
/// weights across actions) or `Disjoint`, which keeps every action's
/// samples fully separate (an infinite gap).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionMetric {
    Gap(f64),
    Disjoint,
}

impl ActionMetric {
    fn distance(&self, a: ActionId, b: ActionId) -> f64 {
        if a == b {
            return 0.0;
        }
        match *self {
            ActionMetric::Gap(gap) => gap,
            ActionMetric::Disjoint => f64::INFINITY,
        }
    }
}

/// Product metric on state-action pairs: Euclidean distance between
/// states plus the discrete action distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductMetric {
    pub action_metric: ActionMetric,
}

impl Default for ProductMetric {
    fn default() -> Self {
        ProductMetric { action_metric: ActionMetric::Gap(0.0) }
    }
}

impl ProductMetric {
    pub fn with_gap(gap: f64) -> Self {
        ProductMetric { action_metric: ActionMetric::Gap(gap) }
    }

    /// Per-action mode: samples taken under different actions never
    /// share kernel weight.
    pub fn disjoint() -> Self {
        ProductMetric { action_metric: ActionMetric::Disjoint }
    }

    pub fn distance(
        &self,
        p: (&StatePoint, ActionId),
        q: (&StatePoint, ActionId),
    ) -> Result<f64> {
        if p.0.dim() != q.0.dim() {
            return Err(Error::input(format!(
                "state dimension mismatch: {} vs {}",
                p.0.dim(),
                q.0.dim()
            )));
        }
        Ok(self.distance_unchecked(p, q))
    }

    pub(crate) fn distance_unchecked(
        &self,
        p: (&StatePoint, ActionId),
        q: (&StatePoint, ActionId),
    ) -> f64 {
        p.0.distance(q.0) + self.action_metric.distance(p.1, q.1)
    }
}

/// Lipschitz constants of the model and the induced constants
/// `L_h = sum_{h'=h}^{H} lambda_r * lambda_p^(H - h')` of the optimal
/// value functions. `lambda_p < 1` keeps `L_1 <= lambda_r / (1 - lambda_p)`
/// bounded independently of the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzSpec {
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub horizon: usize,
}

impl LipschitzSpec {
    pub fn new(lambda_r: f64, lambda_p: f64, horizon: usize) -> Result<Self> {
        if !(lambda_r > 0.0) || !lambda_r.is_finite() {
            return Err(Error::input(format!("lambda_r must be positive, got {lambda_r}")));
        }
        if !(lambda_p > 0.0 && lambda_p < 1.0) {
            return Err(Error::input(format!("lambda_p must lie in (0, 1), got {lambda_p}")));
        }
        if horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        Ok(LipschitzSpec { lambda_r, lambda_p, horizon })
    }

    /// `L_h` for a 1-based step index.
    pub fn coefficient(&self, step: usize) -> Result<f64> {
        if step == 0 || step > self.horizon {
            return Err(Error::input(format!(
                "step {} outside 1..={}",
                step, self.horizon
            )));
        }
        let mut total = 0.0;
        let mut power = 1.0;
        // Terms for h' = H down to h; the last step contributes lambda_r.
        for _ in step..=self.horizon {
            total += self.lambda_r * power;
            power *= self.lambda_p;
        }
        Ok(total)
    }

    /// All `L_h`, indexed by `step - 1`.
    pub fn profile(&self) -> Vec<f64> {
        (1..=self.horizon)
            .map(|h| self.coefficient(h).expect("step in range"))
            .collect()
    }
}

/// One environment step as recorded in a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryStep {
    /// 1-based step index.
    pub step: usize,
    pub state: StatePoint,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StatePoint,
}

/// A full H-step episode. Rewards may be negative (the Puddle World
/// puddles pay a penalty) but their sum never exceeds
/// `horizon * reward_scale`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new(steps: Vec<TrajectoryStep>, horizon: usize, reward_scale: f64) -> Result<Self> {
        if steps.len() != horizon {
            return Err(Error::input(format!(
                "trajectory has {} steps, expected {horizon}",
                steps.len()
            )));
        }
        let total: f64 = steps.iter().map(|s| s.reward).sum();
        let cap = horizon as f64 * reward_scale;
        if total > cap + 1e-9 {
            return Err(Error::input(format!(
                "episodic return {total} exceeds horizon * reward_scale = {cap}"
            )));
        }
        Ok(Trajectory { steps })
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// A continuous-state episodic environment.
///
/// `step` must be a pure function of `(step, state, action)` and the
/// draws it takes from `rng`; the reward depends only on
/// `(step, state, action)` and is exposed separately because the
/// planner evaluates it at representative points.
pub trait Env: Send + Sync {
    fn horizon(&self) -> usize;
    fn action_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Componentwise (lower, upper) bounds of the state box.
    fn state_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Per-step reward magnitude; episodic returns are bounded by
    /// `horizon * reward_scale`.
    fn reward_scale(&self) -> f64;
    fn reset(&self, seed: u64) -> StatePoint;
    fn reward(&self, step: usize, state: &StatePoint, action: ActionId) -> f64;
    fn step(
        &self,
        step: usize,
        state: &StatePoint,
        action: ActionId,
        rng: &mut dyn RngCore,
    ) -> (StatePoint, f64);
}

/// Roll one episode under `policy`. Deterministic for a fixed
/// `(env, policy, seed)`: step `h` draws from the stream `(seed, [h])`.
pub fn run_episode(
    env: &dyn Env,
    mut policy: impl FnMut(usize, &StatePoint) -> ActionId,
    seed: u64,
) -> Trajectory {
    let horizon = env.horizon();
    let mut state = env.reset(seed);
    let mut steps = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let action = policy(h, &state);
        let mut rng = rng::stream(seed, &[h as u64]);
        let (next_state, reward) = env.step(h, &state, action, &mut rng);
        steps.push(TrajectoryStep { step: h, state: state.clone(), action, reward, next_state: next_state.clone() });
        state = next_state;
    }
    Trajectory::new(steps, horizon, env.reward_scale())
        .expect("environment violated its reward bound")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(coords: &[f64]) -> StatePoint {
        StatePoint::new(coords.to_vec())
    }

    #[test]
    fn product_distance_identity() {
        let m = ProductMetric::default();
        let d = m
            .distance((&pt(&[0.0, 0.0]), ActionId(0)), (&pt(&[0.0, 0.0]), ActionId(0)))
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn product_distance_hypotenuse() {
        let m = ProductMetric::default();
        let d = m
            .distance((&pt(&[0.0, 0.0]), ActionId(0)), (&pt(&[0.3, 0.4]), ActionId(0)))
            .unwrap();
        assert_relative_eq!(d, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn product_distance_with_action_gap() {
        let m = ProductMetric::with_gap(1.0);
        let d = m
            .distance((&pt(&[0.0, 0.0]), ActionId(0)), (&pt(&[0.3, 0.4]), ActionId(1)))
            .unwrap();
        assert_relative_eq!(d, 1.5, max_relative = 1e-12);
    }

    #[test]
    fn product_distance_dimension_mismatch() {
        let m = ProductMetric::default();
        let err = m.distance((&pt(&[0.0]), ActionId(0)), (&pt(&[0.0, 0.0]), ActionId(0)));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn disjoint_actions_are_infinitely_far() {
        let m = ProductMetric::disjoint();
        let d = m
            .distance((&pt(&[0.0]), ActionId(0)), (&pt(&[0.0]), ActionId(1)))
            .unwrap();
        assert!(d.is_infinite());
        let same = m
            .distance((&pt(&[0.0]), ActionId(1)), (&pt(&[0.25]), ActionId(1)))
            .unwrap();
        assert_relative_eq!(same, 0.25);
    }

    #[test]
    fn lipschitz_terminal_step_is_lambda_r() {
        let spec = LipschitzSpec::new(1.0, 0.5, 3).unwrap();
        assert_relative_eq!(spec.coefficient(3).unwrap(), 1.0);
    }

    #[test]
    fn lipschitz_geometric_sum() {
        let spec = LipschitzSpec::new(1.0, 0.5, 3).unwrap();
        // 1 + 0.5 + 0.25
        assert_relative_eq!(spec.coefficient(1).unwrap(), 1.75, max_relative = 1e-12);
    }

    #[test]
    fn lipschitz_first_step_bounded_independent_of_horizon() {
        for horizon in [1usize, 5, 50, 500] {
            let spec = LipschitzSpec::new(1.0, 0.5, horizon).unwrap();
            assert!(spec.coefficient(1).unwrap() <= 1.0 / (1.0 - 0.5) + 1e-12);
        }
    }

    #[test]
    fn lipschitz_step_out_of_range() {
        let spec = LipschitzSpec::new(1.0, 0.5, 3).unwrap();
        assert!(spec.coefficient(0).is_err());
        assert!(spec.coefficient(4).is_err());
    }

    #[test]
    fn lipschitz_rejects_bad_parameters() {
        assert!(LipschitzSpec::new(0.0, 0.5, 3).is_err());
        assert!(LipschitzSpec::new(1.0, 1.0, 3).is_err());
        assert!(LipschitzSpec::new(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn trajectory_length_must_match_horizon() {
        let step = TrajectoryStep {
            step: 1,
            state: pt(&[0.0]),
            action: ActionId(0),
            reward: 0.0,
            next_state: pt(&[0.0]),
        };
        assert!(Trajectory::new(vec![step.clone()], 2, 1.0).is_err());
        assert!(Trajectory::new(vec![step], 1, 1.0).is_ok());
    }

    #[test]
    fn trajectory_rejects_overflowing_return() {
        let mk = |reward| TrajectoryStep {
            step: 1,
            state: pt(&[0.0]),
            action: ActionId(0),
            reward,
            next_state: pt(&[0.0]),
        };
        assert!(Trajectory::new(vec![mk(1.5)], 1, 1.0).is_err());
        assert!(Trajectory::new(vec![mk(-3.0)], 1, 1.0).is_ok());
    }
}
