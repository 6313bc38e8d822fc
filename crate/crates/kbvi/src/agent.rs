//! Optimistic planning over kernel-smoothed transition estimates, and
//! the agents built on it.
//!
//! Between episodes the planner runs backward induction over the stored
//! representatives: at each step it forms the smoothed next-value
//! expectation and variance, adds the configured exploration bonus, and
//! extends the resulting point estimates to the whole space by
//! Lipschitz interpolation (a minimum over cones, which is
//! `L_h`-Lipschitz by construction). Values are clipped to
//! `[0, H * reward_scale]`. Cold start (no data) falls back to the
//! optimistic default: every action looks worth the cap.

use crate::bonus::{bernstein_bonus, hoeffding_bonus, BonusConfig, BonusKind, TheoryConstants};
use crate::error::{Error, Result};
use crate::kernel::{QueryPoint, SmootherParams, TransitionBuffer};
use crate::metric::{ActionId, ActionMetric, Env, ProductMetric, StatePoint, Trajectory};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Reward knowledge available to the planner (the reward functions are
/// specified, not learned).
pub trait RewardOracle: Send + Sync {
    fn reward(&self, step: usize, state: &StatePoint, action: ActionId) -> f64;
}

impl<E: Env + ?Sized> RewardOracle for E {
    fn reward(&self, step: usize, state: &StatePoint, action: ActionId) -> f64 {
        Env::reward(self, step, state, action)
    }
}

/// Adapter exposing an environment's (known) reward model to the
/// planner without handing over its dynamics.
struct EnvReward(Arc<dyn Env>);

impl RewardOracle for EnvReward {
    fn reward(&self, step: usize, state: &StatePoint, action: ActionId) -> f64 {
        Env::reward(&*self.0, step, state, action)
    }
}

/// Per-step optimistic estimates produced by backward induction.
#[derive(Clone, Debug, Default)]
pub struct StepTable {
    /// Representative state-action pairs, aligned with the buffer.
    pub points: Vec<QueryPoint>,
    /// Optimistic Q at each representative.
    pub q_tilde: Vec<f64>,
    /// Clipped next-step values at the stored next states of this
    /// step's samples (all zero at the terminal step).
    pub v_next_at_samples: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ValueTables {
    /// Indexed by `step - 1`.
    pub steps: Vec<StepTable>,
    /// Value cap `H * reward_scale`.
    pub h_cap: f64,
}

impl ValueTables {
    pub fn empty(horizon: usize, h_cap: f64) -> Self {
        ValueTables { steps: vec![StepTable::default(); horizon], h_cap }
    }

    pub fn step(&self, step: usize) -> &StepTable {
        &self.steps[step - 1]
    }
}

/// Lipschitz interpolation of stored Q estimates:
/// `min_l { q_tilde_l + lipschitz * rho(query, point_l) }`, or
/// `default_if_empty` when no stored point is at finite distance.
pub fn interpolate_q(
    query: (&StatePoint, ActionId),
    table: &StepTable,
    lipschitz: f64,
    metric: &ProductMetric,
    default_if_empty: f64,
) -> f64 {
    let (state, action) = query;
    let mut best = f64::INFINITY;
    for (point, q) in table.points.iter().zip(&table.q_tilde) {
        let action_gap = match metric.action_metric {
            ActionMetric::Gap(gap) => {
                if action == point.action {
                    0.0
                } else {
                    gap
                }
            }
            ActionMetric::Disjoint => {
                if action == point.action {
                    0.0
                } else {
                    continue;
                }
            }
        };
        // The largest coordinate gap lower-bounds the distance; skip the
        // square root when even that cannot beat the current minimum.
        let lower = q + lipschitz * (state.max_component_gap(&point.state) + action_gap);
        if lower >= best {
            continue;
        }
        let d = state.distance(&point.state) + action_gap;
        best = best.min(q + lipschitz * d);
    }
    if best.is_finite() {
        best
    } else {
        default_if_empty
    }
}

/// Greedy action at `state`: argmax over the finite action set of the
/// interpolated Q values, ties broken by the lowest action index.
pub fn greedy_action(
    step: usize,
    state: &StatePoint,
    tables: &ValueTables,
    action_count: usize,
    lipschitz: f64,
    metric: &ProductMetric,
) -> ActionId {
    let table = tables.step(step);
    let mut best_action = 0;
    let mut best_value = f64::NEG_INFINITY;
    for action in 0..action_count {
        let value =
            interpolate_q((state, ActionId(action)), table, lipschitz, metric, tables.h_cap);
        if value > best_value {
            best_value = value;
            best_action = action;
        }
    }
    ActionId(best_action)
}

/// Everything backward induction needs besides the data.
#[derive(Clone)]
pub struct Planner {
    pub reward: Arc<dyn RewardOracle>,
    pub params: SmootherParams,
    pub metric: ProductMetric,
    pub consts: TheoryConstants,
    pub bonus_cfg: BonusConfig,
    pub bonus_kind: BonusKind,
    pub delta: f64,
    pub h_cap: f64,
    pub action_count: usize,
}

impl Planner {
    /// Backward induction over the buffered episodes `1..k-1`.
    ///
    /// For `h = H..1` and every stored representative `m`:
    /// `q_tilde_h(m) = r_h(m) + sum_l w~_l V_{h+1}(next_l) + b_h(m)`,
    /// with `V_{h+1}` obtained from the previously built step table by
    /// clipped greedy interpolation and `V_{H+1} = 0`. An empty buffer
    /// (k = 1) yields empty tables; acting then falls back to the
    /// optimistic default.
    pub fn backward_induction(
        &self,
        buffers: &TransitionBuffer,
        _episode: usize,
    ) -> ValueTables {
        let horizon = buffers.horizon();
        let mut tables = ValueTables::empty(horizon, self.h_cap);
        for h in (1..=horizon).rev() {
            let buf = buffers.step(h);
            if buf.is_empty() {
                continue;
            }
            let v_next: Vec<f64> = if h == horizon {
                vec![0.0; buf.samples().len()]
            } else {
                let next_lip = self.consts.lipschitz_at(h + 1);
                let next_table = tables.step(h + 1).clone();
                buf.samples()
                    .par_iter()
                    .map(|sample| {
                        let mut best = f64::NEG_INFINITY;
                        for action in 0..self.action_count {
                            best = best.max(interpolate_q(
                                (&sample.next_state, ActionId(action)),
                                &next_table,
                                next_lip,
                                &self.metric,
                                self.h_cap,
                            ));
                        }
                        best.clamp(0.0, self.h_cap)
                    })
                    .collect()
            };
            let q_tilde: Vec<f64> = buf
                .reps()
                .par_iter()
                .map(|rep| {
                    let (count, expectation, variance) =
                        buf.smoothed_moments(rep, &v_next, &self.params, &self.metric);
                    let bonus = match self.bonus_kind {
                        BonusKind::Bernstein => bernstein_bonus(
                            variance,
                            count,
                            self.h_cap,
                            &self.consts,
                            &self.bonus_cfg,
                            self.params.sigma,
                        )
                        .expect("variance and count are in range"),
                        BonusKind::Hoeffding => hoeffding_bonus(
                            count,
                            self.h_cap,
                            self.delta,
                            self.params.sigma,
                            &self.consts,
                            &self.bonus_cfg,
                        ),
                        BonusKind::Zero => 0.0,
                    };
                    self.reward.reward(h, &rep.state, rep.action) + expectation + bonus
                })
                .collect();
            tables.steps[h - 1] =
                StepTable { points: buf.reps().to_vec(), q_tilde, v_next_at_samples: v_next };
        }
        tables
    }
}

/// Shared configuration of the kernel agents.
#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub bonus_kind: BonusKind,
    pub bonus: BonusConfig,
    pub sigma: f64,
    pub beta: f64,
    pub delta: f64,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub merge_threshold: f64,
    /// Planned episode budget `K` (enters the derived constants).
    pub episodes: usize,
    pub metric: ProductMetric,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            bonus_kind: BonusKind::Bernstein,
            bonus: BonusConfig::scaled(1e-5).expect("positive scale"),
            sigma: 0.025,
            beta: 0.05,
            delta: 0.1,
            lambda_r: 10.0,
            lambda_p: 0.9,
            merge_threshold: 0.02,
            episodes: 300,
            metric: ProductMetric::disjoint(),
        }
    }
}

/// A model-based agent: collects transitions, replans between episodes,
/// acts greedily with respect to the interpolated optimistic Q values.
pub struct KernelAgent {
    env: Arc<dyn Env>,
    config: AgentConfig,
    planner: Planner,
    buffers: TransitionBuffer,
    tables: ValueTables,
    episodes_observed: usize,
}

impl KernelAgent {
    pub fn new(env: Arc<dyn Env>, config: AgentConfig) -> Result<Self> {
        let params = SmootherParams::new(config.sigma, config.beta)?;
        let consts = crate::bonus::make_theory_constants(
            config.delta,
            config.beta,
            config.sigma,
            env.horizon(),
            config.episodes,
            config.lambda_p,
            config.lambda_r,
            &crate::kernel::GaussianKernel,
        )?;
        if !(config.merge_threshold >= 0.0) {
            return Err(Error::input(format!(
                "merge threshold must be >= 0, got {}",
                config.merge_threshold
            )));
        }
        let h_cap = env.horizon() as f64 * env.reward_scale();
        let planner = Planner {
            reward: Arc::new(EnvReward(env.clone())),
            params,
            metric: config.metric,
            consts,
            bonus_cfg: config.bonus,
            bonus_kind: config.bonus_kind,
            delta: config.delta,
            h_cap,
            action_count: env.action_count(),
        };
        let horizon = env.horizon();
        let buffers = TransitionBuffer::new(horizon, config.merge_threshold);
        Ok(KernelAgent {
            env,
            config,
            planner,
            buffers,
            tables: ValueTables::empty(horizon, h_cap),
            episodes_observed: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn buffers(&self) -> &TransitionBuffer {
        &self.buffers
    }

    pub fn tables(&self) -> &ValueTables {
        &self.tables
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn episodes_observed(&self) -> usize {
        self.episodes_observed
    }

    /// Greedy action from the current tables (data of episodes `< k`).
    pub fn act(&self, step: usize, state: &StatePoint) -> ActionId {
        greedy_action(
            step,
            state,
            &self.tables,
            self.env.action_count(),
            self.planner.consts.lipschitz_at(step),
            &self.planner.metric,
        )
    }

    /// Record one finished episode into the per-step buffers.
    pub fn observe(&mut self, trajectory: &Trajectory) {
        for step in trajectory.steps() {
            self.buffers.insert(
                step.step,
                QueryPoint { state: step.state.clone(), action: step.action },
                step.next_state.clone(),
                &self.planner.metric,
            );
        }
        self.episodes_observed += 1;
    }

    /// Rebuild the value tables from the buffered data.
    pub fn plan(&mut self) {
        self.tables = self.planner.backward_induction(&self.buffers, self.episodes_observed + 1);
    }

    /// Estimated state value `min{max_a Q_h(s, a), H_cap}` clipped to
    /// `[0, H_cap]`, from the current tables.
    pub fn state_value(&self, step: usize, state: &StatePoint) -> f64 {
        let table = self.tables.step(step);
        let lip = self.planner.consts.lipschitz_at(step);
        let mut best = f64::NEG_INFINITY;
        for action in 0..self.env.action_count() {
            best = best.max(interpolate_q(
                (state, ActionId(action)),
                table,
                lip,
                &self.planner.metric,
                self.tables.h_cap,
            ));
        }
        best.clamp(0.0, self.tables.h_cap)
    }

    /// Serialize parameters, progress and buffers to a versioned flat
    /// file: a key-value header followed by CSV rows per buffered
    /// observation.
    pub fn save_checkpoint(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "kbvi-agent-checkpoint v1")?;
        writeln!(out, "bonus_kind = {}", bonus_kind_name(self.config.bonus_kind))?;
        let (mode, scale) = match self.config.bonus.mode {
            crate::bonus::BonusMode::Theory => ("theory", self.config.bonus.scale),
            crate::bonus::BonusMode::Scaled => ("scaled", self.config.bonus.scale),
        };
        writeln!(out, "bonus_mode = {mode}")?;
        writeln!(out, "bonus_scale = {scale}")?;
        writeln!(out, "sigma = {}", self.config.sigma)?;
        writeln!(out, "beta = {}", self.config.beta)?;
        writeln!(out, "delta = {}", self.config.delta)?;
        writeln!(out, "lambda_r = {}", self.config.lambda_r)?;
        writeln!(out, "lambda_p = {}", self.config.lambda_p)?;
        writeln!(out, "merge_threshold = {}", self.config.merge_threshold)?;
        writeln!(out, "episodes = {}", self.config.episodes)?;
        let metric = match self.config.metric.action_metric {
            ActionMetric::Disjoint => "disjoint".to_string(),
            ActionMetric::Gap(g) => format!("gap:{g}"),
        };
        writeln!(out, "action_metric = {metric}")?;
        writeln!(out, "horizon = {}", self.env.horizon())?;
        writeln!(out, "episodes_observed = {}", self.episodes_observed)?;
        writeln!(out, "[buffers]")?;
        self.buffers.write_csv(out)?;
        Ok(())
    }

    /// Restore an agent saved with [`KernelAgent::save_checkpoint`],
    /// re-attaching it to `env`, and replan from the restored buffers.
    pub fn load_checkpoint(input: &mut impl BufRead, env: Arc<dyn Env>) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::input("empty checkpoint"))?;
        if header.trim() != "kbvi-agent-checkpoint v1" {
            return Err(Error::input(format!("unsupported checkpoint header '{header}'")));
        }
        let mut fields = std::collections::HashMap::new();
        let mut buffer_csv = String::new();
        let mut in_buffers = false;
        for line in lines {
            let line = line?;
            if in_buffers {
                buffer_csv.push_str(&line);
                buffer_csv.push('\n');
                continue;
            }
            let trimmed = line.trim();
            if trimmed == "[buffers]" {
                in_buffers = true;
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::input(format!("malformed checkpoint line '{trimmed}'")))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            fields
                .get(key)
                .ok_or_else(|| Error::input(format!("checkpoint missing key '{key}'")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|e| Error::input(format!("checkpoint key '{key}': {e}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|e| Error::input(format!("checkpoint key '{key}': {e}")))
        };

        let horizon = parse_usize("horizon")?;
        if horizon != env.horizon() {
            return Err(Error::input(format!(
                "checkpoint horizon {horizon} does not match environment horizon {}",
                env.horizon()
            )));
        }
        let metric = match get("action_metric")?.as_str() {
            "disjoint" => ProductMetric::disjoint(),
            other => match other.strip_prefix("gap:") {
                Some(g) => ProductMetric::with_gap(
                    g.parse()
                        .map_err(|e| Error::input(format!("checkpoint action gap: {e}")))?,
                ),
                None => return Err(Error::input(format!("unknown action metric '{other}'"))),
            },
        };
        let scale = parse_f64("bonus_scale")?;
        let bonus = match get("bonus_mode")?.as_str() {
            "theory" => BonusConfig::theory(),
            "scaled" => BonusConfig::scaled(scale)?,
            other => return Err(Error::input(format!("unknown bonus mode '{other}'"))),
        };
        let config = AgentConfig {
            bonus_kind: parse_bonus_kind(get("bonus_kind")?)?,
            bonus,
            sigma: parse_f64("sigma")?,
            beta: parse_f64("beta")?,
            delta: parse_f64("delta")?,
            lambda_r: parse_f64("lambda_r")?,
            lambda_p: parse_f64("lambda_p")?,
            merge_threshold: parse_f64("merge_threshold")?,
            episodes: parse_usize("episodes")?,
            metric,
        };
        let episodes_observed = parse_usize("episodes_observed")?;
        let mut agent = KernelAgent::new(env, config)?;
        agent.buffers = TransitionBuffer::read_csv(
            &mut buffer_csv.as_bytes(),
            horizon,
            agent.config.merge_threshold,
            &agent.config.metric,
        )?;
        agent.episodes_observed = episodes_observed;
        agent.plan();
        Ok(agent)
    }
}

pub fn bonus_kind_name(kind: BonusKind) -> &'static str {
    match kind {
        BonusKind::Bernstein => "bernstein",
        BonusKind::Hoeffding => "hoeffding",
        BonusKind::Zero => "zero",
    }
}

pub fn parse_bonus_kind(name: &str) -> Result<BonusKind> {
    match name {
        "bernstein" => Ok(BonusKind::Bernstein),
        "hoeffding" => Ok(BonusKind::Hoeffding),
        "zero" => Ok(BonusKind::Zero),
        other => Err(Error::input(format!("unknown bonus kind '{other}'"))),
    }
}
