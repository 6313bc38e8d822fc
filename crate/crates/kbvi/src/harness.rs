//! Experiment harness: flat config files, the multi-seed runner, CSV
//! records, aggregation, and the tabular-limit oracle check.

use crate::agent::{AgentConfig, KernelAgent};
use crate::bonus::{BonusConfig, BonusKind, BonusMode};
use crate::envs::{make_variant, PuddleSpec};
use crate::error::{Error, Result};
use crate::kernel::{estimate_expectation, QueryPoint, SmootherParams, StepBuffer};
use crate::metric::{run_episode, ActionId, Env, ProductMetric, StatePoint};
use crate::rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

/// Which agent a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    /// Kernel-smoothed value iteration with the Bernstein bonus.
    KbviBucb,
    /// Baseline with the Hoeffding-type bonus.
    KernelUcbvi,
    /// Ablation with no exploration bonus.
    KernelVi,
}

impl AgentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "kbvi-bucb" => Ok(AgentKind::KbviBucb),
            "kernel-ucbvi" => Ok(AgentKind::KernelUcbvi),
            "kernel-vi" => Ok(AgentKind::KernelVi),
            other => Err(Error::config(format!(
                "unknown agent '{other}' (expected kbvi-bucb, kernel-ucbvi or kernel-vi)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::KbviBucb => "kbvi-bucb",
            AgentKind::KernelUcbvi => "kernel-ucbvi",
            AgentKind::KernelVi => "kernel-vi",
        }
    }

    pub fn bonus_kind(&self) -> BonusKind {
        match self {
            AgentKind::KbviBucb => BonusKind::Bernstein,
            AgentKind::KernelUcbvi => BonusKind::Hoeffding,
            AgentKind::KernelVi => BonusKind::Zero,
        }
    }

    pub fn all() -> [AgentKind; 3] {
        [AgentKind::KbviBucb, AgentKind::KernelUcbvi, AgentKind::KernelVi]
    }
}

/// A full experiment description. Field defaults mirror the reference
/// setup: standard Puddle World, 8 seeds, 300 episodes of horizon 50,
/// bandwidth 0.025, representative merging at 0.02.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub variant: String,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub horizon: usize,
    pub sigma: f64,
    pub beta: f64,
    pub delta: f64,
    pub bonus_mode: BonusMode,
    pub bonus_scale: f64,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub merge_threshold: f64,
    pub noise_std: f64,
    /// `disjoint` keeps per-action sample pools; `gap:<g>` pools across
    /// actions at distance `g`.
    pub action_metric: ProductMetric,
    pub out: Option<PathBuf>,
    pub run_id: Option<String>,
    /// Set false to zero the wall-time column for byte-reproducible
    /// output.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: "standard".to_string(),
            agent: AgentKind::KbviBucb,
            seeds: (0..8).collect(),
            episodes: 300,
            horizon: 50,
            sigma: 0.025,
            beta: 0.05,
            delta: 0.1,
            bonus_mode: BonusMode::Scaled,
            bonus_scale: 1e-5,
            lambda_r: 10.0,
            lambda_p: 0.9,
            merge_threshold: 0.02,
            noise_std: 0.01,
            action_metric: ProductMetric::disjoint(),
            out: None,
            run_id: None,
            record_wall_time: true,
        }
    }
}

impl RunConfig {
    /// Parse the flat `key = value` config format. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: std::num::ParseFloatError| {
                Error::config(format!("line {}: key '{key}': {e}", line_no + 1))
            };
            let bad_int = |e: std::num::ParseIntError| {
                Error::config(format!("line {}: key '{key}': {e}", line_no + 1))
            };
            match key {
                "variant" => cfg.variant = value.to_string(),
                "agent" => cfg.agent = AgentKind::parse(value)?,
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>().map_err(bad_int))
                        .collect::<Result<Vec<u64>>>()?;
                }
                "episodes" => cfg.episodes = value.parse().map_err(bad_int)?,
                "horizon" => cfg.horizon = value.parse().map_err(bad_int)?,
                "sigma" => cfg.sigma = value.parse().map_err(bad)?,
                "beta" => cfg.beta = value.parse().map_err(bad)?,
                "delta" => cfg.delta = value.parse().map_err(bad)?,
                "bonus_mode" => {
                    cfg.bonus_mode = match value {
                        "theory" => BonusMode::Theory,
                        "scaled" => BonusMode::Scaled,
                        other => {
                            return Err(Error::config(format!(
                                "line {}: unknown bonus mode '{other}'",
                                line_no + 1
                            )))
                        }
                    }
                }
                "bonus_scale" => cfg.bonus_scale = value.parse().map_err(bad)?,
                "lambda_r" => cfg.lambda_r = value.parse().map_err(bad)?,
                "lambda_p" => cfg.lambda_p = value.parse().map_err(bad)?,
                "merge_threshold" => cfg.merge_threshold = value.parse().map_err(bad)?,
                "noise_std" => cfg.noise_std = value.parse().map_err(bad)?,
                "action_metric" => {
                    cfg.action_metric = match value {
                        "disjoint" => ProductMetric::disjoint(),
                        other => match other.strip_prefix("gap:") {
                            Some(g) => ProductMetric::with_gap(g.parse().map_err(bad)?),
                            None => {
                                return Err(Error::config(format!(
                                    "line {}: unknown action metric '{other}'",
                                    line_no + 1
                                )))
                            }
                        },
                    }
                }
                "out" => cfg.out = Some(PathBuf::from(value)),
                "run_id" => cfg.run_id = Some(value.to_string()),
                "wall_time" => {
                    cfg.record_wall_time = value.parse().map_err(|e| {
                        Error::config(format!("line {}: key 'wall_time': {e}", line_no + 1))
                    })?;
                }
                other => {
                    return Err(Error::config(format!(
                        "line {}: unknown key '{other}'",
                        line_no + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("need at least one seed"));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}_{}", self.variant, self.agent.name()))
    }

    pub fn env(&self) -> Result<PuddleSpec> {
        Ok(make_variant(&self.variant)?
            .with_noise(self.noise_std)
            .with_horizon(self.horizon))
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        let bonus = match self.bonus_mode {
            BonusMode::Theory => BonusConfig::theory(),
            BonusMode::Scaled => BonusConfig::scaled(self.bonus_scale)?,
        };
        Ok(AgentConfig {
            bonus_kind: self.agent.bonus_kind(),
            bonus,
            sigma: self.sigma,
            beta: self.beta,
            delta: self.delta,
            lambda_r: self.lambda_r,
            lambda_p: self.lambda_p,
            merge_threshold: self.merge_threshold,
            episodes: self.episodes,
            metric: self.action_metric,
        })
    }
}

/// One `(seed, episode)` outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub run_id: String,
    pub agent: String,
    pub seed: u64,
    pub episode: usize,
    pub ret: f64,
    pub wall_ms: u64,
}

/// Train one agent per seed for `episodes` episodes and collect every
/// episodic return. Seeds run in parallel; records come back sorted by
/// `(seed, episode)` and are bit-reproducible for a fixed config (up to
/// the wall-time column).
pub fn run_experiment(config: &RunConfig) -> Result<Vec<EpisodeRecord>> {
    config.validate()?;
    let env = Arc::new(config.env()?);
    let agent_config = config.agent_config()?;
    let run_id = config.run_id();
    let agent_name = config.agent.name().to_string();

    let mut per_seed: Vec<Vec<EpisodeRecord>> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<EpisodeRecord>> {
            let env: Arc<dyn Env> = env.clone();
            let mut agent = KernelAgent::new(env.clone(), agent_config.clone())?;
            let mut records = Vec::with_capacity(config.episodes);
            for episode in 1..=config.episodes {
                let started = Instant::now();
                let trajectory = run_episode(
                    &*env,
                    |h, s| agent.act(h, s),
                    rng::derive_seed(seed, &[episode as u64]),
                );
                agent.observe(&trajectory);
                agent.plan();
                let wall_ms = if config.record_wall_time {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                };
                records.push(EpisodeRecord {
                    run_id: run_id.clone(),
                    agent: agent_name.clone(),
                    seed,
                    episode,
                    ret: trajectory.total_return(),
                    wall_ms,
                });
            }
            Ok(records)
        })
        .collect::<Result<Vec<_>>>()?;

    per_seed.sort_by_key(|records| records.first().map(|r| r.seed));
    Ok(per_seed.into_iter().flatten().collect())
}

pub const RECORD_CSV_HEADER: &str = "run_id,agent,seed,episode,return,wall_ms";

pub fn write_records_csv(records: &[EpisodeRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{RECORD_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{},{}", r.run_id, r.agent, r.seed, r.episode, r.ret, r.wall_ms)?;
    }
    Ok(())
}

pub fn read_records_csv(input: &mut impl BufRead) -> Result<Vec<EpisodeRecord>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::input("empty records csv"))?;
    if header.trim() != RECORD_CSV_HEADER {
        return Err(Error::input(format!(
            "unexpected csv header '{}', expected '{RECORD_CSV_HEADER}'",
            header.trim()
        )));
    }
    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::input(format!(
                "records csv line {}: expected 6 fields, got {}",
                line_no + 2,
                fields.len()
            )));
        }
        let ctx = |e: String| Error::input(format!("records csv line {}: {e}", line_no + 2));
        records.push(EpisodeRecord {
            run_id: fields[0].to_string(),
            agent: fields[1].to_string(),
            seed: fields[2].parse().map_err(|e| ctx(format!("{e}")))?,
            episode: fields[3].parse().map_err(|e| ctx(format!("{e}")))?,
            ret: fields[4].parse().map_err(|e| ctx(format!("{e}")))?,
            wall_ms: fields[5].parse().map_err(|e| ctx(format!("{e}")))?,
        });
    }
    Ok(records)
}

/// Mean and population standard deviation of one episode index across
/// seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Summary of a window of episodes: per-seed window means together with
/// their mean and population standard deviation across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStats {
    pub first_episode: usize,
    pub last_episode: usize,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct Aggregate {
    pub per_episode: Vec<EpisodeStats>,
    /// First 10% of episodes (at least one).
    pub first_window: WindowStats,
    /// Last 10% of episodes (at least one).
    pub last_window: WindowStats,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate records of one run across seeds. Every seed must cover the
/// same episode indices.
pub fn aggregate(records: &[EpisodeRecord]) -> Result<Aggregate> {
    if records.is_empty() {
        return Err(Error::input("no records to aggregate"));
    }
    let run_ids: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.run_id.as_str()).collect();
    if run_ids.len() > 1 {
        return Err(Error::input(format!(
            "aggregate one run at a time; found run ids {run_ids:?}"
        )));
    }
    let mut by_seed: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        if by_seed.entry(r.seed).or_default().insert(r.episode, r.ret).is_some() {
            return Err(Error::input(format!(
                "duplicate record for seed {} episode {}",
                r.seed, r.episode
            )));
        }
    }
    let episodes: Vec<usize> = by_seed.values().next().unwrap().keys().copied().collect();
    for (seed, per_episode) in &by_seed {
        let theirs: Vec<usize> = per_episode.keys().copied().collect();
        if theirs != episodes {
            return Err(Error::input(format!(
                "seed {seed} covers different episodes than the first seed"
            )));
        }
    }

    let per_episode: Vec<EpisodeStats> = episodes
        .iter()
        .map(|&episode| {
            let values: Vec<f64> = by_seed.values().map(|m| m[&episode]).collect();
            let (mean, std) = mean_std(&values);
            EpisodeStats { episode, mean, std, seeds: values.len() }
        })
        .collect();

    let window_len = (episodes.len() / 10).max(1);
    let window = |indices: &[usize]| -> WindowStats {
        let per_seed: Vec<(u64, f64)> = by_seed
            .iter()
            .map(|(&seed, m)| {
                let total: f64 = indices.iter().map(|e| m[e]).sum();
                (seed, total / indices.len() as f64)
            })
            .collect();
        let values: Vec<f64> = per_seed.iter().map(|(_, v)| *v).collect();
        let (mean, std) = mean_std(&values);
        WindowStats {
            first_episode: *indices.first().unwrap(),
            last_episode: *indices.last().unwrap(),
            per_seed,
            mean,
            std,
        }
    };
    let first_window = window(&episodes[..window_len]);
    let last_window = window(&episodes[episodes.len() - window_len..]);

    Ok(Aggregate { per_episode, first_window, last_window })
}

pub fn write_aggregate_csv(aggregate: &Aggregate, out: &mut impl Write) -> Result<()> {
    writeln!(out, "episode,mean,std,seeds")?;
    for s in &aggregate.per_episode {
        writeln!(out, "{},{},{},{}", s.episode, s.mean, s.std, s.seeds)?;
    }
    Ok(())
}

/// Maximum absolute deviation between the kernel transition-expectation
/// estimate and the count-based tabular estimate over a scripted grid
/// data set.
///
/// States sit on a `grid_size x grid_size` lattice with the given
/// spacing; every `(state, action, step)` triple receives a scripted
/// set of next-state observations. With `sigma = sigma_ratio * spacing`
/// far below the spacing and a vanishing `beta`, cross-point kernel
/// weights underflow and the smoothed estimate must reproduce the
/// per-triple empirical mean.
pub fn oracle_check(
    grid_spacing: f64,
    grid_size: usize,
    sigma_ratio: f64,
    beta: f64,
) -> Result<f64> {
    if !(grid_spacing > 0.0) {
        return Err(Error::input(format!("grid spacing must be positive, got {grid_spacing}")));
    }
    if grid_size == 0 {
        return Ok(0.0);
    }
    let params = SmootherParams::new(sigma_ratio * grid_spacing, beta)?;
    let metric = ProductMetric::disjoint();
    let actions = 2usize;
    let steps = 2usize;
    let point = |i: usize, j: usize| {
        StatePoint::new(vec![i as f64 * grid_spacing, j as f64 * grid_spacing])
    };
    // f distinguishes grid points strongly but stays O(grid extent).
    let f = |s: &StatePoint| 10.0 * s.coords()[0] + s.coords()[1];

    let mut max_deviation: f64 = 0.0;
    for step in 1..=steps {
        let mut buffer = StepBuffer::default();
        let mut truths: Vec<(QueryPoint, f64)> = Vec::new();
        for i in 0..grid_size {
            for j in 0..grid_size {
                for action in 0..actions {
                    let query = QueryPoint::new(point(i, j), ActionId(action));
                    let visits = 1 + (i + j + action + step) % 3;
                    let mut total = 0.0;
                    for visit in 0..visits {
                        let next = point((i + visit) % grid_size, j);
                        total += f(&next);
                        buffer.merge_or_insert(query.clone(), next, 0.0, &metric);
                    }
                    truths.push((query, total / visits as f64));
                }
            }
        }
        for (query, tabular_mean) in &truths {
            let weights = buffer.normalized_weights(query, &params, &metric);
            let f_values: Vec<f64> =
                buffer.samples().iter().map(|s| f(&s.next_state)).collect();
            let estimate = estimate_expectation(&f_values, &weights)?;
            max_deviation = max_deviation.max((estimate - tabular_mean).abs());
        }
    }
    Ok(max_deviation)
}
