// Temporary tuning probe with planner diagnostics; not part of the deliverable.
use kbvi::agent::{interpolate_q, KernelAgent};
use kbvi::harness::{AgentKind, RunConfig};
use kbvi::metric::{run_episode, ActionId, Env, StatePoint};
use kbvi::rng;
use std::sync::Arc;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3e-6);
    let agent_kind = args.get(2).map(|s| AgentKind::parse(s).unwrap()).unwrap_or(AgentKind::KbviBucb);
    let episodes: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let beta: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let lambda_r: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let noise: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let lambda_p: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.9);

    let mut cfg = RunConfig::default();
    cfg.agent = agent_kind;
    cfg.bonus_scale = scale;
    cfg.beta = beta;
    cfg.lambda_r = lambda_r;
    cfg.lambda_p = lambda_p;
    cfg.episodes = episodes;
    cfg.noise_std = noise;
    let env = Arc::new(cfg.env().unwrap());
    let env_dyn: Arc<dyn Env> = env.clone();
    let mut agent = KernelAgent::new(env_dyn.clone(), cfg.agent_config().unwrap()).unwrap();

    let start = StatePoint::new(vec![0.0, 0.0]);
    let seed = 0u64;
    let mut goal_steps_total = 0usize;
    let mut goal_episodes = 0usize;
    for k in 1..=episodes {
        let traj = run_episode(&*env_dyn, |h, s| agent.act(h, s), rng::derive_seed(seed, &[k as u64]));
        let in_goal = traj
            .steps()
            .iter()
            .filter(|s| s.state.coords()[0] >= 0.8 && s.state.coords()[1] >= 0.8)
            .count();
        goal_steps_total += in_goal;
        goal_episodes += usize::from(in_goal > 0);
        agent.observe(&traj);
        agent.plan();
        if k % 30 == 0 || k == 1 {
            let tables = agent.tables();
            let lip1 = agent.planner().consts.lipschitz_at(1);
            let q_start: Vec<String> = (0..4)
                .map(|a| {
                    format!(
                        "{:.0}",
                        interpolate_q(
                            (&start, ActionId(a)),
                            tables.step(1),
                            lip1,
                            &agent.planner().metric,
                            tables.h_cap
                        )
                    )
                })
                .collect();
            let buf25 = agent.buffers().step(25);
            let t25 = tables.step(25);
            let (qmin, qmax) = t25
                .q_tilde
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| (lo.min(q), hi.max(q)));
            let end_state = &traj.steps()[traj.len() - 1].next_state;
            println!(
                "k={k:>3} ret={:>7.1} reps25={:>3} samp25={:>3} q25=[{qmin:.0},{qmax:.0}] V1(start)={:.0} Qstart=[{}] end=({:+.2},{:+.2}) goalsteps={goal_steps_total} goaleps={goal_episodes}",
                traj.total_return(),
                buf25.reps().len(),
                buf25.sample_count(),
                agent.state_value(1, &start),
                q_start.join(","),
                end_state.coords()[0],
                end_state.coords()[1],
            );
        }
    }
}
