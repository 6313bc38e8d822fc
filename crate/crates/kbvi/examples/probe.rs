// Temporary tuning probe; not part of the deliverable surface.
use kbvi::harness::{aggregate, run_experiment, AgentKind, RunConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-5);
    let variant = args.get(2).cloned().unwrap_or_else(|| "standard".to_string());
    let episodes: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let seeds: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let delta: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let beta: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let lambda_r: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let lambda_p: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let noise: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(0.01);

    let pair_only = args.get(10).map(|s| s == "pair").unwrap_or(false);
    for agent in AgentKind::all() {
        if pair_only && agent == AgentKind::KernelUcbvi {
            continue;
        }
        let mut cfg = RunConfig::default();
        cfg.agent = agent;
        cfg.variant = variant.clone();
        cfg.bonus_scale = scale;
        cfg.episodes = episodes;
        cfg.delta = delta;
        cfg.beta = beta;
        cfg.lambda_r = lambda_r;
        cfg.lambda_p = lambda_p;
        cfg.noise_std = noise;
        cfg.seeds = (0..seeds).collect();
        cfg.record_wall_time = false;
        let started = Instant::now();
        let records = run_experiment(&cfg).unwrap();
        let agg = aggregate(&records).unwrap();
        let trail: Vec<String> = agg
            .per_episode
            .iter()
            .step_by((episodes / 10).max(1))
            .map(|s| format!("{:.0}", s.mean))
            .collect();
        let per_seed: Vec<String> = agg
            .last_window
            .per_seed
            .iter()
            .map(|(_, v)| format!("{:.0}", v))
            .collect();
        println!(
            "{:<13} scale={scale:<8} first={:>8.1}±{:>6.1} last={:>8.1}±{:>6.1}  trail=[{}]  ({:.1}s)",
            agent.name(),
            agg.first_window.mean,
            agg.first_window.std,
            agg.last_window.mean,
            agg.last_window.std,
            trail.join(","),
            started.elapsed().as_secs_f64()
        );
        println!("              last-window per seed: [{}]", per_seed.join(","));
    }
}
