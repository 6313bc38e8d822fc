//! The `kbvi` command line: experiment runs, parameter sweeps, the
//! Bernstein coverage harness, the tabular oracle check and CSV
//! aggregation.
//!
//! Exit codes: 0 on success, 1 on validation failure (bad flags,
//! malformed config, failed check), 2 on i/o failure.

use crate::concentration::{coverage_budget, coverage_experiment, MartingaleFamily};
use crate::error::{Error, Result};
use crate::harness::{
    aggregate, oracle_check, read_records_csv, run_experiment, write_aggregate_csv,
    write_records_csv, RunConfig,
};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "kbvi", version, about = "Kernel-smoothed optimistic value iteration benchmark suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write episode records as CSV.
    Run {
        /// Flat key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seeds with seed_base..seed_base+n.
        #[arg(long)]
        seed_base: Option<u64>,
    },
    /// Grid-sweep bandwidth, bonus scale and Lipschitz constants over a
    /// base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for one CSV per combination.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated bandwidths, e.g. `0.01,0.025,0.05`.
        #[arg(long)]
        sigma: Option<String>,
        /// Comma-separated bonus scales.
        #[arg(long)]
        scale: Option<String>,
        /// Comma-separated reward Lipschitz constants.
        #[arg(long)]
        lambda_r: Option<String>,
        /// Comma-separated transition Lipschitz constants.
        #[arg(long)]
        lambda_p: Option<String>,
        #[arg(long)]
        seed_base: Option<u64>,
    },
    /// Monte Carlo coverage check of the martingale Bernstein bound.
    /// Exits nonzero if any family exceeds its failure budget.
    VerifyBernstein {
        /// Write the coverage CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare kernel transition estimates against count-based tabular
    /// estimates on a scripted grid.
    OracleCheck {
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, default_value_t = 4)]
        size: usize,
        /// Bandwidth as a fraction of the grid spacing.
        #[arg(long, default_value_t = 0.01)]
        sigma_ratio: f64,
        #[arg(long, default_value_t = 1e-8)]
        beta: f64,
        /// Fail (exit 1) if the deviation exceeds this bound.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Aggregate an episode-record CSV into per-episode mean/std plus
    /// first/last-window summaries.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        /// Write the summary CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `args` and dispatch. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(path: &Path, seed_base: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(base) = seed_base {
        cfg.seeds = (0..cfg.seeds.len() as u64).map(|i| base + i).collect();
    }
    Ok(cfg)
}

fn write_run_csv(cfg: &RunConfig) -> Result<()> {
    let records = run_experiment(cfg)?;
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.csv", cfg.run_id()));
            let mut file = fs::File::create(&path)?;
            write_records_csv(&records, &mut file)?;
            eprintln!("wrote {} ({} records)", path.display(), records.len());
        }
        None => {
            let stdout = std::io::stdout();
            write_records_csv(&records, &mut stdout.lock())?;
        }
    }
    Ok(())
}

fn parse_list(name: &str, value: &Option<String>, default: f64) -> Result<Vec<f64>> {
    match value {
        None => Ok(vec![default]),
        Some(text) => text
            .split(',')
            .map(|item| {
                item.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::input(format!("--{name} entry '{item}': {e}")))
            })
            .collect(),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, seed_base } => {
            let mut cfg = load_config(&config, seed_base)?;
            if let Some(out) = out {
                cfg.out = Some(out);
            }
            write_run_csv(&cfg)
        }
        Command::Sweep { config, out, sigma, scale, lambda_r, lambda_p, seed_base } => {
            let base = load_config(&config, seed_base)?;
            let sigmas = parse_list("sigma", &sigma, base.sigma)?;
            let scales = parse_list("scale", &scale, base.bonus_scale)?;
            let lambda_rs = parse_list("lambda-r", &lambda_r, base.lambda_r)?;
            let lambda_ps = parse_list("lambda-p", &lambda_p, base.lambda_p)?;
            for &sigma in &sigmas {
                for &scale in &scales {
                    for &lr in &lambda_rs {
                        for &lp in &lambda_ps {
                            let mut cfg = base.clone();
                            cfg.sigma = sigma;
                            cfg.bonus_scale = scale;
                            cfg.lambda_r = lr;
                            cfg.lambda_p = lp;
                            cfg.run_id = Some(format!(
                                "{}_sig{sigma}_sc{scale}_lr{lr}_lp{lp}",
                                base.run_id()
                            ));
                            cfg.out = Some(out.clone());
                            write_run_csv(&cfg)?;
                        }
                    }
                }
            }
            Ok(())
        }
        Command::VerifyBernstein { out, trials, seed } => {
            let mut csv = String::from("family,n,delta,trials,violation_rate,budget,slack,pass\n");
            let mut all_pass = true;
            for family in MartingaleFamily::all() {
                for &n in &[64usize, 256, 1024] {
                    for &delta in &[0.005f64, 0.01] {
                        let rate = coverage_experiment(family, n, delta, trials, seed)?;
                        let budget = coverage_budget(n, delta);
                        let slack = 3.0 * (budget / trials as f64).sqrt();
                        let pass = rate <= budget + slack;
                        all_pass &= pass;
                        csv.push_str(&format!(
                            "{},{n},{delta},{trials},{rate},{budget},{slack},{pass}\n",
                            family.name()
                        ));
                    }
                }
            }
            match out {
                Some(path) => {
                    let mut file = fs::File::create(&path)?;
                    file.write_all(csv.as_bytes())?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            if all_pass {
                Ok(())
            } else {
                Err(Error::input("at least one martingale family exceeded its coverage budget"))
            }
        }
        Command::OracleCheck { spacing, size, sigma_ratio, beta, tolerance } => {
            let deviation = oracle_check(spacing, size, sigma_ratio, beta)?;
            println!("max deviation: {deviation}");
            if deviation <= tolerance {
                Ok(())
            } else {
                Err(Error::input(format!(
                    "deviation {deviation} exceeds tolerance {tolerance}"
                )))
            }
        }
        Command::Aggregate { input, out } => {
            let file = fs::File::open(&input)?;
            let records = read_records_csv(&mut BufReader::new(file))?;
            let agg = aggregate(&records)?;
            match out {
                Some(path) => {
                    let mut file = fs::File::create(&path)?;
                    write_aggregate_csv(&agg, &mut file)?;
                    eprintln!("wrote {}", path.display());
                }
                None => {
                    let stdout = std::io::stdout();
                    write_aggregate_csv(&agg, &mut stdout.lock())?;
                }
            }
            for (label, w) in [("first", &agg.first_window), ("last", &agg.last_window)] {
                eprintln!(
                    "{label}-window episodes {}..{}: mean {:.3} std {:.3}",
                    w.first_episode, w.last_episode, w.mean, w.std
                );
            }
            Ok(())
        }
    }
}
