use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use curious_cli::{run_env, run_explore, run_learn, run_verify, EnvConfig, ExperimentConfig};
use curious_core::envs::{CctSpec, DclSpec};

#[derive(Debug, Parser)]
#[command(name = "curious", version, about = "Curious Explorer experiments on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Oracle visitation and the value-iteration planner.
    #[arg(long, global = true)]
    exact: bool,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true, value_enum)]
    env: Option<EnvKind>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Threshold scale of the CE schedule.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Number of CE iterations.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Learning budget per curve for `learn`; optimizer episodes per CE
    /// iteration for `explore`.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Only train the baseline in `learn`.
    #[arg(long, global = true)]
    no_ce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Write the environment as JSON.
    Env,
    /// Run Curious Explorer and write reset-model snapshots.
    Explore,
    /// Compare REINFORCE learning curves with and without a CE reset.
    Learn,
    /// Check the exploration bounds in exact mode.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvKind {
    Cct,
    Dcl,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(kind) = cli.env {
        let depth = cli.depth.unwrap_or(5);
        config.env = match kind {
            EnvKind::Cct => EnvConfig::Cct(CctSpec::new(depth)),
            EnvKind::Dcl => EnvConfig::Dcl(DclSpec::new(depth)),
        };
    } else if let Some(depth) = cli.depth {
        config.env.set_depth(depth)?;
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(g) = cli.gamma {
        config.gamma = g;
    }
    if let Some(b) = cli.beta {
        config.schedule.beta = Some(b);
    }
    if let Some(n) = cli.iterations {
        config.schedule.iterations = Some(n);
    }
    if let Some(e) = cli.episodes {
        match cli.command {
            Command::Learn => config.learn.episodes = e,
            Command::Explore => match &mut config.optimizer {
                curious_cli::OptimizerChoice::Reinforce(c) => c.episodes = e,
                curious_cli::OptimizerChoice::Exact => bail!("--episodes has no effect with the exact planner"),
            },
            _ => bail!("--episodes applies to `learn` and `explore`"),
        }
    }
    if let Some(r) = cli.runs {
        config.learn.runs = r;
    }
    if cli.no_ce {
        config.learn.with_ce = false;
    }
    if cli.exact {
        config.force_exact();
    }
    config.validate()?;
    Ok(config)
}

/// Exit status: 0 on success, 1 on errors, 2 when a bound check fails.
fn run(cli: &Cli) -> Result<ExitCode> {
    let config = resolve(cli)?;
    let out = config.output_dir.clone();
    match cli.command {
        Command::Env => {
            let path = run_env(&config, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Explore => {
            let s = run_explore(&config, &out)?;
            println!(
                "{} iterations, |K_n| = {:?}, {} snapshots in {}",
                s.iterations,
                s.poorly_visited_sizes,
                s.snapshot_files,
                out.display()
            );
        }
        Command::Learn => {
            let s = run_learn(&config, &out)?;
            let show = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            println!(
                "final {} episodes ({:?} return): baseline {}, CE {}",
                s.final_window,
                s.metric,
                show(s.baseline_final_mean),
                show(s.ce_final_mean)
            );
        }
        Command::Verify => {
            let s = run_verify(&config, &out)?;
            println!(
                "exploitative factor {:.6}; bound holds for all N: {}; mismatch {}",
                s.exploitative_factor, s.all_hold, s.mismatch
            );
            if !s.passed() {
                eprintln!("verification failed; see {}", out.join("bounds.csv").display());
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
