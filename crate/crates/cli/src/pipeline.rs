use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use curious_core::dp::{exact_value, expected_total_reward};
use curious_core::optimizers::{OptimizerConfig, Reinforce};
use curious_core::verifier::{check_constant_beta_corollary, check_theorem1, report_mismatch};
use curious_core::{
    run_curious_explorer, stream_rng, DiscountFactor, ExactPlanner, ExplorationSchedule, ExplorationTrace, Optimizer,
    ReinforceOptimizer, ResetSampler, StateDistribution, StochasticPolicy, TabularMdp, VisitationMode,
};

use crate::config::{ExperimentConfig, Metric, OptimizerChoice, ResetChoice};
use crate::output::{csv_writer, fmt_bool, fmt_float, json_float, write_json};

/// RNG stream of the stand-alone exploration run.
const EXPLORE_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy)]
enum Phase {
    Baseline,
    Exploration,
    CeTraining,
}

fn learn_stream(run: usize, phase: Phase) -> u64 {
    1 + 3 * run as u64 + phase as u64
}

fn make_optimizer(choice: &OptimizerChoice) -> Box<dyn Optimizer + Send> {
    match choice {
        OptimizerChoice::Exact => Box::new(ExactPlanner),
        OptimizerChoice::Reinforce(config) => Box::new(ReinforceOptimizer { config: config.clone() }),
    }
}

fn prepare_out(out: &Path, config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    write_json(&out.join("config.json"), config)
}

/// Writes the environment as JSON and returns the file path.
pub fn run_env(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    let mdp = config.env.build()?;
    prepare_out(out, config)?;
    let path = out.join("mdp.json");
    std::fs::write(&path, mdp.to_json(config.discount()?)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn explore(
    config: &ExperimentConfig,
    mdp: &TabularMdp,
    schedule: &ExplorationSchedule,
    stream: u64,
) -> Result<ExplorationTrace> {
    let mut optimizer = make_optimizer(&config.optimizer);
    let mut rng = stream_rng(config.master_seed, stream);
    Ok(run_curious_explorer(
        mdp,
        config.discount()?,
        schedule,
        optimizer.as_mut(),
        config.exploration_mode,
        &mut rng,
    )?)
}

fn downstream_reset(config: &ExperimentConfig, trace: &ExplorationTrace) -> Result<StateDistribution> {
    Ok(match config.reset {
        ResetChoice::Final => trace.final_reset().clone(),
        ResetChoice::Average => trace.average_reset()?,
    })
}

fn write_snapshot(
    path: &Path,
    mdp: &TabularMdp,
    mu: &StateDistribution,
    cumulative_avg: &[f64],
    in_k: &[bool],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["state_id", "label", "mu_n", "cumulative_avg", "in_K"])?;
    for s in 0..mdp.num_states() {
        w.write_record([
            s.to_string(),
            mdp.label(s),
            fmt_float(mu.prob(s)),
            fmt_float(cumulative_avg[s]),
            fmt_bool(in_k[s]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ExploreSummary {
    pub iterations: usize,
    pub poorly_visited_sizes: Vec<usize>,
    pub snapshot_files: usize,
}

/// Runs CE once and writes `snapshots/`, `scatter.csv` and `trace.json`.
///
/// `snapshots/snapshot_initial.csv` holds the start distribution;
/// `snapshot_NNN.csv` holds `mu_n` with the cumulative average visitation
/// and membership of `K_n`.
pub fn run_explore(config: &ExperimentConfig, out: &Path) -> Result<ExploreSummary> {
    config.validate()?;
    let mdp = config.env.build()?;
    let schedule = config.exploration_schedule(&mdp)?;
    prepare_out(out, config)?;
    let trace = explore(config, &mdp, &schedule, EXPLORE_STREAM)?;
    let ns = mdp.num_states();

    let snapshots = out.join("snapshots");
    write_snapshot(
        &snapshots.join("snapshot_initial.csv"),
        &mdp,
        &trace.rho,
        &vec![0.0; ns],
        &vec![true; ns],
    )?;
    for (n, rec) in trace.iterations.iter().enumerate() {
        write_snapshot(
            &snapshots.join(format!("snapshot_{n:03}.csv")),
            &mdp,
            &rec.reset,
            &rec.cumulative_average(n),
            rec.poorly_visited.as_mask(),
        )?;
    }

    let mut w = csv_writer(&out.join("scatter.csv"))?;
    w.write_record(["iteration", "state_id", "mu_value"])?;
    for (n, rec) in trace.iterations.iter().enumerate() {
        for s in 0..ns {
            w.write_record([n.to_string(), s.to_string(), fmt_float(rec.reset.prob(s))])?;
        }
    }
    w.flush()?;

    let reset = downstream_reset(config, &trace)?;
    let iterations: Vec<_> = trace
        .iterations
        .iter()
        .enumerate()
        .map(|(n, rec)| {
            json!({
                "n": n,
                "beta": rec.beta,
                "poorly_visited_count": rec.poorly_visited.len(),
                "poorly_visited": rec.poorly_visited.iter().collect::<Vec<_>>(),
                "start_mass": rec.reset.prob(0),
            })
        })
        .collect();
    let summary = json!({
        "env": config.env.name(),
        "num_states": ns,
        "num_actions": mdp.num_actions(),
        "gamma": config.gamma,
        "master_seed": config.master_seed,
        "rng_stream": EXPLORE_STREAM,
        "mode": config.exploration_mode,
        "visit_samples": schedule.visit_samples,
        "exploration_episodes": config.exploration_cost(&schedule),
        "iterations": iterations,
        "reset_choice": config.reset,
        "reset": reset.probs(),
    });
    write_json(&out.join("trace.json"), &summary)?;

    Ok(ExploreSummary {
        iterations: trace.len(),
        poorly_visited_sizes: trace.iterations.iter().map(|r| r.poorly_visited.len()).collect(),
        snapshot_files: trace.len() + 1,
    })
}

fn evaluate(mdp: &TabularMdp, policy: &StochasticPolicy, rho: &StateDistribution, gamma: DiscountFactor, metric: Metric) -> Result<f64> {
    Ok(match metric {
        Metric::Discounted => exact_value(mdp, policy, rho, gamma)?,
        Metric::Undiscounted => expected_total_reward(mdp, policy, rho)?,
    })
}

/// Trains REINFORCE from `reset` for `episodes` episodes, recording after
/// each update the exact return of the current policy from the start
/// distribution.
#[allow(clippy::too_many_arguments)]
fn learning_curve(
    mdp: &TabularMdp,
    reset: &dyn ResetSampler,
    rho: &StateDistribution,
    gamma: DiscountFactor,
    optimizer: &OptimizerConfig,
    metric: Metric,
    episodes: usize,
    rng: &mut curious_core::SimRng,
) -> Result<Vec<f64>> {
    let mut curve = Vec::with_capacity(episodes);
    if episodes == 0 {
        return Ok(curve);
    }
    let mut learner = Reinforce::new(mdp, gamma, optimizer.clone())?;
    for _ in 0..episodes {
        learner.train_episode(mdp, reset, rng)?;
        let policy = learner.policy().to_stochastic()?;
        curve.push(evaluate(mdp, &policy, rho, gamma, metric)?);
    }
    Ok(curve)
}

#[derive(Debug, Clone)]
struct RunCurves {
    baseline: Vec<f64>,
    ce: Option<Vec<f64>>,
}

fn learn_run(config: &ExperimentConfig, mdp: &TabularMdp, schedule: &ExplorationSchedule, run: usize) -> Result<RunCurves> {
    let gamma = config.discount()?;
    let rho = StateDistribution::new(mdp.start().to_vec())?;
    let metric = config.metric();
    let budget = config.learn.episodes;
    let mut rng = stream_rng(config.master_seed, learn_stream(run, Phase::Baseline));
    let baseline = learning_curve(mdp, &rho, &rho, gamma, &config.learn.optimizer, metric, budget, &mut rng)
        .with_context(|| format!("baseline run {run}"))?;
    if !config.learn.with_ce {
        return Ok(RunCurves { baseline, ce: None });
    }

    let trace = explore(config, mdp, schedule, learn_stream(run, Phase::Exploration)).with_context(|| format!("exploration for run {run}"))?;
    let cost = config.exploration_cost(schedule).min(budget);
    let uniform = StochasticPolicy::uniform(mdp.num_states(), mdp.num_actions());
    let mut ce = vec![evaluate(mdp, &uniform, &rho, gamma, metric)?; cost];
    let mut rng = stream_rng(config.master_seed, learn_stream(run, Phase::CeTraining));
    let remaining = budget - cost;
    let tail = match (config.exploration_mode, config.reset) {
        (VisitationMode::Simulated, ResetChoice::Final) => {
            let chain = trace.reset_chain(mdp, gamma, trace.len());
            learning_curve(mdp, &chain, &rho, gamma, &config.learn.optimizer, metric, remaining, &mut rng)
        }
        _ => {
            let reset = downstream_reset(config, &trace)?;
            learning_curve(mdp, &reset, &rho, gamma, &config.learn.optimizer, metric, remaining, &mut rng)
        }
    }
    .with_context(|| format!("CE-assisted run {run}"))?;
    ce.extend(tail);
    Ok(RunCurves { baseline, ce: Some(ce) })
}

fn write_curve(path: &Path, run: usize, curve: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run_id", "episode", "return"])?;
    for (e, r) in curve.iter().enumerate() {
        w.write_record([run.to_string(), e.to_string(), fmt_float(*r)])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation of column `episode` across runs.
fn column_stats(curves: &[&[f64]], episode: usize) -> (f64, f64) {
    let n = curves.len() as f64;
    let mean = curves.iter().map(|c| c[episode]).sum::<f64>() / n;
    if curves.len() < 2 {
        return (mean, 0.0);
    }
    let var = curves.iter().map(|c| (c[episode] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn final_window_mean(curves: &[&[f64]], window: usize) -> Option<f64> {
    if window == 0 || curves.is_empty() {
        return None;
    }
    let total: f64 = curves.iter().map(|c| c[c.len() - window..].iter().sum::<f64>()).sum();
    Some(total / (window * curves.len()) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnSummary {
    pub metric: Metric,
    pub episodes: usize,
    pub runs: usize,
    pub exploration_episodes: Option<usize>,
    /// Number of trailing episodes averaged in the final-return figures.
    pub final_window: usize,
    pub baseline_final_mean: Option<f64>,
    pub ce_final_mean: Option<f64>,
    pub baseline_final_per_run: Vec<f64>,
    pub ce_final_per_run: Vec<f64>,
}

/// Baseline vs CE-assisted REINFORCE learning curves over independent runs.
pub fn run_learn(config: &ExperimentConfig, out: &Path) -> Result<LearnSummary> {
    config.validate()?;
    let mdp = config.env.build()?;
    let schedule = config.exploration_schedule(&mdp)?;
    prepare_out(out, config)?;

    let runs: Vec<RunCurves> = (0..config.learn.runs)
        .into_par_iter()
        .map(|r| learn_run(config, &mdp, &schedule, r))
        .collect::<Result<_>>()?;

    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir)?;
    for (r, curves) in runs.iter().enumerate() {
        write_curve(&runs_dir.join(format!("baseline_{r:03}.csv")), r, &curves.baseline)?;
        if let Some(ce) = &curves.ce {
            write_curve(&runs_dir.join(format!("ce_{r:03}.csv")), r, ce)?;
        }
    }

    let baseline: Vec<&[f64]> = runs.iter().map(|c| c.baseline.as_slice()).collect();
    let ce: Vec<&[f64]> = runs.iter().filter_map(|c| c.ce.as_deref()).collect();
    let mut w = csv_writer(&out.join("aggregate.csv"))?;
    w.write_record(["episode", "mean_baseline", "std_baseline", "mean_ce", "std_ce"])?;
    for e in 0..config.learn.episodes {
        let (mb, sb) = column_stats(&baseline, e);
        let (mc, sc) = if ce.is_empty() {
            (String::new(), String::new())
        } else {
            let (m, s) = column_stats(&ce, e);
            (fmt_float(m), fmt_float(s))
        };
        w.write_record([e.to_string(), fmt_float(mb), fmt_float(sb), mc, sc])?;
    }
    w.flush()?;

    let window = config.learn.episodes.div_ceil(10);
    let per_run = |curves: &[&[f64]]| -> Vec<f64> {
        curves
            .iter()
            .filter_map(|c| final_window_mean(std::slice::from_ref(c), window))
            .collect()
    };
    let summary = LearnSummary {
        metric: config.metric(),
        episodes: config.learn.episodes,
        runs: config.learn.runs,
        exploration_episodes: config
            .learn
            .with_ce
            .then(|| config.exploration_cost(&schedule).min(config.learn.episodes)),
        final_window: window,
        baseline_final_mean: final_window_mean(&baseline, window),
        ce_final_mean: final_window_mean(&ce, window),
        baseline_final_per_run: per_run(&baseline),
        ce_final_per_run: per_run(&ce),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub num_states: usize,
    pub iterations: usize,
    pub exploitative_factor: f64,
    pub all_hold: bool,
    /// `None` unless the schedule is constant.
    pub corollary_holds: Option<bool>,
    pub nested: Option<bool>,
    pub mismatch: f64,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.all_hold && self.corollary_holds != Some(false)
    }
}

/// Exact-mode CE with the value-iteration planner, followed by the bound
/// checks. Writes `bounds.csv`, `corollary.csv` for constant thresholds and
/// `verify.json`.
pub fn run_verify(config: &ExperimentConfig, out: &Path) -> Result<VerifySummary> {
    let mut config = config.clone();
    config.force_exact();
    config.validate()?;
    let mdp = config.env.build()?;
    if mdp.num_states() > config.verify.max_states {
        bail!(
            "{} states exceed the verification cap of {} (set verify.max_states)",
            mdp.num_states(),
            config.verify.max_states
        );
    }
    let gamma = config.discount()?;
    let schedule = config.exploration_schedule(&mdp)?;
    prepare_out(out, &config)?;
    let trace = explore(&config, &mdp, &schedule, EXPLORE_STREAM)?;
    let eps = vec![0.0; trace.len()];

    let report = check_theorem1(&mdp, gamma, &trace, &eps)?;
    let mut w = csv_writer(&out.join("bounds.csv"))?;
    w.write_record(["N", "lhs", "eps_term", "beta_term", "exploitative_term", "rhs", "slack", "holds"])?;
    for row in &report.rows {
        w.write_record([
            row.n.to_string(),
            fmt_float(row.lhs),
            fmt_float(row.eps_term),
            fmt_float(row.beta_term),
            fmt_float(row.exploitative_term),
            fmt_float(row.rhs),
            fmt_float(row.slack),
            fmt_bool(row.holds).to_string(),
        ])?;
    }
    w.flush()?;

    let (corollary_holds, nested) = if schedule.beta.is_constant() {
        let c = check_constant_beta_corollary(&mdp, gamma, &trace, &eps)?;
        let mut w = csv_writer(&out.join("corollary.csv"))?;
        w.write_record(["N", "lhs", "rhs", "holds"])?;
        for row in &c.rows {
            w.write_record([
                row.n.to_string(),
                fmt_float(row.lhs),
                fmt_float(row.rhs),
                fmt_bool(row.holds).to_string(),
            ])?;
        }
        w.flush()?;
        (Some(c.holds()), Some(c.nested))
    } else {
        (None, None)
    };

    let mismatch = report_mismatch(&mdp, gamma, &downstream_reset(&config, &trace)?)?;
    let summary = VerifySummary {
        num_states: mdp.num_states(),
        iterations: trace.len(),
        exploitative_factor: report.exploitative_factor,
        all_hold: report.all_hold(),
        corollary_holds,
        nested,
        mismatch,
    };
    write_json(
        &out.join("verify.json"),
        &json!({
            "num_states": summary.num_states,
            "iterations": summary.iterations,
            "exploitative_factor": summary.exploitative_factor,
            "all_hold": summary.all_hold,
            "corollary_holds": summary.corollary_holds,
            "nested": summary.nested,
            "mismatch": json_float(summary.mismatch),
        }),
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learn_streams_are_distinct() {
        let mut seen: Vec<u64> = (0..50)
            .flat_map(|r| [Phase::Baseline, Phase::Exploration, Phase::CeTraining].map(|p| learn_stream(r, p)))
            .collect();
        seen.push(EXPLORE_STREAM);
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 151);
    }

    #[test]
    fn stats_use_the_sample_deviation() {
        let a = [1.0, 2.0];
        let b = [3.0, 2.0];
        let curves: Vec<&[f64]> = vec![&a, &b];
        assert_eq!(column_stats(&curves, 0), (2.0, 2f64.sqrt()));
        assert_eq!(column_stats(&curves, 1), (2.0, 0.0));
        assert_eq!(final_window_mean(&curves, 1), Some(2.0));
    }
}
