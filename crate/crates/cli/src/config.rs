use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use curious_core::envs::{build_cct, build_dcl, build_random, CctSpec, DclSpec, RandomMdpSpec};
use curious_core::optimizers::{Baseline, OptimizerConfig, TrajectoryMode};
use curious_core::{BetaSchedule, DiscountFactor, ExplorationSchedule, TabularMdp, VisitationMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    Cct(CctSpec),
    Dcl(DclSpec),
    Random(RandomMdpSpec),
    /// A serialized MDP; its stored discount is ignored in favor of `gamma`.
    File { path: PathBuf },
}

impl EnvConfig {
    pub fn build(&self) -> Result<TabularMdp> {
        Ok(match self {
            EnvConfig::Cct(spec) => build_cct(spec)?,
            EnvConfig::Dcl(spec) => build_dcl(spec)?,
            EnvConfig::Random(spec) => build_random(spec)?,
            EnvConfig::File { path } => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading MDP file {}", path.display()))?;
                TabularMdp::from_json(&text)
                    .with_context(|| format!("parsing MDP file {}", path.display()))?
                    .0
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Cct(_) => "cct",
            EnvConfig::Dcl(_) => "dcl",
            EnvConfig::Random(_) => "random",
            EnvConfig::File { .. } => "file",
        }
    }

    /// Default number of CE iterations: the depth for the benchmarks, the
    /// state count otherwise.
    pub fn default_iterations(&self, num_states: usize) -> usize {
        match self {
            EnvConfig::Cct(spec) => spec.depth,
            EnvConfig::Dcl(spec) => spec.depth,
            _ => num_states,
        }
    }

    pub fn default_metric(&self) -> Metric {
        match self {
            EnvConfig::Dcl(_) => Metric::Undiscounted,
            _ => Metric::Discounted,
        }
    }

    pub fn set_depth(&mut self, depth: usize) -> Result<()> {
        match self {
            EnvConfig::Cct(spec) => spec.depth = depth,
            EnvConfig::Dcl(spec) => spec.depth = depth,
            _ => bail!("--depth applies only to cct and dcl environments"),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    Linear,
    Constant,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    /// Threshold scale; `1 / (2 |S|)` when unset.
    pub beta: Option<f64>,
    /// Per-iteration thresholds for the explicit mode.
    pub values: Option<Vec<f64>>,
    /// Number of CE iterations; environment depth when unset.
    pub iterations: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::Linear,
            beta: None,
            values: None,
            iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerChoice {
    Reinforce(OptimizerConfig),
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetChoice {
    /// The last mixture `mu_N`.
    Final,
    /// The mean of all mixtures.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Discounted,
    Undiscounted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    /// Episode budget per learning curve. CE exploration episodes are
    /// charged against the CE-assisted curve's budget.
    pub episodes: usize,
    pub runs: usize,
    pub with_ce: bool,
    /// Discounted for CCT and random MDPs, undiscounted for DCL when unset.
    pub metric: Option<Metric>,
    pub optimizer: OptimizerConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            runs: 10,
            with_ce: true,
            metric: None,
            optimizer: harness_reinforce(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Largest state count accepted by `verify`.
    pub max_states: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { max_states: 200 }
    }
}

/// REINFORCE settings used by the harness. The normalized value scales
/// gradients by `1 - gamma`, so the step size is larger than the library
/// default.
pub fn harness_reinforce() -> OptimizerConfig {
    OptimizerConfig {
        episodes: 500,
        learning_rate: 5.0,
        horizon_cap: None,
        baseline: Baseline::MeanReturn,
        trajectory_mode: TrajectoryMode::Episodic,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub gamma: f64,
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerChoice,
    pub exploration_mode: VisitationMode,
    /// Samples per CE iteration for the tabulated and simulated modes;
    /// the optimizer's episode count when unset.
    pub visit_samples: Option<usize>,
    pub reset: ResetChoice,
    pub learn: LearnConfig,
    pub verify: VerifyConfig,
    pub master_seed: u64,
    /// Read from config files but not written back, so output trees do
    /// not depend on where they were written.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::Cct(CctSpec::new(5)),
            gamma: 0.95,
            schedule: ScheduleConfig::default(),
            optimizer: OptimizerChoice::Reinforce(harness_reinforce()),
            exploration_mode: VisitationMode::Tabulated,
            visit_samples: None,
            reset: ResetChoice::Final,
            learn: LearnConfig::default(),
            verify: VerifyConfig::default(),
            master_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn discount(&self) -> Result<DiscountFactor> {
        Ok(DiscountFactor::new(self.gamma)?)
    }

    pub fn metric(&self) -> Metric {
        self.learn.metric.unwrap_or_else(|| self.env.default_metric())
    }

    /// Forces oracle visitation and the value-iteration planner.
    pub fn force_exact(&mut self) {
        self.exploration_mode = VisitationMode::Exact;
        self.optimizer = OptimizerChoice::Exact;
    }

    pub fn validate(&self) -> Result<()> {
        self.discount()?;
        if self.learn.runs == 0 {
            bail!("learn.runs must be at least 1");
        }
        self.learn.optimizer.validate()?;
        if let OptimizerChoice::Reinforce(c) = &self.optimizer {
            c.validate()?;
        }
        if self.visit_samples == Some(0) {
            bail!("visit_samples must be positive");
        }
        if let Some(b) = self.schedule.beta {
            if !b.is_finite() || b < 0.0 {
                bail!("beta must be a finite non-negative number, got {b}");
            }
        }
        Ok(())
    }

    /// Optimizer episode count, used as the default visit-sample budget.
    pub fn optimizer_episodes(&self) -> usize {
        match &self.optimizer {
            OptimizerChoice::Reinforce(c) => c.episodes,
            OptimizerChoice::Exact => 0,
        }
    }

    pub fn visit_samples(&self) -> usize {
        self.visit_samples
            .unwrap_or_else(|| self.optimizer_episodes().max(1))
    }

    /// Resolves the schedule against the built MDP.
    pub fn exploration_schedule(&self, mdp: &TabularMdp) -> Result<ExplorationSchedule> {
        let ns = mdp.num_states();
        let iterations = self
            .schedule
            .iterations
            .unwrap_or_else(|| self.env.default_iterations(ns));
        let beta = self.schedule.beta.unwrap_or(1.0 / (2.0 * ns as f64));
        let beta = match self.schedule.mode {
            ScheduleMode::Linear => BetaSchedule::Linear(beta),
            ScheduleMode::Constant => BetaSchedule::Constant(beta),
            ScheduleMode::Explicit => BetaSchedule::Explicit(
                self.schedule
                    .values
                    .clone()
                    .context("explicit schedule needs `values`")?,
            ),
        };
        let schedule = ExplorationSchedule {
            iterations,
            beta,
            eps: None,
            delta: None,
            visit_samples: self.visit_samples(),
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Episodes consumed by one CE run (optimizer training plus visit
    /// estimation); zero in exact mode.
    pub fn exploration_cost(&self, schedule: &ExplorationSchedule) -> usize {
        let visits = match self.exploration_mode {
            VisitationMode::Exact => 0,
            _ => schedule.visit_samples,
        };
        schedule.iterations * (self.optimizer_episodes() + visits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"env": {"kind": "dcl", "depth": 10}, "learn": {"runs": 3}}"#).unwrap();
        assert_eq!(c.learn.runs, 3);
        assert_eq!(c.learn.episodes, LearnConfig::default().episodes);
        assert_eq!(c.metric(), Metric::Undiscounted);
        let mdp = c.env.build().unwrap();
        let s = c.exploration_schedule(&mdp).unwrap();
        assert_eq!(s.iterations, 10);
        assert_eq!(s.beta, BetaSchedule::Linear(1.0 / 68.0));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.learn.runs = 0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            gamma: 1.0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"env": {"kind": "maze"}}"#).is_err());
    }
}
