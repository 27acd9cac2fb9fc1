//! Policy optimizers pluggable into the explorer.
//!
//! [`Reinforce`] is tabular-softmax REINFORCE on the normalized discounted
//! return; [`ExactPlanner`] returns the value-iteration greedy policy.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distribution::ResetSampler;
use crate::dp::value_iteration_default;
use crate::error::{Error, Result};
use crate::explorer::Optimizer;
use crate::mdp::{DiscountFactor, TabularMdp};
use crate::policy::{SoftmaxPolicy, StochasticPolicy};
use crate::sampling::{sample_discounted_trajectory, sample_episode, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    None,
    /// Running mean of the returns of all previous episodes.
    MeanReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryMode {
    /// Geometric stopping; each step survives with probability `gamma` and
    /// rewards enter undiscounted.
    DiscountStopped,
    /// Roll to a terminal or the horizon cap, discounting explicitly.
    Episodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    /// Defaults to `10 * ceil(1 / (1 - gamma))` when unset.
    #[serde(default)]
    pub horizon_cap: Option<usize>,
    pub baseline: Baseline,
    pub trajectory_mode: TrajectoryMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            learning_rate: 0.1,
            horizon_cap: None,
            baseline: Baseline::MeanReturn,
            trajectory_mode: TrajectoryMode::Episodic,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("optimizer needs at least one episode".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be a finite non-negative number",
                self.learning_rate
            )));
        }
        if self.horizon_cap == Some(0) {
            return Err(Error::Config("horizon cap must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon_cap(&self, gamma: DiscountFactor) -> usize {
        self.horizon_cap.unwrap_or_else(|| gamma.default_horizon_cap())
    }
}

/// Per-episode returns of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub returns: Vec<f64>,
}

/// Normalized reward-to-go weights `w_t` such that
/// `sum_t w_t grad log pi(a_t|s_t)` is an unbiased estimate of the gradient
/// of the normalized value, plus the episode return `G_0`.
///
/// An entered terminal keeps paying its (policy-averaged) reward forever;
/// that tail is added analytically since the rollout stops at entry.
fn step_weights(
    traj: &Trajectory,
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    gamma: DiscountFactor,
    mode: TrajectoryMode,
    weights: &mut Vec<f64>,
) -> f64 {
    let g = gamma.value();
    let h = traj.len();
    let tail_reward = if traj.terminated {
        policy
            .row(traj.final_state)
            .iter()
            .zip(mdp.reward_row(traj.final_state))
            .map(|(p, r)| p * r)
            .sum::<f64>()
    } else {
        0.0
    };
    weights.clear();
    weights.resize(h, 0.0);
    match mode {
        TrajectoryMode::DiscountStopped => {
            // E[sum_{k<H} r_k] = V / (1 - gamma); an entered terminal adds
            // r_T / (1 - gamma) in expectation.
            let mut to_go = tail_reward;
            for t in (0..h).rev() {
                to_go += (1.0 - g) * traj.rewards[t];
                weights[t] = to_go;
            }
        }
        TrajectoryMode::Episodic => {
            // w_t = (1 - gamma) sum_{k>=t} gamma^k r_k + gamma^H r_T.
            let mut powers = Vec::with_capacity(h);
            let mut discount = 1.0;
            for _ in 0..h {
                powers.push(discount);
                discount *= g;
            }
            let mut to_go = discount * tail_reward;
            for t in (0..h).rev() {
                to_go += (1.0 - g) * powers[t] * traj.rewards[t];
                weights[t] = to_go;
            }
        }
    }
    weights.first().copied().unwrap_or(0.0)
}

/// Discount factor applied to the baseline at step `t`, so that the baseline
/// term has the same time weighting as the return it is subtracted from.
fn baseline_scale(mode: TrajectoryMode, gamma: DiscountFactor, t: usize) -> f64 {
    match mode {
        TrajectoryMode::DiscountStopped => 1.0,
        TrajectoryMode::Episodic => gamma.value().powi(t as i32),
    }
}

fn rollout<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    reset: &dyn ResetSampler,
    gamma: DiscountFactor,
    mode: TrajectoryMode,
    horizon_cap: usize,
    rng: &mut R,
) -> Trajectory {
    match mode {
        TrajectoryMode::DiscountStopped => sample_discounted_trajectory(mdp, policy, reset, gamma, rng),
        TrajectoryMode::Episodic => sample_episode(mdp, policy, reset, horizon_cap, rng),
    }
}

/// Stateful REINFORCE learner: one softmax update per episode.
#[derive(Debug, Clone)]
pub struct Reinforce {
    config: OptimizerConfig,
    gamma: DiscountFactor,
    policy: SoftmaxPolicy,
    mean_return: f64,
    episodes_seen: usize,
    weights: Vec<f64>,
}

impl Reinforce {
    pub fn new(mdp: &TabularMdp, gamma: DiscountFactor, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            gamma,
            policy: SoftmaxPolicy::zeros(mdp.num_states(), mdp.num_actions()),
            mean_return: 0.0,
            episodes_seen: 0,
            weights: Vec::new(),
        })
    }

    pub fn policy(&self) -> &SoftmaxPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> SoftmaxPolicy {
        self.policy
    }

    /// Runs one episode from `reset`, applies the update and returns the
    /// episode's normalized discounted return.
    pub fn train_episode<R: Rng>(
        &mut self,
        mdp: &TabularMdp,
        reset: &dyn ResetSampler,
        rng: &mut R,
    ) -> Result<f64> {
        let current = self.policy.to_stochastic()?;
        let mode = self.config.trajectory_mode;
        let traj = rollout(
            mdp,
            &current,
            reset,
            self.gamma,
            mode,
            self.config.horizon_cap(self.gamma),
            rng,
        );
        let ret = step_weights(&traj, mdp, &current, self.gamma, mode, &mut self.weights);
        let baseline = match self.config.baseline {
            Baseline::None => 0.0,
            Baseline::MeanReturn => self.mean_return,
        };
        let lr = self.config.learning_rate;
        let na = mdp.num_actions();
        if lr != 0.0 {
            for (t, (&s, &a)) in traj.states.iter().zip(&traj.actions).enumerate() {
                let w = self.weights[t] - baseline * baseline_scale(mode, self.gamma, t);
                if w == 0.0 {
                    continue;
                }
                let probs = current.row(s);
                let row = &mut self.policy.theta_mut()[s * na..(s + 1) * na];
                for (b, theta) in row.iter_mut().enumerate() {
                    let score = if b == a { 1.0 - probs[b] } else { -probs[b] };
                    *theta += lr * w * score;
                }
            }
            if self.policy.theta().iter().any(|x| !x.is_finite()) {
                return Err(Error::SoftmaxOverflow { state: traj.states[0] });
            }
        }
        self.episodes_seen += 1;
        self.mean_return += (ret - self.mean_return) / self.episodes_seen as f64;
        Ok(ret)
    }
}

/// Trains a fresh softmax policy for `config.episodes` episodes.
pub fn reinforce<R: Rng>(
    mdp: &TabularMdp,
    reset: &dyn ResetSampler,
    gamma: DiscountFactor,
    config: &OptimizerConfig,
    rng: &mut R,
) -> Result<(SoftmaxPolicy, LearningCurve)> {
    let mut learner = Reinforce::new(mdp, gamma, config.clone())?;
    let mut curve = LearningCurve {
        returns: Vec::with_capacity(config.episodes),
    };
    for _ in 0..config.episodes {
        curve.returns.push(learner.train_episode(mdp, reset, rng)?);
    }
    Ok((learner.into_policy(), curve))
}

/// Batch-mean score-function gradient with per-coordinate standard errors,
/// both stored state-major like `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Monte Carlo estimate of the gradient of `V(reset)` with respect to the
/// softmax parameters, without a baseline.
#[allow(clippy::too_many_arguments)]
pub fn policy_gradient_estimate<R: Rng>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reset: &dyn ResetSampler,
    gamma: DiscountFactor,
    batch: usize,
    mode: TrajectoryMode,
    horizon_cap: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if batch == 0 {
        return Err(Error::Config("gradient batch must be positive".into()));
    }
    let current = policy.to_stochastic()?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let dim = ns * na;
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut sample = vec![0.0; dim];
    let mut touched: Vec<usize> = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..batch {
        let traj = rollout(mdp, &current, reset, gamma, mode, horizon_cap, rng);
        step_weights(&traj, mdp, &current, gamma, mode, &mut weights);
        for (t, (&s, &a)) in traj.states.iter().zip(&traj.actions).enumerate() {
            let w = weights[t];
            if w == 0.0 {
                continue;
            }
            let probs = current.row(s);
            for (b, &p) in probs.iter().enumerate() {
                let score = if b == a { 1.0 - p } else { -p };
                let idx = s * na + b;
                if sample[idx] == 0.0 {
                    touched.push(idx);
                }
                sample[idx] += w * score;
            }
        }
        for &idx in &touched {
            sum[idx] += sample[idx];
            sum_sq[idx] += sample[idx] * sample[idx];
            sample[idx] = 0.0;
        }
        touched.clear();
    }
    let n = batch as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if batch < 2 {
                return 0.0;
            }
            let var = (sq / n - m * m).max(0.0) * n / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(GradientEstimate { mean, std_error })
}

/// Value-iteration greedy policy. The greedy policy is optimal from every
/// state at once, so the reset distribution does not influence the result.
pub fn exact_planner_opt(
    mdp: &TabularMdp,
    _reset: &dyn ResetSampler,
    gamma: DiscountFactor,
) -> Result<StochasticPolicy> {
    Ok(value_iteration_default(mdp, gamma)?.optimal_policy)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactPlanner;

impl Optimizer for ExactPlanner {
    fn optimize(
        &mut self,
        mdp: &TabularMdp,
        reset: &dyn ResetSampler,
        gamma: DiscountFactor,
        _rng: &mut dyn RngCore,
    ) -> Result<StochasticPolicy> {
        exact_planner_opt(mdp, reset, gamma)
    }
}

#[derive(Debug, Clone)]
pub struct ReinforceOptimizer {
    pub config: OptimizerConfig,
}

impl Optimizer for ReinforceOptimizer {
    fn optimize(
        &mut self,
        mdp: &TabularMdp,
        reset: &dyn ResetSampler,
        gamma: DiscountFactor,
        mut rng: &mut dyn RngCore,
    ) -> Result<StochasticPolicy> {
        let (policy, _) = reinforce(mdp, reset, gamma, &self.config, &mut rng)?;
        policy.to_stochastic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::StateDistribution;
    use crate::dp::exact_value;
    use crate::mdp::MdpBuilder;
    use crate::rng::stream_rng;

    fn gamma(g: f64) -> DiscountFactor {
        DiscountFactor::new(g).unwrap()
    }

    fn bandit() -> TabularMdp {
        MdpBuilder::new(2, 2)
            .deterministic(0, 0, 1)
            .deterministic(0, 1, 1)
            .reward(0, 0, 1.0)
            .terminal(1)
            .build()
            .unwrap()
    }

    #[test]
    fn zero_rewards_leave_theta_unchanged() {
        let mdp = MdpBuilder::new(3, 2)
            .deterministic(0, 0, 1)
            .deterministic(1, 1, 2)
            .build()
            .unwrap();
        let s0 = StateDistribution::point_mass(3, 0);
        let config = OptimizerConfig {
            episodes: 200,
            baseline: Baseline::None,
            ..Default::default()
        };
        let (policy, curve) = reinforce(&mdp, &s0, gamma(0.9), &config, &mut stream_rng(1, 0)).unwrap();
        assert!(policy.theta().iter().all(|&x| x == 0.0));
        assert!(curve.returns.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_policy() {
        let s0 = StateDistribution::point_mass(2, 0);
        let config = OptimizerConfig {
            episodes: 100,
            learning_rate: 0.0,
            ..Default::default()
        };
        let (policy, _) = reinforce(&bandit(), &s0, gamma(0.9), &config, &mut stream_rng(2, 0)).unwrap();
        assert_eq!(policy, SoftmaxPolicy::zeros(2, 2));
    }

    #[test]
    fn bandit_learns_rewarding_arm() {
        let s0 = StateDistribution::point_mass(2, 0);
        // Rewards are scaled by (1 - gamma) in the normalized return, so
        // gamma = 0 keeps the bandit's unit reward intact.
        let config = OptimizerConfig {
            episodes: 2000,
            learning_rate: 0.1,
            ..Default::default()
        };
        for seed in 0..10 {
            let (policy, _) =
                reinforce(&bandit(), &s0, gamma(0.0), &config, &mut stream_rng(seed, 0)).unwrap();
            let p = policy.action_probs(0)[0];
            assert!(p > 0.95, "seed {seed}: p = {p}");
        }
    }

    #[test]
    fn episodic_weights_match_discounted_return() {
        let mdp = bandit();
        let traj = Trajectory {
            states: vec![0, 0, 0],
            actions: vec![0, 0, 0],
            rewards: vec![0.0, 0.0, 1.0],
            final_state: 0,
            terminated: false,
        };
        let mut w = Vec::new();
        let pi = StochasticPolicy::uniform(2, 2);
        let g0 = step_weights(&traj, &mdp, &pi, gamma(0.5), TrajectoryMode::Episodic, &mut w);
        assert!((g0 - 0.5 * 0.25).abs() < 1e-15);
        assert!(w.iter().all(|&x| (x - 0.125).abs() < 1e-15));
        let g0 = step_weights(&traj, &mdp, &pi, gamma(0.5), TrajectoryMode::DiscountStopped, &mut w);
        assert!((g0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rewards_give_zero_gradient() {
        let mdp = MdpBuilder::new(2, 2).deterministic(0, 0, 1).build().unwrap();
        let est = policy_gradient_estimate(
            &mdp,
            &SoftmaxPolicy::zeros(2, 2),
            &StateDistribution::point_mass(2, 0),
            gamma(0.9),
            500,
            TrajectoryMode::DiscountStopped,
            100,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert!(est.mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_planner_ties_and_reset_independence() {
        let mdp = MdpBuilder::new(3, 3)
            .deterministic(0, 1, 1)
            .deterministic(1, 2, 2)
            .build()
            .unwrap();
        let a = exact_planner_opt(&mdp, &StateDistribution::point_mass(3, 0), gamma(0.9)).unwrap();
        assert_eq!(a, StochasticPolicy::deterministic(&[0, 0, 0], 3));
        let rewarded = mdp.with_rewards(|s, _| if s == 2 { 1.0 } else { 0.0 });
        let p0 = exact_planner_opt(&rewarded, &StateDistribution::point_mass(3, 0), gamma(0.9)).unwrap();
        let p1 = exact_planner_opt(&rewarded, &StateDistribution::uniform(3), gamma(0.9)).unwrap();
        assert_eq!(p0, p1);
        let v = exact_value(&rewarded, &p0, &StateDistribution::point_mass(3, 0), gamma(0.9)).unwrap();
        assert!((v - 0.81).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig {
            episodes: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
