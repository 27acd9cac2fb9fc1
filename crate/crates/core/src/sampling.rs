//! Trajectory rollouts.
//!
//! Two stopping rules are provided. [`sample_discounted_trajectory`] draws
//! from the geometric-length trajectory law: after the first state-action
//! pair, each further step happens with probability `gamma`, so the length
//! `H` satisfies `P(H = h) = (1 - gamma) gamma^(h-1)`. [`sample_episode`]
//! rolls until a terminal state or a hard horizon cap. Both end the moment a
//! terminal state is entered; that state is reported as `final_state` and is
//! not itself a step of the trajectory.

use rand::Rng;

use crate::distribution::ResetSampler;
use crate::mdp::{DiscountFactor, TabularMdp};
use crate::policy::StochasticPolicy;
use crate::rng::sample_index;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// `r(s_t, a_t)` for every step.
    pub rewards: Vec<f64>,
    /// Where the process sits when the rollout ends: the entered terminal,
    /// the state after the last transition at the horizon cap, or the last
    /// state when geometric stopping fires.
    pub final_state: usize,
    pub terminated: bool,
}

impl Trajectory {
    fn start(state: usize) -> Self {
        Self {
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            final_state: state,
            terminated: false,
        }
    }

    fn push(&mut self, state: usize, action: usize, reward: f64) {
        self.states.push(state);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// True iff every executed transition has positive model probability.
    pub fn is_supported_by(&self, mdp: &TabularMdp) -> bool {
        let n = self.states.len();
        (0..n).all(|t| {
            let next = if t + 1 < n {
                self.states[t + 1]
            } else if self.final_state != self.states[t] || self.terminated {
                self.final_state
            } else {
                return true;
            };
            mdp.transition(self.states[t], self.actions[t], next) > 0.0
        })
    }
}

/// Samples from the geometric-length trajectory law. The stop/continue coin
/// is flipped before every step after the first, ahead of the transition and
/// the next action choice.
pub fn sample_discounted_trajectory<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &dyn ResetSampler,
    gamma: DiscountFactor,
    rng: &mut R,
) -> Trajectory {
    let stop = gamma.stop_probability();
    let mut state = start.sample_state(rng);
    let mut traj = Trajectory::start(state);
    loop {
        let action = policy.sample_action(state, rng);
        traj.push(state, action, mdp.reward(state, action));
        if rng.random::<f64>() < stop {
            traj.final_state = state;
            return traj;
        }
        state = sample_index(mdp.transition_row(state, action), rng);
        if mdp.is_terminal(state) {
            traj.final_state = state;
            traj.terminated = true;
            return traj;
        }
    }
}

/// Rolls `policy` until a terminal state is entered or `horizon_cap` steps
/// have been taken. A terminal start yields a single zero-reward
/// self-loop step.
pub fn sample_episode<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &dyn ResetSampler,
    horizon_cap: usize,
    rng: &mut R,
) -> Trajectory {
    let cap = horizon_cap.max(1);
    let mut state = start.sample_state(rng);
    let mut traj = Trajectory::start(state);
    loop {
        let action = policy.sample_action(state, rng);
        traj.push(state, action, mdp.reward(state, action));
        state = sample_index(mdp.transition_row(state, action), rng);
        traj.final_state = state;
        if mdp.is_terminal(state) {
            traj.terminated = true;
            return traj;
        }
        if traj.len() >= cap {
            return traj;
        }
    }
}

/// Normalized discounted return `(1 - gamma) * sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: DiscountFactor) -> f64 {
    let g = gamma.value();
    let mut discount = 1.0;
    let mut total = 0.0;
    for &r in rewards {
        total += discount * r;
        discount *= g;
    }
    (1.0 - g) * total
}
