//! Exact dynamic programming on small MDPs.
//!
//! Visitation distributions and policy values come from dense LU solves of
//! `(I - gamma P_pi)`; optimal control comes from value iteration on the
//! normalized Bellman operator `V(s) = max_a (1-gamma) r(s,a) + gamma P V`.
//! None of the visitation routines read the reward table.

use nalgebra::{DMatrix, DVector};

use crate::distribution::StateDistribution;
use crate::error::{Error, Result};
use crate::mdp::{DiscountFactor, StateSet, TabularMdp};
use crate::policy::StochasticPolicy;

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_VI_MAX_ITERS: usize = 100_000;

/// Normalized per-state values, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    /// `E_{s ~ start}[V(s)]`.
    pub fn expectation(&self, start: &[f64]) -> f64 {
        self.0.iter().zip(start).map(|(v, p)| v * p).sum()
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub optimal_values: ValueVector,
    /// Greedy deterministic policy, ties broken toward the lowest action.
    pub optimal_policy: StochasticPolicy,
    pub iterations_used: usize,
    /// Sup-norm change of the last Bellman update.
    pub residual: f64,
}

fn check_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::Shape(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

fn check_start(mdp: &TabularMdp, start: &StateDistribution) -> Result<()> {
    if start.len() != mdp.num_states() {
        return Err(Error::Shape(format!(
            "distribution over {} states for an MDP with {}",
            start.len(),
            mdp.num_states()
        )));
    }
    Ok(())
}

/// `P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)`.
pub fn policy_transition_matrix(mdp: &TabularMdp, policy: &StochasticPolicy) -> DMatrix<f64> {
    let n = mdp.num_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    m[(s, next)] += pa * p;
                }
            }
        }
    }
    m
}

/// `r_pi(s) = sum_a pi(a|s) r(s,a)`.
pub fn policy_reward_vector(mdp: &TabularMdp, policy: &StochasticPolicy) -> DVector<f64> {
    DVector::from_iterator(
        mdp.num_states(),
        (0..mdp.num_states()).map(|s| {
            policy
                .row(s)
                .iter()
                .zip(mdp.reward_row(s))
                .map(|(p, r)| p * r)
                .sum::<f64>()
        }),
    )
}

fn resolvent(p_pi: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = p_pi.nrows();
    DMatrix::identity(n, n) - p_pi * gamma
}

/// `d^T = (1 - gamma) start^T (I - gamma P_pi)^{-1}`.
pub fn exact_visitation(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &StateDistribution,
    gamma: DiscountFactor,
) -> Result<StateDistribution> {
    check_policy(mdp, policy)?;
    check_start(mdp, start)?;
    let g = gamma.value();
    let a = resolvent(&policy_transition_matrix(mdp, policy), g).transpose();
    let b = DVector::from_iterator(start.len(), start.probs().iter().map(|p| (1.0 - g) * p));
    let d = a
        .lu()
        .solve(&b)
        .ok_or(Error::SingularSystem("visitation solve"))?;
    StateDistribution::from_solve(d.iter().copied().collect())
}

/// Per-state normalized values from the Bellman linear system
/// `V = (1 - gamma) (I - gamma P_pi)^{-1} r_pi`.
pub fn policy_values(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    gamma: DiscountFactor,
) -> Result<ValueVector> {
    check_policy(mdp, policy)?;
    let g = gamma.value();
    let a = resolvent(&policy_transition_matrix(mdp, policy), g);
    let r = policy_reward_vector(mdp, policy) * (1.0 - g);
    let v = a
        .lu()
        .solve(&r)
        .ok_or(Error::SingularSystem("policy evaluation"))?;
    Ok(ValueVector(v.iter().copied().collect()))
}

/// Value of `policy` from `start` through the visitation route:
/// `sum_{s,a} d(s) pi(a|s) r(s,a)`.
pub fn exact_value(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &StateDistribution,
    gamma: DiscountFactor,
) -> Result<f64> {
    let d = exact_visitation(mdp, policy, start, gamma)?;
    let r_pi = policy_reward_vector(mdp, policy);
    Ok(d.probs().iter().zip(r_pi.iter()).map(|(d, r)| d * r).sum())
}

/// Value of `policy` from `start` through the Bellman route.
pub fn bellman_value(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &StateDistribution,
    gamma: DiscountFactor,
) -> Result<f64> {
    check_start(mdp, start)?;
    Ok(policy_values(mdp, policy, gamma)?.expectation(start.probs()))
}

/// Expected undiscounted episode return, for MDPs where every policy ends
/// in a terminal state with probability one from the relevant states.
pub fn expected_total_reward(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &StateDistribution,
) -> Result<f64> {
    check_policy(mdp, policy)?;
    check_start(mdp, start)?;
    let transient: Vec<usize> = (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)).collect();
    if transient.is_empty() {
        return Ok(0.0);
    }
    let p_pi = policy_transition_matrix(mdp, policy);
    let r_pi = policy_reward_vector(mdp, policy);
    let k = transient.len();
    let mut a = DMatrix::identity(k, k);
    for (i, &s) in transient.iter().enumerate() {
        for (j, &t) in transient.iter().enumerate() {
            a[(i, j)] -= p_pi[(s, t)];
        }
    }
    let r = DVector::from_iterator(k, transient.iter().map(|&s| r_pi[s]));
    let v = a
        .lu()
        .solve(&r)
        .ok_or(Error::SingularSystem("undiscounted evaluation: policy may never terminate"))?;
    if v.iter().any(|x| !x.is_finite() || *x < -1e-9) {
        return Err(Error::SingularSystem("undiscounted evaluation: policy may never terminate"));
    }
    Ok(transient
        .iter()
        .enumerate()
        .map(|(i, &s)| start.prob(s) * v[i])
        .sum())
}

/// Value iteration on the normalized Bellman optimality operator. Stops once
/// the sup-norm update falls to `tolerance`, which places the iterate within
/// `tolerance * gamma / (1 - gamma)` of the fixed point.
pub fn value_iteration(
    mdp: &TabularMdp,
    gamma: DiscountFactor,
    tolerance: f64,
    max_iters: usize,
) -> Result<DpSolution> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::Config(format!("value-iteration tolerance {tolerance} must be positive")));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let g = gamma.value();
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        bellman_q(mdp, g, &v, &mut q);
        residual = 0.0;
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tolerance {
            break;
        }
    }
    if residual > tolerance {
        return Err(Error::NoConvergence { iterations, residual });
    }
    bellman_q(mdp, g, &v, &mut q);
    let actions: Vec<usize> = (0..ns)
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter().position(|&x| x >= best - tolerance).unwrap_or(0)
        })
        .collect();
    Ok(DpSolution {
        optimal_values: ValueVector(v),
        optimal_policy: StochasticPolicy::deterministic(&actions, na),
        iterations_used: iterations,
        residual,
    })
}

fn bellman_q(mdp: &TabularMdp, g: f64, v: &[f64], q: &mut [f64]) {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum();
            q[s * na + a] = (1.0 - g) * mdp.reward(s, a) + g * ev;
        }
    }
}

pub fn value_iteration_default(mdp: &TabularMdp, gamma: DiscountFactor) -> Result<DpSolution> {
    value_iteration(mdp, gamma, DEFAULT_VI_TOLERANCE, DEFAULT_VI_MAX_ITERS)
}

/// The MDP with reward `1{s in target}` for every action.
pub fn indicator_reward_mdp(mdp: &TabularMdp, target: &StateSet) -> TabularMdp {
    mdp.with_rewards(|s, _| if target.contains(s) { 1.0 } else { 0.0 })
}

/// Result of maximizing the visitation mass of a state set.
#[derive(Debug, Clone)]
pub struct SetVisitation {
    pub value: f64,
    pub policy: StochasticPolicy,
}

/// `max_pi sum_{s in target} d^pi_start(s)`, solved as the optimal value of
/// the indicator-reward MDP. The returned value is the exact visitation mass
/// of the greedy policy.
pub fn max_visitation_of_set_with_policy(
    mdp: &TabularMdp,
    target: &StateSet,
    start: &StateDistribution,
    gamma: DiscountFactor,
) -> Result<SetVisitation> {
    if target.num_states() != mdp.num_states() {
        return Err(Error::Shape("target set size differs from the MDP".into()));
    }
    if target.is_empty() {
        return Ok(SetVisitation {
            value: 0.0,
            policy: StochasticPolicy::deterministic(&vec![0; mdp.num_states()], mdp.num_actions()),
        });
    }
    let indicator = indicator_reward_mdp(mdp, target);
    let solution = value_iteration_default(&indicator, gamma)?;
    let d = exact_visitation(mdp, &solution.optimal_policy, start, gamma)?;
    Ok(SetVisitation {
        value: d.mass_on(target.iter()),
        policy: solution.optimal_policy,
    })
}

pub fn max_visitation_of_set(
    mdp: &TabularMdp,
    target: &StateSet,
    start: &StateDistribution,
    gamma: DiscountFactor,
) -> Result<f64> {
    Ok(max_visitation_of_set_with_policy(mdp, target, start, gamma)?.value)
}

/// `sum_s max_pi d^pi_rho(s)`, with `rho` the MDP's start distribution.
pub fn exploitative_factor(mdp: &TabularMdp, gamma: DiscountFactor) -> Result<f64> {
    let start = StateDistribution::new(mdp.start().to_vec())?;
    let n = mdp.num_states();
    let mut total = 0.0;
    for s in 0..n {
        total += max_visitation_of_set(mdp, &StateSet::from_indices(n, [s]), &start, gamma)?;
    }
    Ok(total)
}

/// `max_{s in support} d_target(s) / mu(s)` with `0/0 = 0` and `x/0 = inf`.
pub fn mismatch_coefficient(
    d_target: &StateDistribution,
    mu: &StateDistribution,
    support: impl IntoIterator<Item = usize>,
) -> f64 {
    support
        .into_iter()
        .map(|s| {
            let (num, den) = (d_target.prob(s), mu.prob(s));
            match (num > 0.0, den > 0.0) {
                (false, _) => 0.0,
                (true, false) => f64::INFINITY,
                (true, true) => num / den,
            }
        })
        .fold(0.0, f64::max)
}
