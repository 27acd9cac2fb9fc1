use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::STOCHASTIC_TOL;
use crate::rng::sample_index;

/// Stationary policy `pi(a|s)` stored as a dense state-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Shape("policy needs at least one state and action".into()));
        }
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Shape(format!("policy row {s} has {} actions", row.len())));
            }
            if let Some((index, &value)) = row.iter().enumerate().find(|(_, &p)| p < 0.0 || p.is_nan()) {
                return Err(Error::NegativeEntry {
                    context: format!("policy row {s}"),
                    index,
                    value,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotADistribution {
                    context: format!("policy row {s}"),
                    sum,
                });
            }
            probs.extend(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// One action per state with probability 1.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    /// Random policy with rows drawn uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for _ in 0..num_states {
            let row: Vec<f64> = (0..num_actions)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.into_iter().map(|x| x / total));
        }
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let base = state * self.num_actions;
        &self.probs[base..base + self.num_actions]
    }

    #[inline]
    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_index(self.row(state), rng)
    }

    /// The action with probability 1 in `state`, if the row is deterministic.
    pub fn greedy_action(&self, state: usize) -> Option<usize> {
        self.row(state).iter().position(|&p| p == 1.0)
    }
}

/// Tabular softmax policy: `pi(a|s) = exp(theta[s,a]) / sum_b exp(theta[s,b])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    num_states: usize,
    num_actions: usize,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    /// All-zero parameters, i.e. the uniform policy.
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            theta: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_theta(num_states: usize, num_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != num_states * num_actions {
            return Err(Error::Shape(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            theta,
        })
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn theta_row(&self, state: usize) -> &[f64] {
        let base = state * self.num_actions;
        &self.theta[base..base + self.num_actions]
    }

    /// Writes `pi(.|state)` into `out`, shifting by the row maximum first.
    pub fn action_probs_into(&self, state: usize, out: &mut [f64]) {
        let row = self.theta_row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &t) in out.iter_mut().zip(row) {
            *o = (t - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn action_probs(&self, state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.action_probs_into(state, &mut out);
        out
    }

    pub fn log_prob(&self, state: usize, action: usize) -> f64 {
        let row = self.theta_row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&t| (t - max).exp()).sum::<f64>().ln();
        row[action] - lse
    }

    /// `d/d theta[state, .] log pi(action|state) = e_action - pi(.|state)`;
    /// the gradient is zero on every other state's row.
    pub fn grad_log_prob(&self, state: usize, action: usize) -> Vec<f64> {
        let mut g = self.action_probs(state);
        for x in g.iter_mut() {
            *x = -*x;
        }
        g[action] += 1.0;
        g
    }

    pub fn to_stochastic(&self) -> Result<StochasticPolicy> {
        let mut probs = vec![0.0; self.theta.len()];
        for s in 0..self.num_states {
            let base = s * self.num_actions;
            self.action_probs_into(s, &mut probs[base..base + self.num_actions]);
            if probs[base..base + self.num_actions].iter().any(|p| !p.is_finite()) {
                return Err(Error::SoftmaxOverflow { state: s });
            }
        }
        Ok(StochasticPolicy {
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs,
        })
    }
}
