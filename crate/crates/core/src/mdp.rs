//! Finite MDPs with a normalized-discount formalism.
//!
//! Transitions and rewards are stored densely. Terminal states follow the
//! absorbing convention: every action self-loops with zero reward, so the
//! infinite-horizon discounted quantities and episodic rollouts describe the
//! same process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for transition rows and the start distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DiscountFactor(f64);

impl DiscountFactor {
    pub fn new(gamma: f64) -> Result<Self> {
        if (0.0..1.0).contains(&gamma) {
            Ok(Self(gamma))
        } else {
            Err(Error::InvalidDiscount(gamma))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Probability of stopping before each new step, `1 - gamma`.
    #[inline]
    pub fn stop_probability(self) -> f64 {
        1.0 - self.0
    }

    /// Hard cap for rollouts that need one: `10 * ceil(1 / (1 - gamma))`.
    pub fn default_horizon_cap(self) -> usize {
        10 * (1.0 / (1.0 - self.0)).ceil() as usize
    }
}

/// Membership mask over the states of an MDP.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateSet(Vec<bool>);

impl StateSet {
    pub fn empty(num_states: usize) -> Self {
        Self(vec![false; num_states])
    }

    pub fn full(num_states: usize) -> Self {
        Self(vec![true; num_states])
    }

    pub fn from_indices(num_states: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = vec![false; num_states];
        for i in indices {
            mask[i] = true;
        }
        Self(mask)
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self(mask)
    }

    #[inline]
    pub fn contains(&self, state: usize) -> bool {
        self.0[state]
    }

    pub fn insert(&mut self, state: usize) {
        self.0[state] = true;
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn as_mask(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `transitions[(s * A + a) * S + s']`
    transitions: Vec<f64>,
    /// `rewards[s * A + a]`
    rewards: Vec<f64>,
    start: Vec<f64>,
    terminal: Vec<bool>,
    labels: Option<Vec<String>>,
}

impl TabularMdp {
    /// Builds and validates an MDP from dense nested arrays.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        start: Vec<f64>,
        terminals: &[usize],
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let mdp = Self::from_nested(transitions, rewards, start, terminals, labels)?;
        mdp.validate()?;
        Ok(mdp)
    }

    fn from_nested(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        start: Vec<f64>,
        terminals: &[usize],
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let num_states = transitions.len();
        if num_states == 0 {
            return Err(Error::Shape("MDP needs at least one state".into()));
        }
        let num_actions = transitions[0].len();
        if num_actions == 0 {
            return Err(Error::Shape("MDP needs at least one action".into()));
        }
        if rewards.len() != num_states || start.len() != num_states {
            return Err(Error::Shape(format!(
                "expected {num_states} reward rows and start entries, got {} and {}",
                rewards.len(),
                start.len()
            )));
        }
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, (rows, rew)) in transitions.into_iter().zip(rewards).enumerate() {
            if rows.len() != num_actions || rew.len() != num_actions {
                return Err(Error::Shape(format!(
                    "state {s}: expected {num_actions} actions in transitions and rewards"
                )));
            }
            for (a, row) in rows.into_iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::Shape(format!(
                        "P(.|s={s}, a={a}) has {} entries, expected {num_states}",
                        row.len()
                    )));
                }
                flat_p.extend(row);
            }
            flat_r.extend(rew);
        }
        let mut terminal = vec![false; num_states];
        for &t in terminals {
            if t >= num_states {
                return Err(Error::StateOutOfRange {
                    index: t,
                    num_states,
                });
            }
            terminal[t] = true;
        }
        if let Some(l) = &labels {
            if l.len() != num_states {
                return Err(Error::Shape(format!(
                    "{} labels for {num_states} states",
                    l.len()
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions: flat_p,
            rewards: flat_r,
            start,
            terminal,
            labels,
        })
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.num_states, self.num_actions);
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition_row(s, a);
                if let Some((next, &value)) = row.iter().enumerate().find(|(_, &p)| p < 0.0 || p.is_nan()) {
                    return Err(Error::NegativeProbability {
                        state: s,
                        action: a,
                        next,
                        value,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::RowNotStochastic {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                let r = self.reward(s, a);
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        if let Some((index, &value)) = self.start.iter().enumerate().find(|(_, &p)| p < 0.0 || p.is_nan()) {
            return Err(Error::NegativeEntry {
                context: "start distribution".into(),
                index,
                value,
            });
        }
        let sum: f64 = self.start.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotADistribution {
                context: "start distribution".into(),
                sum,
            });
        }
        for s in self.terminal_states() {
            for a in 0..na {
                if self.transition(s, a, s) != 1.0 {
                    return Err(Error::TerminalNotAbsorbing { state: s, action: a });
                }
                let r = self.reward(s, a);
                if r != 0.0 {
                    return Err(Error::TerminalReward {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        Ok(())
    }

    /// Same states, actions, transitions, start and terminals with a new
    /// reward table `rewards[s][a]` given as a function.
    ///
    /// The result is not re-validated: reward-shaped copies such as indicator
    /// rewards may deliberately put reward on absorbing terminal states.
    pub fn with_rewards(&self, reward: impl Fn(usize, usize) -> f64) -> Self {
        let mut rewards = Vec::with_capacity(self.rewards.len());
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                rewards.push(reward(s, a));
            }
        }
        Self {
            rewards,
            ..self.clone()
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
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.num_actions + action) * self.num_states;
        &self.transitions[base..base + self.num_states]
    }

    #[inline]
    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition_row(state, action)[next]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub fn reward_row(&self, state: usize) -> &[f64] {
        let base = state * self.num_actions;
        &self.rewards[base..base + self.num_actions]
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    /// The single start state, if the start distribution is a point mass.
    pub fn start_state(&self) -> Option<usize> {
        let mut support = self.start.iter().enumerate().filter(|(_, &p)| p > 0.0);
        match (support.next(), support.next()) {
            (Some((s, _)), None) => Some(s),
            _ => None,
        }
    }

    #[inline]
    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal.iter().enumerate().filter(|(_, &t)| t).map(|(s, _)| s)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, state: usize) -> String {
        match &self.labels {
            Some(l) => l[state].clone(),
            None => format!("s{state}"),
        }
    }

    pub fn to_document(&self, gamma: DiscountFactor) -> MdpDocument {
        let (ns, na) = (self.num_states, self.num_actions);
        MdpDocument {
            num_states: ns,
            num_actions: na,
            gamma: gamma.value(),
            start: self.start.clone(),
            terminals: self.terminal_states().collect(),
            labels: self.labels.clone(),
            transitions: (0..ns)
                .map(|s| (0..na).map(|a| self.transition_row(s, a).to_vec()).collect())
                .collect(),
            rewards: (0..ns).map(|s| self.reward_row(s).to_vec()).collect(),
        }
    }

    pub fn to_json(&self, gamma: DiscountFactor) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document(gamma))
            .expect("MDP document serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<(Self, DiscountFactor)> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.into_mdp()
    }
}

/// JSON interchange form of a [`TabularMdp`] together with its discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub start: Vec<f64>,
    pub terminals: Vec<usize>,
    pub labels: Option<Vec<String>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn into_mdp(self) -> Result<(TabularMdp, DiscountFactor)> {
        let gamma = DiscountFactor::new(self.gamma)?;
        if self.transitions.len() != self.num_states
            || self.transitions.first().map(Vec::len) != Some(self.num_actions)
        {
            return Err(Error::Shape(format!(
                "declared {} states x {} actions does not match the transition array",
                self.num_states, self.num_actions
            )));
        }
        let mdp = TabularMdp::new(
            self.transitions,
            self.rewards,
            self.start,
            &self.terminals,
            self.labels,
        )?;
        Ok((mdp, gamma))
    }
}

/// Incremental construction of sparse-looking MDPs; unset rows default to
/// self-loops.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    start: Vec<f64>,
    terminals: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let transitions = (0..num_states)
            .map(|s| {
                (0..num_actions)
                    .map(|_| {
                        let mut row = vec![0.0; num_states];
                        row[s] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        let mut start = vec![0.0; num_states];
        if num_states > 0 {
            start[0] = 1.0;
        }
        Self {
            num_states,
            num_actions,
            transitions,
            rewards: vec![vec![0.0; num_actions]; num_states],
            start,
            terminals: Vec::new(),
            labels: None,
        }
    }

    /// Replaces `P(.|state, action)` with the given `(next, probability)`
    /// pairs; repeated targets accumulate.
    pub fn transition(mut self, state: usize, action: usize, outcomes: &[(usize, f64)]) -> Self {
        let row = &mut self.transitions[state][action];
        row.iter_mut().for_each(|p| *p = 0.0);
        for &(next, p) in outcomes {
            row[next] += p;
        }
        self
    }

    pub fn deterministic(self, state: usize, action: usize, next: usize) -> Self {
        self.transition(state, action, &[(next, 1.0)])
    }

    pub fn reward(mut self, state: usize, action: usize, value: f64) -> Self {
        self.rewards[state][action] = value;
        self
    }

    pub fn start_state(mut self, state: usize) -> Self {
        self.start = vec![0.0; self.num_states];
        self.start[state] = 1.0;
        self
    }

    pub fn start_distribution(mut self, start: Vec<f64>) -> Self {
        self.start = start;
        self
    }

    /// Marks `state` terminal and rewires it as an absorbing zero-reward state.
    pub fn terminal(mut self, state: usize) -> Self {
        for a in 0..self.num_actions {
            let row = &mut self.transitions[state][a];
            row.iter_mut().for_each(|p| *p = 0.0);
            row[state] = 1.0;
            self.rewards[state][a] = 0.0;
        }
        self.terminals.push(state);
        self
    }

    pub fn labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn build(self) -> Result<TabularMdp> {
        TabularMdp::new(
            self.transitions,
            self.rewards,
            self.start,
            &self.terminals,
            self.labels,
        )
    }
}
