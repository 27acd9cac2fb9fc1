//! Benchmark MDP generators.
//!
//! * Consecutive Crossroad Traps (CCT): a corridor `s_0 .. s_{d-1}, T_d`
//!   where one action steps forward and every other action steps back.
//! * Diabolical Combination Lock (DCL): two rewarding paths A and B with
//!   random switching plus an unrecoverable locked path; every episode lasts
//!   exactly `d + 1` steps.
//! * Dense random MDPs for property sweeps.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CctSpec {
    pub depth: usize,
    #[serde(default = "default_num_actions")]
    pub num_actions: usize,
}

fn default_num_actions() -> usize {
    4
}

impl CctSpec {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            num_actions: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("CCT depth must be at least 1".into()));
        }
        if self.num_actions < 2 {
            return Err(Error::Config("CCT needs at least 2 actions".into()));
        }
        Ok(())
    }
}

/// Index of the action that moves one step forward in CCT.
pub const CCT_FORWARD: usize = 0;

/// States `0..d` are the corridor, state `d` is the terminal `T_d`. Back
/// actions at `s_0` self-loop. The single unit reward sits on the forward
/// action of `s_{d-1}`, i.e. on entering the terminal.
pub fn build_cct(spec: &CctSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let d = spec.depth;
    let mut labels: Vec<String> = (0..d).map(|k| format!("s{k}")).collect();
    labels.push(format!("T{d}"));
    let mut b = MdpBuilder::new(d + 1, spec.num_actions).start_state(0);
    for k in 0..d {
        for a in 0..spec.num_actions {
            let next = if a == CCT_FORWARD { k + 1 } else { k.saturating_sub(1) };
            b = b.deterministic(k, a, next);
        }
    }
    b.reward(d - 1, CCT_FORWARD, 1.0).terminal(d).labels(labels).build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DclSpec {
    pub depth: usize,
    #[serde(default = "default_switch_prob")]
    pub switch_prob: f64,
    #[serde(default = "default_num_actions")]
    pub num_actions: usize,
    #[serde(default = "default_good_actions")]
    pub good_actions_per_state: usize,
    #[serde(default)]
    pub lock_seed: u64,
    /// Use actions `0..good_actions_per_state` as the good actions everywhere
    /// instead of a seeded per-state draw.
    #[serde(default)]
    pub fixed_good_actions: bool,
}

fn default_switch_prob() -> f64 {
    0.2
}

fn default_good_actions() -> usize {
    2
}

impl DclSpec {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            switch_prob: 0.2,
            num_actions: 4,
            good_actions_per_state: 2,
            lock_seed: 0,
            fixed_good_actions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("DCL depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(Error::Config(format!(
                "DCL switch probability {} outside [0, 1]",
                self.switch_prob
            )));
        }
        if self.good_actions_per_state < 1 || self.good_actions_per_state >= self.num_actions {
            return Err(Error::Config(format!(
                "DCL needs 1 <= good actions ({}) < actions ({})",
                self.good_actions_per_state, self.num_actions
            )));
        }
        Ok(())
    }
}

/// State numbering for a DCL of depth `d`: `0` is the start, level
/// `k in 1..=d+1` holds `A_k, B_k, L_k` at `3k - 2, 3k - 1, 3k`. Level
/// `d + 1` holds the terminals `endA, endB, lockedEnd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DclLayout {
    pub depth: usize,
}

impl DclLayout {
    pub fn new(depth: usize) -> Self {
        Self { depth }
    }

    pub fn num_states(&self) -> usize {
        3 * self.depth + 4
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn path_a(&self, level: usize) -> usize {
        3 * level - 2
    }

    pub fn path_b(&self, level: usize) -> usize {
        3 * level - 1
    }

    pub fn locked(&self, level: usize) -> usize {
        3 * level
    }

    pub fn end_a(&self) -> usize {
        self.path_a(self.depth + 1)
    }

    pub fn end_b(&self) -> usize {
        self.path_b(self.depth + 1)
    }

    pub fn locked_end(&self) -> usize {
        self.locked(self.depth + 1)
    }

    /// Locked-path states including `lockedEnd`.
    pub fn locked_states(&self) -> Vec<usize> {
        (1..=self.depth + 1).map(|k| self.locked(k)).collect()
    }

    /// Start plus path A/B states of levels `1..=d`: the states with good
    /// actions.
    pub fn good_path_states(&self) -> Vec<usize> {
        let mut v = vec![self.start()];
        for k in 1..=self.depth {
            v.push(self.path_a(k));
            v.push(self.path_b(k));
        }
        v
    }

    pub fn level_of(&self, state: usize) -> usize {
        if state == 0 {
            0
        } else {
            state.div_ceil(3)
        }
    }
}

/// Good actions for every state with a choice (start and A/B of levels
/// `1..=d`), indexed by state; other states get an empty list.
pub fn dcl_good_actions(spec: &DclSpec) -> Vec<Vec<usize>> {
    let layout = DclLayout::new(spec.depth);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.lock_seed);
    let mut good = vec![Vec::new(); layout.num_states()];
    for s in layout.good_path_states() {
        good[s] = if spec.fixed_good_actions {
            (0..spec.good_actions_per_state).collect()
        } else {
            let mut picks =
                index::sample(&mut rng, spec.num_actions, spec.good_actions_per_state).into_vec();
            picks.sort_unstable();
            picks
        };
    }
    good
}

/// Builds the combination lock.
///
/// From a path-A state a good action lands on the next A state with
/// probability `1 - switch_prob` and on the next B state otherwise (and
/// symmetrically from B). At the start, the i-th good action favors A for
/// even `i` and B for odd `i`. Bad actions drop onto the next locked state;
/// locked states only move forward. Unit reward sits on the good actions of
/// `A_d` and `B_d`, whose successors are exactly `endA` and `endB`.
pub fn build_dcl(spec: &DclSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let layout = DclLayout::new(spec.depth);
    let d = spec.depth;
    let good = dcl_good_actions(spec);
    let p = spec.switch_prob;
    let mut b = MdpBuilder::new(layout.num_states(), spec.num_actions).start_state(0);

    let mut labels = vec!["start".to_string()];
    for k in 1..=d {
        labels.push(format!("A{k}"));
        labels.push(format!("B{k}"));
        labels.push(format!("L{k}"));
    }
    labels.extend(["endA", "endB", "lockedEnd"].map(String::from));

    let forward = |from_a: bool, level: usize| -> [(usize, f64); 2] {
        let (same, other) = if from_a {
            (layout.path_a(level), layout.path_b(level))
        } else {
            (layout.path_b(level), layout.path_a(level))
        };
        [(same, 1.0 - p), (other, p)]
    };

    for a in 0..spec.num_actions {
        b = match good[0].iter().position(|&g| g == a) {
            Some(i) => b.transition(0, a, &forward(i % 2 == 0, 1)),
            None => b.deterministic(0, a, layout.locked(1)),
        };
    }
    for k in 1..=d {
        for (state, from_a) in [(layout.path_a(k), true), (layout.path_b(k), false)] {
            for a in 0..spec.num_actions {
                b = if good[state].contains(&a) {
                    let b = b.transition(state, a, &forward(from_a, k + 1));
                    if k == d {
                        b.reward(state, a, 1.0)
                    } else {
                        b
                    }
                } else {
                    b.deterministic(state, a, layout.locked(k + 1))
                };
            }
        }
        for a in 0..spec.num_actions {
            b = b.deterministic(layout.locked(k), a, layout.locked(k + 1));
        }
    }
    b.terminal(layout.end_a())
        .terminal(layout.end_b())
        .terminal(layout.locked_end())
        .labels(labels)
        .build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
}

/// Dense random MDP: transition rows uniform on the simplex, rewards uniform
/// on `[0, 1]`, start state 0, no terminals.
pub fn build_random(spec: &RandomMdpSpec) -> Result<TabularMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    random_mdp(spec.num_states, spec.num_actions, &mut rng)
}

pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> Result<TabularMdp> {
    if num_states < 1 || num_actions < 1 {
        return Err(Error::Config("random MDP needs at least one state and action".into()));
    }
    let mut b = MdpBuilder::new(num_states, num_actions).start_state(0);
    for s in 0..num_states {
        for a in 0..num_actions {
            let raw: Vec<f64> = (0..num_states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            let outcomes: Vec<(usize, f64)> =
                raw.iter().enumerate().map(|(i, x)| (i, x / total)).collect();
            b = b.transition(s, a, &outcomes).reward(s, a, rng.random());
        }
    }
    b.build()
}
