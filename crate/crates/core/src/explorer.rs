//! Curious Explorer.
//!
//! Starting from the MDP's own start distribution `rho` and the uniform
//! policy, every iteration `n`:
//!
//! 1. measures `D_n = d^{pi_n}_{mu_{n-1}}` (with `mu_{-1} = rho`),
//! 2. marks the poorly visited states `K_n = {s : sum_{i<=n} D_i(s) <= beta_n}`,
//! 3. forms the reset model `mu_n = D_n / 2 + rho / 2`,
//! 4. asks the optimizer for `pi_{n+1}` on the MDP whose reward is
//!    `1{s in K_n}`, restarting from `mu_n`.
//!
//! In exact mode `D_n` comes from the linear-solve oracle; otherwise it is
//! estimated by counting the endpoints of [`visit`] rollouts.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distribution::{ResetSampler, StateDistribution};
use crate::dp::{exact_visitation, indicator_reward_mdp};
use crate::error::{Error, Result};
use crate::mdp::{DiscountFactor, StateSet, TabularMdp};
use crate::policy::StochasticPolicy;
use crate::rng::sample_index;

/// One draw from `d^{pi}_{start}`: starting from `start`, stop with
/// probability `1 - gamma` before every step, otherwise act and move.
/// Entering a terminal state stops immediately; the state is absorbing so
/// the law is unchanged.
pub fn visit<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &dyn ResetSampler,
    gamma: DiscountFactor,
    rng: &mut R,
) -> usize {
    let state = start.sample_state(rng);
    visit_from(mdp, policy, state, gamma, rng)
}

pub fn visit_from<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    mut state: usize,
    gamma: DiscountFactor,
    rng: &mut R,
) -> usize {
    let stop = gamma.stop_probability();
    loop {
        if mdp.is_terminal(state) || rng.random::<f64>() < stop {
            return state;
        }
        let action = policy.sample_action(state, rng);
        state = sample_index(mdp.transition_row(state, action), rng);
    }
}

/// Normalized endpoint counts of `num_samples` independent [`visit`] calls.
pub fn estimate_visitation<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: &dyn ResetSampler,
    gamma: DiscountFactor,
    num_samples: usize,
    rng: &mut R,
) -> Result<StateDistribution> {
    if num_samples == 0 {
        return Err(Error::Config("visitation estimate needs at least one sample".into()));
    }
    let mut counts = vec![0u64; mdp.num_states()];
    for _ in 0..num_samples {
        counts[visit(mdp, policy, start, gamma, rng)] += 1;
    }
    StateDistribution::from_counts(&counts)
}

/// `{s : cumulative[s] <= beta}`; the comparison is non-strict.
pub fn poorly_visited_set(cumulative: &[f64], beta: f64) -> StateSet {
    StateSet::from_mask(cumulative.iter().map(|&c| c <= beta).collect())
}

/// Same transitions, start and terminals; reward `1{s in K}` on every
/// action.
pub fn intrinsic_mdp(mdp: &TabularMdp, poorly_visited: &StateSet) -> TabularMdp {
    indicator_reward_mdp(mdp, poorly_visited)
}

/// `mu = D / 2 + rho / 2`.
pub fn mixture_reset(visitation: &StateDistribution, rho: &StateDistribution) -> Result<StateDistribution> {
    visitation.mix(rho, 0.5)
}

/// Simulated reset model built from the policies of the first iterations.
///
/// With policies `pi_0 .. pi_n` recorded, [`ResetChain::sample`] draws from
/// `mu_n` without ever tabulating it: with probability 1/2 return a draw from
/// `rho`, otherwise draw from `mu_{n-1}` and spread it with one `visit` under
/// `pi_n`.
#[derive(Debug, Clone, Copy)]
pub struct ResetChain<'a> {
    mdp: &'a TabularMdp,
    gamma: DiscountFactor,
    rho: &'a StateDistribution,
    policies: &'a [StochasticPolicy],
}

impl<'a> ResetChain<'a> {
    pub fn new(
        mdp: &'a TabularMdp,
        gamma: DiscountFactor,
        rho: &'a StateDistribution,
        policies: &'a [StochasticPolicy],
    ) -> Self {
        Self {
            mdp,
            gamma,
            rho,
            policies,
        }
    }

    /// Number of mixture levels recorded; an empty chain samples `rho`.
    pub fn depth(&self) -> usize {
        self.policies.len()
    }

    /// Draws from level `level` of the chain; level `0` is `rho` and level
    /// `n + 1` is `mu_n`.
    pub fn sample_level<R: Rng + ?Sized>(&self, level: usize, rng: &mut R) -> Result<usize> {
        if level > self.policies.len() {
            return Err(Error::ResetDepth {
                level,
                depth: self.policies.len(),
            });
        }
        // Walk down until a coin lands on rho, then spread back up.
        let mut bottom = level;
        while bottom > 0 && rng.random::<bool>() {
            bottom -= 1;
        }
        let mut state = sample_index(self.rho.probs(), rng);
        for policy in &self.policies[bottom..level] {
            state = visit_from(self.mdp, policy, state, self.gamma, rng);
        }
        Ok(state)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_level(self.policies.len(), rng)
            .expect("top level is always in range")
    }
}

impl ResetSampler for ResetChain<'_> {
    fn sample_state(&self, rng: &mut dyn RngCore) -> usize {
        self.sample(rng)
    }
}

/// Convenience form of [`ResetChain::sample_level`] over an explicit history.
pub fn sample_from_reset<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    gamma: DiscountFactor,
    rho: &StateDistribution,
    history: &[StochasticPolicy],
    rng: &mut R,
) -> usize {
    ResetChain::new(mdp, gamma, rho, history).sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum BetaSchedule {
    /// `beta_n = beta`.
    Constant(f64),
    /// `beta_n = beta * n`.
    Linear(f64),
    Explicit(Vec<f64>),
}

impl BetaSchedule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::Linear(b) => b * n as f64,
            BetaSchedule::Explicit(v) => v[n],
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            BetaSchedule::Constant(_) => true,
            BetaSchedule::Linear(b) => *b == 0.0,
            BetaSchedule::Explicit(v) => v.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub iterations: usize,
    pub beta: BetaSchedule,
    /// Optimizer accuracy per iteration; `None` means 0.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
    /// Number of `visit` rollouts used to estimate each `D_n` in sampled mode.
    pub visit_samples: usize,
}

impl ExplorationSchedule {
    /// `beta_n = n / (2|S|)` run for `iterations` steps.
    pub fn linear_default(num_states: usize, iterations: usize, visit_samples: usize) -> Self {
        Self {
            iterations,
            beta: BetaSchedule::Linear(1.0 / (2.0 * num_states as f64)),
            eps: None,
            delta: None,
            visit_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BetaSchedule::Explicit(v) = &self.beta {
            if v.len() < self.iterations {
                return Err(Error::Schedule(format!(
                    "{} thresholds for {} iterations",
                    v.len(),
                    self.iterations
                )));
            }
        }
        for n in 0..self.iterations {
            let b = self.beta.at(n);
            if b.is_nan() || b < 0.0 {
                return Err(Error::Schedule(format!("beta_{n} = {b} is negative")));
            }
        }
        for (name, list) in [("eps", &self.eps), ("delta", &self.delta)] {
            if let Some(v) = list {
                if v.len() < self.iterations {
                    return Err(Error::Schedule(format!(
                        "{} {name} values for {} iterations",
                        v.len(),
                        self.iterations
                    )));
                }
            }
        }
        if self.visit_samples == 0 {
            return Err(Error::Schedule("visit_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn eps_at(&self, n: usize) -> f64 {
        self.eps.as_ref().map_or(0.0, |v| v[n])
    }
}

/// How `D_n` is obtained and how the optimizer restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitationMode {
    /// Oracle visitation; the optimizer restarts from the tabulated `mu_n`.
    Exact,
    /// Counted visits; resets are drawn from the tabulated estimate of `mu_n`.
    Tabulated,
    /// Counted visits; resets are simulated through the policy chain.
    Simulated,
}

/// The `opt(M', mu)` plug-in: returns a policy for `mdp` trained with
/// restarts drawn from `reset`.
pub trait Optimizer {
    fn optimize(
        &mut self,
        mdp: &TabularMdp,
        reset: &dyn ResetSampler,
        gamma: DiscountFactor,
        rng: &mut dyn RngCore,
    ) -> Result<StochasticPolicy>;

    /// Accuracy guarantee reported to the bound checker.
    fn epsilon(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// `D_n`.
    pub visitation: StateDistribution,
    /// `sum_{i<=n} D_i`.
    pub cumulative: Vec<f64>,
    pub beta: f64,
    /// `K_n`.
    pub poorly_visited: StateSet,
    /// `mu_n`.
    pub reset: StateDistribution,
}

impl IterationRecord {
    /// `sum_{i<=n} D_i / (n + 1)`.
    pub fn cumulative_average(&self, n: usize) -> Vec<f64> {
        self.cumulative.iter().map(|c| c / (n + 1) as f64).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    /// `rho = mu_{-1}`.
    pub rho: StateDistribution,
    /// `pi_0 .. pi_N`; `policies[0]` is uniform.
    pub policies: Vec<StochasticPolicy>,
    pub iterations: Vec<IterationRecord>,
    pub mode: VisitationMode,
    pub schedule: ExplorationSchedule,
}

impl ExplorationTrace {
    pub fn is_exact(&self) -> bool {
        self.mode == VisitationMode::Exact
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// The last reset model, `rho` when no iteration ran.
    pub fn final_reset(&self) -> &StateDistribution {
        self.iterations.last().map_or(&self.rho, |r| &r.reset)
    }

    /// Uniform average of `mu_0 .. mu_{N-1}` (or `rho` when empty).
    pub fn average_reset(&self) -> Result<StateDistribution> {
        if self.iterations.is_empty() {
            return Ok(self.rho.clone());
        }
        let n = self.rho.len();
        let mut acc = vec![0.0; n];
        for rec in &self.iterations {
            for (a, p) in acc.iter_mut().zip(rec.reset.probs()) {
                *a += p;
            }
        }
        let k = self.iterations.len() as f64;
        StateDistribution::new(acc.into_iter().map(|x| x / k).collect())
    }

    /// `n~(s) = max{n <= upto : s in K_n}` for every state.
    pub fn last_membership(&self, upto: usize) -> Vec<Option<usize>> {
        let mut last = vec![None; self.rho.len()];
        for (n, rec) in self.iterations.iter().enumerate().take(upto + 1) {
            for s in rec.poorly_visited.iter() {
                last[s] = Some(n);
            }
        }
        last
    }

    /// Reset chain reproducing `mu_{level-1}` in law (`level == 0` is `rho`).
    pub fn reset_chain<'a>(&'a self, mdp: &'a TabularMdp, gamma: DiscountFactor, level: usize) -> ResetChain<'a> {
        ResetChain::new(mdp, gamma, &self.rho, &self.policies[..level.min(self.policies.len())])
    }
}

pub fn run_curious_explorer<R: Rng>(
    mdp: &TabularMdp,
    gamma: DiscountFactor,
    schedule: &ExplorationSchedule,
    optimizer: &mut dyn Optimizer,
    mode: VisitationMode,
    rng: &mut R,
) -> Result<ExplorationTrace> {
    schedule.validate()?;
    let ns = mdp.num_states();
    let rho = StateDistribution::new(mdp.start().to_vec())?;
    let mut policies = vec![StochasticPolicy::uniform(ns, mdp.num_actions())];
    let mut iterations: Vec<IterationRecord> = Vec::with_capacity(schedule.iterations);
    let mut cumulative = vec![0.0; ns];

    for n in 0..schedule.iterations {
        let previous_reset = iterations.last().map_or(&rho, |r| &r.reset);
        let policy = &policies[n];
        let visitation = match mode {
            VisitationMode::Exact => exact_visitation(mdp, policy, previous_reset, gamma)?,
            VisitationMode::Tabulated => {
                estimate_visitation(mdp, policy, previous_reset, gamma, schedule.visit_samples, rng)?
            }
            VisitationMode::Simulated => {
                let chain = ResetChain::new(mdp, gamma, &rho, &policies[..n]);
                estimate_visitation(mdp, policy, &chain, gamma, schedule.visit_samples, rng)?
            }
        };
        for (c, d) in cumulative.iter_mut().zip(visitation.probs()) {
            *c += d;
        }
        let beta = schedule.beta.at(n);
        let poorly_visited = poorly_visited_set(&cumulative, beta);
        let reset = mixture_reset(&visitation, &rho)?;
        let intrinsic = intrinsic_mdp(mdp, &poorly_visited);

        let next = {
            let chain;
            let sampler: &dyn ResetSampler = match mode {
                VisitationMode::Simulated => {
                    chain = ResetChain::new(mdp, gamma, &rho, &policies[..=n]);
                    &chain
                }
                _ => &reset,
            };
            optimizer
                .optimize(&intrinsic, sampler, gamma, rng)
                .map_err(|e| Error::Optimizer {
                    iteration: n,
                    source: Box::new(e),
                })?
        };

        iterations.push(IterationRecord {
            visitation,
            cumulative: cumulative.clone(),
            beta,
            poorly_visited,
            reset,
        });
        policies.push(next);
    }

    Ok(ExplorationTrace {
        rho,
        policies,
        iterations,
        mode,
        schedule: schedule.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;
    use crate::rng::stream_rng;

    fn gamma(g: f64) -> DiscountFactor {
        DiscountFactor::new(g).unwrap()
    }

    fn chain(n: usize) -> TabularMdp {
        let mut b = MdpBuilder::new(n, 1);
        for s in 0..n - 1 {
            b = b.deterministic(s, 0, s + 1);
        }
        b.build().unwrap()
    }

    #[test]
    fn visit_on_one_state() {
        let mdp = chain(1);
        let mut rng = stream_rng(0, 0);
        let s0 = StateDistribution::point_mass(1, 0);
        for _ in 0..100 {
            assert_eq!(visit(&mdp, &StochasticPolicy::uniform(1, 1), &s0, gamma(0.9), &mut rng), 0);
        }
    }

    #[test]
    fn visit_frequencies_on_three_chain() {
        let mdp = chain(3);
        let mut rng = stream_rng(11, 0);
        let d = estimate_visitation(
            &mdp,
            &StochasticPolicy::uniform(3, 1),
            &StateDistribution::point_mass(3, 0),
            gamma(0.95),
            100_000,
            &mut rng,
        )
        .unwrap();
        for (got, want) in d.probs().iter().zip([0.05, 0.0475, 0.9025]) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn single_sample_estimate_is_one_hot() {
        let mdp = chain(3);
        let mut rng = stream_rng(2, 0);
        let d = estimate_visitation(
            &mdp,
            &StochasticPolicy::uniform(3, 1),
            &StateDistribution::point_mass(3, 0),
            gamma(0.95),
            1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.probs().iter().filter(|&&p| p == 1.0).count(), 1);
        assert!(estimate_visitation(
            &mdp,
            &StochasticPolicy::uniform(3, 1),
            &StateDistribution::point_mass(3, 0),
            gamma(0.95),
            0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn estimate_is_deterministic_per_seed() {
        let mdp = chain(4);
        let pi = StochasticPolicy::uniform(4, 1);
        let s0 = StateDistribution::point_mass(4, 0);
        let a = estimate_visitation(&mdp, &pi, &s0, gamma(0.9), 5000, &mut stream_rng(5, 1)).unwrap();
        let b = estimate_visitation(&mdp, &pi, &s0, gamma(0.9), 5000, &mut stream_rng(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thresholding_is_non_strict() {
        assert_eq!(poorly_visited_set(&[0.0, 0.0, 0.0], 0.0), StateSet::full(3));
        assert_eq!(
            poorly_visited_set(&[0.3, 0.01, 0.2], 0.05),
            StateSet::from_indices(3, [1])
        );
        assert_eq!(poorly_visited_set(&[0.3, 0.01, 0.2], 0.3), StateSet::full(3));
        assert_eq!(poorly_visited_set(&[0.05], 0.05), StateSet::full(1));
    }

    #[test]
    fn intrinsic_rewards_are_indicators() {
        let mdp = chain(3);
        let none = intrinsic_mdp(&mdp, &StateSet::empty(3));
        assert!((0..3).all(|s| none.reward(s, 0) == 0.0));
        let some = intrinsic_mdp(&mdp, &StateSet::from_indices(3, [2]));
        assert_eq!(some.reward(2, 0), 1.0);
        assert_eq!(some.reward(1, 0), 0.0);
        assert_eq!(some.transition_row(0, 0), mdp.transition_row(0, 0));
    }

    #[test]
    fn mixture_reset_examples() {
        let rho = StateDistribution::point_mass(2, 0);
        assert_eq!(mixture_reset(&rho, &rho).unwrap(), rho);
        let mu = mixture_reset(&StateDistribution::uniform(2), &rho).unwrap();
        assert_eq!(mu.probs(), &[0.75, 0.25]);
    }

    #[test]
    fn empty_reset_chain_returns_start() {
        let mdp = chain(3);
        let rho = StateDistribution::point_mass(3, 0);
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            assert_eq!(sample_from_reset(&mdp, gamma(0.9), &rho, &[], &mut rng), 0);
        }
        let c = ResetChain::new(&mdp, gamma(0.9), &rho, &[]);
        assert!(matches!(c.sample_level(1, &mut rng), Err(Error::ResetDepth { level: 1, depth: 0 })));
    }

    #[test]
    fn one_level_chain_law() {
        let mdp = chain(2);
        let rho = StateDistribution::point_mass(2, 0);
        let history = [StochasticPolicy::uniform(2, 1)];
        let mut rng = stream_rng(8, 0);
        let mut hits = 0u64;
        let n = 100_000;
        for _ in 0..n {
            if sample_from_reset(&mdp, gamma(0.95), &rho, &history, &mut rng) == 0 {
                hits += 1;
            }
        }
        let f0 = hits as f64 / n as f64;
        assert!((f0 - 0.525).abs() < 0.01, "{f0}");
    }

    #[test]
    fn schedule_validation() {
        let mut s = ExplorationSchedule::linear_default(4, 3, 10);
        s.validate().unwrap();
        assert_eq!(s.beta.at(2), 0.25);
        s.beta = BetaSchedule::Explicit(vec![0.1, 0.2]);
        assert!(s.validate().is_err());
        s.beta = BetaSchedule::Constant(-1.0);
        assert!(s.validate().is_err());
        s.beta = BetaSchedule::Constant(0.1);
        s.eps = Some(vec![0.0]);
        assert!(s.validate().is_err());
    }
}
