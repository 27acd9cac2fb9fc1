//! Numerical checks of the exploration guarantees on exact-mode traces.
//!
//! For every prefix `0..=N` of a trace the bound reads
//!
//! ```text
//! sum_{n<=N} max_pi sum_{s in K_n} d^pi_rho(s)
//!     <= 2 sum_{n<=N} eps_n + 2 sum_s beta_{n~(s)} + 2 e
//! ```
//!
//! with `n~(s)` the last iteration `<= N` at which `s` was poorly visited
//! (states never poorly visited contribute 0) and `e` the exploitative
//! factor.

use crate::distribution::StateDistribution;
use crate::dp::{exact_visitation, exploitative_factor, max_visitation_of_set, mismatch_coefficient, value_iteration_default};
use crate::error::{Error, Result};
use crate::explorer::ExplorationTrace;
use crate::mdp::{DiscountFactor, TabularMdp};

/// Slack below which a bound is still reported as holding; absorbs
/// linear-solve round-off.
pub const BOUND_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub n: usize,
    pub lhs: f64,
    pub eps_term: f64,
    pub beta_term: f64,
    pub exploitative_term: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub exploitative_factor: f64,
    /// `max_pi sum_{s in K_n} d^pi_rho(s)` per iteration.
    pub set_visitation: Vec<f64>,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

fn require_exact(trace: &ExplorationTrace) -> Result<()> {
    if trace.is_exact() {
        Ok(())
    } else {
        Err(Error::TraceNotExact)
    }
}

fn eps_at(eps: &[f64], n: usize) -> Result<f64> {
    eps.get(n).copied().ok_or_else(|| {
        Error::Config(format!("accuracy list has {} entries, needed index {n}", eps.len()))
    })
}

fn set_visitations(mdp: &TabularMdp, gamma: DiscountFactor, trace: &ExplorationTrace) -> Result<Vec<f64>> {
    trace
        .iterations
        .iter()
        .map(|rec| max_visitation_of_set(mdp, &rec.poorly_visited, &trace.rho, gamma))
        .collect()
}

/// Evaluates both sides of the bound for every prefix of the trace.
pub fn check_theorem1(
    mdp: &TabularMdp,
    gamma: DiscountFactor,
    trace: &ExplorationTrace,
    eps: &[f64],
) -> Result<BoundReport> {
    require_exact(trace)?;
    let e = exploitative_factor(mdp, gamma)?;
    let set_visitation = set_visitations(mdp, gamma, trace)?;
    let mut rows = Vec::with_capacity(trace.len());
    let mut lhs = 0.0;
    let mut eps_sum = 0.0;
    for (n, &v) in set_visitation.iter().enumerate() {
        lhs += v;
        eps_sum += eps_at(eps, n)?;
        let beta_sum: f64 = trace
            .last_membership(n)
            .into_iter()
            .flatten()
            .map(|m| trace.iterations[m].beta)
            .sum();
        let (eps_term, beta_term, exploitative_term) = (2.0 * eps_sum, 2.0 * beta_sum, 2.0 * e);
        let rhs = eps_term + beta_term + exploitative_term;
        let slack = rhs - lhs;
        rows.push(BoundRow {
            n,
            lhs,
            eps_term,
            beta_term,
            exploitative_term,
            rhs,
            slack,
            holds: slack >= -BOUND_TOLERANCE,
        });
    }
    Ok(BoundReport {
        exploitative_factor: e,
        set_visitation,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryRow {
    pub n: usize,
    /// `max_pi sum_{s in K_n} d^pi_rho(s)`.
    pub lhs: f64,
    /// `(2 / n) (sum_{i<n} eps_i + beta |S| + e)`.
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryReport {
    pub beta: f64,
    pub exploitative_factor: f64,
    pub rows: Vec<CorollaryRow>,
    /// `K_{n+1} subset of K_n` for every recorded `n`.
    pub nested: bool,
}

impl CorollaryReport {
    pub fn holds(&self) -> bool {
        self.nested && self.rows.iter().all(|r| r.holds)
    }
}

/// Constant-threshold form of the bound: for every `n >= 1`,
/// `max_pi sum_{s in K_n} d^pi_rho(s) <= (2/n)(sum_{i<n} eps_i + beta|S| + e)`,
/// together with the nesting of the poorly visited sets.
pub fn check_constant_beta_corollary(
    mdp: &TabularMdp,
    gamma: DiscountFactor,
    trace: &ExplorationTrace,
    eps: &[f64],
) -> Result<CorollaryReport> {
    require_exact(trace)?;
    if !trace.schedule.beta.is_constant() {
        return Err(Error::Schedule("the constant-threshold bound needs a constant threshold".into()));
    }
    let beta = trace.schedule.beta.at(0);
    let e = exploitative_factor(mdp, gamma)?;
    let set_visitation = set_visitations(mdp, gamma, trace)?;
    let ns = mdp.num_states() as f64;
    let mut rows = Vec::new();
    let mut eps_sum = 0.0;
    for (n, &lhs) in set_visitation.iter().enumerate() {
        if n >= 1 {
            let rhs = 2.0 / n as f64 * (eps_sum + beta * ns + e);
            rows.push(CorollaryRow {
                n,
                lhs,
                rhs,
                holds: rhs - lhs >= -BOUND_TOLERANCE,
            });
        }
        eps_sum += eps_at(eps, n)?;
    }
    let nested = trace
        .iterations
        .windows(2)
        .all(|w| w[1].poorly_visited.is_subset(&w[0].poorly_visited));
    Ok(CorollaryReport {
        beta,
        exploitative_factor: e,
        rows,
        nested,
    })
}

/// `max_{s : d*(s) > 0} d*(s) / mu(s)` where `d*` is the visitation of the
/// optimal policy for the true reward from the start distribution.
pub fn report_mismatch(mdp: &TabularMdp, gamma: DiscountFactor, mu: &StateDistribution) -> Result<f64> {
    let rho = StateDistribution::new(mdp.start().to_vec())?;
    let optimal = value_iteration_default(mdp, gamma)?.optimal_policy;
    let d_star = exact_visitation(mdp, &optimal, &rho, gamma)?;
    let support: Vec<usize> = d_star.support().collect();
    Ok(mismatch_coefficient(&d_star, mu, support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{run_curious_explorer, BetaSchedule, ExplorationSchedule, VisitationMode};
    use crate::mdp::MdpBuilder;
    use crate::optimizers::ExactPlanner;
    use crate::rng::stream_rng;

    fn chain() -> TabularMdp {
        MdpBuilder::new(2, 1)
            .deterministic(0, 0, 1)
            .reward(1, 0, 1.0)
            .build()
            .unwrap()
    }

    fn exact_trace(mdp: &TabularMdp, beta: BetaSchedule, iterations: usize) -> ExplorationTrace {
        let schedule = ExplorationSchedule {
            iterations,
            beta,
            eps: None,
            delta: None,
            visit_samples: 1,
        };
        run_curious_explorer(
            mdp,
            DiscountFactor::new(0.95).unwrap(),
            &schedule,
            &mut ExactPlanner,
            VisitationMode::Exact,
            &mut stream_rng(0, 0),
        )
        .unwrap()
    }

    #[test]
    fn first_row_is_bounded_by_twice_the_exploitative_factor() {
        let mdp = chain();
        let g = DiscountFactor::new(0.95).unwrap();
        let trace = exact_trace(&mdp, BetaSchedule::Linear(0.25), 3);
        let report = check_theorem1(&mdp, g, &trace, &[0.0; 3]).unwrap();
        assert!(report.all_hold());
        assert!(report.rows[0].lhs <= 1.0 + 1e-12);
        assert!(report.exploitative_factor >= 1.0 - 1e-10);
        assert!(report.rows.windows(2).all(|w| w[1].lhs >= w[0].lhs));
    }

    #[test]
    fn huge_constant_beta_keeps_everything_poorly_visited() {
        let mdp = chain();
        let g = DiscountFactor::new(0.95).unwrap();
        let trace = exact_trace(&mdp, BetaSchedule::Constant(5.0), 3);
        assert!(trace.iterations.iter().all(|r| r.poorly_visited.len() == 2));
        let report = check_constant_beta_corollary(&mdp, g, &trace, &[0.0; 3]).unwrap();
        assert!(report.holds());
        assert!((report.rows[0].lhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_traces_are_refused() {
        let mdp = chain();
        let g = DiscountFactor::new(0.95).unwrap();
        let mut trace = exact_trace(&mdp, BetaSchedule::Linear(0.25), 1);
        trace.mode = VisitationMode::Tabulated;
        assert!(matches!(check_theorem1(&mdp, g, &trace, &[0.0]), Err(Error::TraceNotExact)));
    }

    #[test]
    fn mismatch_examples() {
        let mdp = chain();
        let g = DiscountFactor::new(0.95).unwrap();
        let delta = StateDistribution::point_mass(2, 0);
        assert_eq!(report_mismatch(&mdp, g, &delta).unwrap(), f64::INFINITY);
        let d_star = StateDistribution::new(vec![0.05, 0.95]).unwrap();
        assert!((report_mismatch(&mdp, g, &d_star).unwrap() - 1.0).abs() < 1e-10);
    }
}
