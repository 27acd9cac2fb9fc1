use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::rng::sample_index;

/// Row-sum tolerance for state distributions.
pub const DISTRIBUTION_TOL: f64 = 1e-10;

/// Probability vector over states. Used for start distributions, reset
/// models, visitation distributions and their mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &p)| p < 0.0 || p.is_nan()) {
            return Err(Error::NegativeEntry {
                context: "state distribution".into(),
                index,
                value,
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::NotADistribution {
                context: "state distribution".into(),
                sum,
            });
        }
        Ok(Self { probs })
    }

    /// Wraps the output of a linear solve, flushing round-off negatives to 0.
    pub(crate) fn from_solve(mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if *p < 0.0 && *p > -1e-12 {
                *p = 0.0;
            }
        }
        Self::new(probs)
    }

    pub fn point_mass(num_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn uniform(num_states: usize) -> Self {
        Self {
            probs: vec![1.0 / num_states as f64; num_states],
        }
    }

    /// Normalized histogram; the entries sum to one up to a single division
    /// per entry.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::NotADistribution {
                context: "empty histogram".into(),
                sum: 0.0,
            });
        }
        let t = total as f64;
        Ok(Self {
            probs: counts.iter().map(|&c| c as f64 / t).collect(),
        })
    }

    pub fn random<R: Rng + ?Sized>(num_states: usize, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..num_states)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        Self {
            probs: raw.into_iter().map(|x| x / total).collect(),
        }
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &StateDistribution, weight: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape("mixing distributions of different sizes".into()));
        }
        Self::new(
            self.probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| weight * a + (1.0 - weight) * b)
                .collect(),
        )
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, _)| s)
    }

    pub fn total_variation(&self, other: &StateDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn mass_on(&self, states: impl IntoIterator<Item = usize>) -> f64 {
        states.into_iter().map(|s| self.probs[s]).sum()
    }
}

/// Anything that can produce reset states: tabulated distributions or
/// simulated reset chains.
pub trait ResetSampler {
    fn sample_state(&self, rng: &mut dyn RngCore) -> usize;
}

impl ResetSampler for StateDistribution {
    fn sample_state(&self, rng: &mut dyn RngCore) -> usize {
        sample_index(&self.probs, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn rejects_non_stochastic() {
        assert!(StateDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(StateDistribution::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn mixture_and_tv() {
        let a = StateDistribution::point_mass(2, 0);
        let b = StateDistribution::uniform(2);
        let m = b.mix(&a, 0.5).unwrap();
        assert_eq!(m.probs(), &[0.75, 0.25]);
        assert!((a.total_variation(&b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_follows_probs() {
        let d = StateDistribution::new(vec![0.2, 0.0, 0.8]).unwrap();
        let mut rng = stream_rng(3, 0);
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            counts[d.sample_state(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        let freq = counts[0] as f64 / 1e5;
        assert!((freq - 0.2).abs() < 0.01);
    }
}
