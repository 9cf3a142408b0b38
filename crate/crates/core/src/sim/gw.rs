//! Galton–Watson processes in varying environment: `Z(k+1)` is the sum of
//! `Z(k)` independent draws from the offspring law of generation `k`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{Result, SimError};

/// Populations above this size are refused so that counts stay exact in `f64`.
pub const DEFAULT_POPULATION_CAP: u64 = 1 << 53;

/// Below `SMALL_FACTOR * support` individuals the offspring are drawn one by
/// one; above it the generation is drawn as a multinomial split.
const SMALL_FACTOR: u64 = 16;

/// A finitely supported offspring law `P(ξ = k) = pmf[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringLaw {
    /// Probabilities must be non-negative and sum to one within `1e-12`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(SimError::Params(format!("invalid offspring pmf {pmf:?}")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SimError::Params(format!("offspring pmf sums to {total}")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(OffspringLaw { pmf, cdf })
    }

    /// Every individual has exactly `k` children.
    pub fn deterministic(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        Self::from_pmf(pmf).unwrap()
    }

    /// `P(k) ∝ (1 - p)^k p` on `0..=cap`, renormalized after truncation.
    pub fn geometric(p: f64, cap: usize) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SimError::Params(format!("geometric parameter {p} outside (0, 1]")));
        }
        Self::truncated((0..=cap).map(|k| (1.0 - p).powi(k as i32) * p).collect())
    }

    /// Poisson with the given mean on `0..=cap`, renormalized after truncation.
    pub fn poisson(mean: f64, cap: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(SimError::Params(format!("poisson mean {mean} must be >= 0")));
        }
        let mut weights = Vec::with_capacity(cap + 1);
        let mut w = (-mean).exp();
        for k in 0..=cap {
            weights.push(w);
            w *= mean / (k + 1) as f64;
        }
        Self::truncated(weights)
    }

    fn truncated(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SimError::Params("truncated law has no mass".into()));
        }
        Self::from_pmf(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u64
    }

    /// Total offspring of `parents` individuals.
    fn offspring<R: Rng + ?Sized>(&self, parents: u64, rng: &mut R) -> Option<u64> {
        let support = self.pmf.len() as u64;
        if parents <= SMALL_FACTOR * support {
            return (0..parents).try_fold(0u64, |acc, _| acc.checked_add(self.draw(rng)));
        }
        // multinomial split by successive conditional binomials
        let mut remaining = parents;
        let mut rest = 1.0;
        let mut total = 0u64;
        for (k, &p) in self.pmf.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let count = if k + 1 == self.pmf.len() || p >= rest {
                remaining
            } else if p <= 0.0 {
                0
            } else {
                Binomial::new(remaining, (p / rest).min(1.0))
                    .expect("probability in [0, 1]")
                    .sample(rng)
            };
            remaining -= count;
            rest -= p;
            total = total.checked_add((k as u64).checked_mul(count)?)?;
        }
        Some(total)
    }
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = SimError;

    fn try_from(pmf: Vec<f64>) -> Result<Self> {
        Self::from_pmf(pmf)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Vec<f64> {
        law.pmf
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GwError {
    #[error("population exceeded {cap} at generation {generation}")]
    Overflow {
        generation: usize,
        cap: u64,
        /// `Z(0), ..., Z(generation - 1)`.
        partial: Vec<u64>,
    },
    #[error("{needed} generations requested but only {given} laws given")]
    MissingLaws { needed: usize, given: usize },
}

/// `Z(0), ..., Z(generations)`, with generation `k` using `laws[k]`.
pub fn simulate_gw<R: Rng + ?Sized>(
    z0: u64,
    laws: &[OffspringLaw],
    generations: usize,
    cap: u64,
    rng: &mut R,
) -> std::result::Result<Vec<u64>, GwError> {
    if laws.len() < generations {
        return Err(GwError::MissingLaws {
            needed: generations,
            given: laws.len(),
        });
    }
    let mut traj = Vec::with_capacity(generations + 1);
    traj.push(z0);
    let mut z = z0;
    for (k, law) in laws[..generations].iter().enumerate() {
        z = match law.offspring(z, rng) {
            Some(next) if next <= cap => next,
            _ => {
                return Err(GwError::Overflow {
                    generation: k + 1,
                    cap,
                    partial: traj,
                })
            }
        };
        traj.push(z);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;

    #[test]
    fn deterministic_laws() {
        let mut rng = RngStream::new(1, 0);
        let two = OffspringLaw::deterministic(2);
        assert_eq!(simulate_gw(3, &[two.clone()], 1, DEFAULT_POPULATION_CAP, &mut rng).unwrap(), vec![3, 6]);
        let big = simulate_gw(10_000, &[two], 1, DEFAULT_POPULATION_CAP, &mut rng).unwrap();
        assert_eq!(big[1], 20_000);
        let zero = OffspringLaw::deterministic(0);
        for z0 in [1, 17, 1_000_000] {
            assert_eq!(simulate_gw(z0, &[zero.clone()], 1, DEFAULT_POPULATION_CAP, &mut rng).unwrap()[1], 0);
        }
    }

    #[test]
    fn overflow_keeps_the_partial_trajectory() {
        let mut rng = RngStream::new(2, 0);
        let laws = vec![OffspringLaw::deterministic(10); 5];
        match simulate_gw(5, &laws, 5, 1000, &mut rng) {
            Err(GwError::Overflow {
                generation,
                partial,
                ..
            }) => {
                assert_eq!(generation, 3);
                assert_eq!(partial, vec![5, 50, 500]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn laws_are_validated_and_truncated() {
        assert!(OffspringLaw::from_pmf(vec![0.5, 0.6]).is_err());
        assert!(OffspringLaw::from_pmf(vec![-0.1, 1.1]).is_err());
        let g = OffspringLaw::geometric(0.5, 40).unwrap();
        assert!((g.mean() - 1.0).abs() < 1e-9);
        let p = OffspringLaw::poisson(1.3, 30).unwrap();
        assert!((p.mean() - 1.3).abs() < 1e-12);
        assert!((p.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_one_law_is_mean_one() {
        let law = OffspringLaw::from_pmf(vec![0.5, 0.0, 0.5]).unwrap();
        let reps = 10_000;
        let ratios: Vec<f64> = (0..reps)
            .map(|i| {
                let mut rng = RngStream::new(3, i);
                let z = simulate_gw(10_000, std::slice::from_ref(&law), 1, DEFAULT_POPULATION_CAP, &mut rng)
                    .unwrap();
                z[1] as f64 / 10_000.0
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / reps as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
        // per-individual variance 1, so Var(Z1 / Z0) = 1e-4
        assert!((var - 1e-4).abs() < 1e-5);
    }

    #[test]
    fn small_and_large_regimes_agree_in_mean() {
        let law = OffspringLaw::poisson(1.2, 20).unwrap();
        let reps = 4000;
        let mut small = 0.0;
        let mut large = 0.0;
        for i in 0..reps {
            let mut rng = RngStream::new(4, i);
            small += simulate_gw(100, std::slice::from_ref(&law), 1, DEFAULT_POPULATION_CAP, &mut rng).unwrap()[1] as f64 / 100.0;
            large += simulate_gw(5000, std::slice::from_ref(&law), 1, DEFAULT_POPULATION_CAP, &mut rng).unwrap()[1] as f64 / 5000.0;
        }
        assert!((small / reps as f64 - law.mean()).abs() < 0.01);
        assert!((large / reps as f64 - law.mean()).abs() < 0.002);
    }
}
