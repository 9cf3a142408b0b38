//! Simulators for the logistic branching process with catastrophes, its
//! diffusion limit, and Galton–Watson processes in varying environment.
//!
//! All randomness comes from [`RngStream`]s derived from a master seed and a
//! replica index, so results do not depend on thread scheduling.

mod diffusion;
mod gw;
mod lbpwc;

pub use diffusion::{simulate_limit_diffusion, simulate_limit_diffusion_into, DiffusionParams};
pub use gw::{simulate_gw, GwError, OffspringLaw, DEFAULT_POPULATION_CAP};
pub use lbpwc::{
    simulate_lbpwc, simulate_lbpwc_into, LbpwcPath, NoRecord, Outcome, PathRecorder, PathSink,
    RunningMax,
};

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::path::{MonotoneControl, PathError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Path(#[from] PathError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Parameters of the rescaled logistic branching process `X = Z / n`.
///
/// At state `z` births occur at rate `b z` and deaths at rate `(d + c z) z`,
/// with `b = λ + nγ`, `d = μ + nγ`, `c = κ / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n: u32,
    pub x0: f64,
    pub horizon: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.mu, self.kappa, self.gamma, self.x0, self.horizon];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Params("all parameters must be finite".into()));
        }
        if self.n == 0 {
            return Err(SimError::Params("n must be at least 1".into()));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(SimError::Params(format!(
                "kappa and gamma must be >= 0, got {} and {}",
                self.kappa, self.gamma
            )));
        }
        if self.x0 < 0.0 {
            return Err(SimError::Params(format!("x0 must be >= 0, got {}", self.x0)));
        }
        if !(self.horizon > 0.0) {
            return Err(SimError::Params(format!("horizon must be > 0, got {}", self.horizon)));
        }
        let (b, d, _) = self.rates();
        if b < 0.0 || d < 0.0 {
            return Err(SimError::Params(format!(
                "birth and death coefficients must be >= 0, got b = {b}, d = {d}"
            )));
        }
        Ok(())
    }

    /// `(b, d, c)`.
    pub fn rates(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        (
            self.lambda + n * self.gamma,
            self.mu + n * self.gamma,
            self.kappa / n,
        )
    }

    pub fn with_n(self, n: u32) -> Self {
        ModelParams { n, ..self }
    }

    /// The diffusion `X^n` converges to. Its generator has second-order term
    /// `(b + d) x / (2n) f'' -> γ x f''`, so the noise is `sqrt(2γX) dB`, which is
    /// coefficient `2γ` in the parametrization of [`DiffusionParams`].
    pub fn diffusion(&self) -> DiffusionParams {
        DiffusionParams {
            lambda: self.lambda,
            mu: self.mu,
            kappa: self.kappa,
            gamma: 2.0 * self.gamma,
            x0: self.x0,
            horizon: self.horizon,
        }
    }
}

/// Deterministic catastrophes `(t_i, θ_i)`: at `t_i` the state is multiplied by `θ_i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CatastropheSchedule {
    atoms: Vec<(f64, f64)>,
}

impl CatastropheSchedule {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(t, theta)) in atoms.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(SimError::Schedule(format!("time {t} must be positive and finite")));
            }
            if !(0.0..=1.0).contains(&theta) {
                return Err(SimError::Schedule(format!("theta {theta} at {t} outside [0, 1]")));
            }
            if i > 0 && atoms[i - 1].0 >= t {
                return Err(SimError::Schedule(format!(
                    "times must increase strictly ({} then {t})",
                    atoms[i - 1].0
                )));
            }
        }
        Ok(CatastropheSchedule { atoms })
    }

    pub fn empty() -> Self {
        CatastropheSchedule::default()
    }

    /// Atoms at `t_k = horizon (1 - r^k)` for `k = 1..=k_max`, all with the same `theta`.
    pub fn geometric(horizon: f64, ratio: f64, theta: f64, k_max: u32) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(SimError::Schedule(format!("ratio {ratio} outside (0, 1)")));
        }
        let atoms = (1..=k_max)
            .map(|k| (horizon * (1.0 - ratio.powi(k as i32)), theta))
            .collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.0)
    }

    /// Smallest gap between consecutive catastrophe times.
    pub fn min_gap(&self) -> f64 {
        self.atoms
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Product of the `θ_i` with `t_i <= t`.
    pub fn survival_factor(&self, t: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 <= t).map(|a| a.1).product()
    }

    fn check_within(&self, horizon: f64) -> Result<()> {
        match self.last_time() {
            Some(t) if t > horizon => Err(SimError::Schedule(format!(
                "catastrophe at {t} after the horizon {horizon}"
            ))),
            _ => Ok(()),
        }
    }
}

/// The control `F(t) = t + sum_{t_i <= t} (1 - θ_i)` on `[0, horizon]`.
pub fn build_fn(schedule: &CatastropheSchedule, horizon: f64) -> Result<MonotoneControl> {
    schedule.check_within(horizon)?;
    let atoms = schedule
        .atoms()
        .iter()
        .filter(|a| a.1 < 1.0)
        .map(|&(t, theta)| (t, 1.0 - theta))
        .collect();
    Ok(MonotoneControl::new(1.0, atoms, horizon)?)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Random stream of one replica, a pure function of `(master, index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master: u64,
    index: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(master: u64, index: u64) -> Self {
        let seed = splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngStream {
            master,
            index,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Seed for a sub-experiment, so that different checks sharing a master
    /// seed draw from unrelated streams.
    pub fn derive_seed(master: u64, label: &str) -> u64 {
        label
            .bytes()
            .fold(splitmix64(master), |acc, b| splitmix64(acc ^ b as u64))
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Runs `count` replicas in parallel; result `i` used stream `(master, i)`.
pub fn run_replicas<T, F>(master: u64, count: usize, replica: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> T + Sync,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| replica(i, &mut RngStream::new(master, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rates_follow_the_scaling() {
        let p = ModelParams {
            lambda: 1.0,
            mu: 0.5,
            kappa: 2.0,
            gamma: 0.25,
            n: 100,
            x0: 1.0,
            horizon: 1.0,
        };
        assert_eq!(p.rates(), (26.0, 25.5, 0.02));
        p.validate().unwrap();
        let bad = ModelParams { lambda: -30.0, ..p };
        assert!(bad.validate().is_err());
        assert!(ModelParams { n: 0, ..p }.validate().is_err());
        assert_eq!(p.diffusion().gamma, 0.5);
    }

    #[test]
    fn geometric_schedule() {
        let s = CatastropheSchedule::geometric(1.0, 0.5, 0.9, 10).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.atoms()[0], (0.5, 0.9));
        assert_eq!(s.atoms()[1], (0.75, 0.9));
        assert_eq!(s.atoms()[2], (0.875, 0.9));
        assert!(CatastropheSchedule::new(vec![(0.5, 1.5)]).is_err());
        assert!(CatastropheSchedule::new(vec![(0.5, 0.5), (0.5, 0.5)]).is_err());
    }

    #[test]
    fn control_from_schedule() {
        let f = build_fn(&CatastropheSchedule::empty(), 1.0).unwrap();
        assert_eq!(f.eval(0.3).unwrap(), 0.3);
        let s = CatastropheSchedule::new(vec![(0.5, 0.5), (0.75, 0.5), (0.875, 0.5)]).unwrap();
        assert_eq!(build_fn(&s, 1.0).unwrap().eval(0.9).unwrap(), 2.4);
        let s = CatastropheSchedule::new(vec![(0.5, 1.0)]).unwrap();
        assert_eq!(build_fn(&s, 1.0).unwrap().eval(0.9).unwrap(), 0.9);
        let late = CatastropheSchedule::new(vec![(1.5, 0.5)]).unwrap();
        assert!(build_fn(&late, 1.0).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 3).random()).collect();
        let mut s = RngStream::new(7, 3);
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut t = RngStream::new(7, 4);
        assert_ne!(b[0], t.random::<u64>());

        let seq = run_replicas(11, 64, |_, rng| rng.random::<u64>());
        let again = run_replicas(11, 64, |_, rng| rng.random::<u64>());
        assert_eq!(seq, again);
        assert_eq!(seq[5], RngStream::new(11, 5).random::<u64>());
    }
}
