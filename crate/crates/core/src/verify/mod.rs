//! Monte Carlo checks of compact containment (A1), conditional oscillation
//! bounds (A2, A2'), the stopping-time decomposition of a windowed modulus,
//! tightness curves, the M-proxy and the distance to the diffusion limit.

mod checks;
mod limit;
mod stopping;

pub use checks::{
    check_a1, check_a2, m_proxy, tightness_curve, A1Report, A1Row, A1Verdict, A2Report, A2Row,
    MProxyConfig, MProxyReport, TightnessCell, TightnessReport,
};
pub use limit::{ks_statistic, limit_comparison, terminal_samples, LimitReport, LimitRow};
pub use stopping::{
    check_lemma_decomposition, compute_stopping_times, LemmaReport, StoppingTimeTrace, WindowCheck,
};

use serde::Serialize;

use crate::modulus::ModulusError;
use crate::path::{MonotoneControl, PathError, StepPath};
use crate::sim::{
    build_fn, simulate_lbpwc_into, simulate_limit_diffusion_into, CatastropheSchedule,
    DiffusionParams, ModelParams, PathRecorder, PathSink, RngStream, SimError,
};
use crate::subdivision::SubdivisionError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{given} replicas requested; at least {min} are needed for a meaningful interval")]
    TooFewReplicas { given: usize, min: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error(transparent)]
    Subdivision(#[from] SubdivisionError),
    #[error(transparent)]
    Path(#[from] PathError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

/// Two-sided normal quantile for 99% intervals.
pub const Z99: f64 = 2.576;

/// Fewest replicas the Monte Carlo checks accept.
pub const MIN_REPLICAS: usize = 100;

fn require_replicas(replicas: usize) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(VerifyError::TooFewReplicas {
            given: replicas,
            min: MIN_REPLICAS,
        });
    }
    Ok(())
}

/// Sample mean with a 99% normal interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

impl MCEstimate {
    /// Sorts the samples first so the result does not depend on their order.
    pub fn from_samples(mut samples: Vec<f64>, seed: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(VerifyError::Domain(format!(
                "an estimate needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        samples.sort_by(f64::total_cmp);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let count = samples.len();
        let variance = m2 / (count - 1) as f64;
        Ok(MCEstimate {
            count,
            mean,
            variance,
            ci_halfwidth: Z99 * (variance / count as f64).sqrt(),
            seed,
        })
    }

    pub fn from_indicators(hits: impl IntoIterator<Item = bool>, seed: u64) -> Result<Self> {
        Self::from_samples(hits.into_iter().map(|h| h as u8 as f64).collect(), seed)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    /// Half-width for the difference of two independent estimates.
    pub fn pooled_ci(&self, other: &MCEstimate) -> f64 {
        self.ci_halfwidth.hypot(other.ci_halfwidth)
    }
}

/// A process that can be simulated from any `(time, state)` up to any time,
/// with the control bounding its conditional oscillations.
pub trait PathModel: Sync {
    fn horizon(&self) -> f64;
    fn x0(&self) -> f64;
    /// The scaling index `n`, if the model has one.
    fn scale(&self) -> Option<u32>;
    fn control(&self) -> Result<MonotoneControl>;
    /// Runs on `[start, end]` from `X(start) = x`; returns `X(end)`.
    fn run<S: PathSink>(
        &self,
        start: f64,
        x: f64,
        end: f64,
        rng: &mut RngStream,
        sink: &mut S,
    ) -> Result<f64>;

    fn path(&self, rng: &mut RngStream) -> Result<StepPath> {
        let mut rec = PathRecorder::default();
        self.run(0.0, self.x0(), self.horizon(), rng, &mut rec)?;
        Ok(rec.finish(self.horizon())?)
    }
}

/// The logistic branching process with catastrophes at one scale `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbpwcModel {
    pub params: ModelParams,
    pub schedule: CatastropheSchedule,
}

impl LbpwcModel {
    pub fn new(params: ModelParams, schedule: CatastropheSchedule) -> Result<Self> {
        params.validate()?;
        build_fn(&schedule, params.horizon)?;
        Ok(LbpwcModel { params, schedule })
    }

    pub fn at_scale(&self, n: u32) -> Result<Self> {
        Self::new(self.params.with_n(n), self.schedule.clone())
    }
}

impl PathModel for LbpwcModel {
    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn x0(&self) -> f64 {
        self.params.x0
    }

    fn scale(&self) -> Option<u32> {
        Some(self.params.n)
    }

    fn control(&self) -> Result<MonotoneControl> {
        Ok(build_fn(&self.schedule, self.params.horizon)?)
    }

    fn run<S: PathSink>(
        &self,
        start: f64,
        x: f64,
        end: f64,
        rng: &mut RngStream,
        sink: &mut S,
    ) -> Result<f64> {
        Ok(simulate_lbpwc_into(&self.params, &self.schedule, start, x, end, rng, sink)?.final_value)
    }
}

/// The diffusion limit, discretized with step `dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionModel {
    pub params: DiffusionParams,
    pub schedule: CatastropheSchedule,
    pub dt: f64,
}

impl PathModel for DiffusionModel {
    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn x0(&self) -> f64 {
        self.params.x0
    }

    fn scale(&self) -> Option<u32> {
        None
    }

    fn control(&self) -> Result<MonotoneControl> {
        Ok(build_fn(&self.schedule, self.params.horizon)?)
    }

    fn run<S: PathSink>(
        &self,
        start: f64,
        x: f64,
        end: f64,
        rng: &mut RngStream,
        sink: &mut S,
    ) -> Result<f64> {
        Ok(simulate_limit_diffusion_into(
            &self.params,
            &self.schedule,
            self.dt,
            start,
            x,
            end,
            rng,
            sink,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_samples_is_exact() {
        let e = MCEstimate::from_samples(vec![0.25; 1000], 3).unwrap();
        assert_eq!(e.mean, 0.25);
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.ci_halfwidth, 0.0);
        assert_eq!(e.seed, 3);
        assert!(MCEstimate::from_samples(vec![1.0], 0).is_err());
    }

    #[test]
    fn estimate_is_order_insensitive() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 3.0).collect();
        let mut rev = xs.clone();
        rev.reverse();
        let a = MCEstimate::from_samples(xs, 0).unwrap();
        let b = MCEstimate::from_samples(rev, 0).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - 999.0 / 6.0).abs() < 1e-9);
        assert_eq!(a.ci_halfwidth, Z99 * (a.variance / 1000.0).sqrt());
    }

    #[test]
    fn indicators() {
        let e = MCEstimate::from_indicators([true, false, true, true], 0).unwrap();
        assert_eq!(e.mean, 0.75);
        assert!((e.variance - 0.25).abs() < 1e-15);
    }
}
