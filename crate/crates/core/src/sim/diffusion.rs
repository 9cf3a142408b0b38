//! Full-truncation Euler scheme for the logistic Feller diffusion with catastrophes,
//! `dX = (λ - μ - κX) X dt + sqrt(γ X) dB`, with `X <- θ X` at each catastrophe.
//!
//! The grid is `k * dt` from time zero; catastrophe times are inserted into it
//! and applied exactly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lbpwc::{PathRecorder, PathSink};
use super::{CatastropheSchedule, Result, SimError};
use crate::path::StepPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub x0: f64,
    pub horizon: f64,
}

/// Simulates on `[0, T]` and records the values at grid and catastrophe times
/// (unchanged values are not repeated).
pub fn simulate_limit_diffusion<R: Rng + ?Sized>(
    params: &DiffusionParams,
    schedule: &CatastropheSchedule,
    dt: f64,
    rng: &mut R,
) -> Result<StepPath> {
    let mut rec = PathRecorder::default();
    simulate_limit_diffusion_into(params, schedule, dt, 0.0, params.x0, params.horizon, rng, &mut rec)?;
    rec.finish(params.horizon)
}

/// Simulates on `[start, end]` from `X(start) = x_start`, streaming into
/// `sink`; returns `X(end)`. Catastrophes at times `<= start` are skipped.
#[allow(clippy::too_many_arguments)]
pub fn simulate_limit_diffusion_into<R: Rng + ?Sized, S: PathSink>(
    params: &DiffusionParams,
    schedule: &CatastropheSchedule,
    dt: f64,
    start: f64,
    x_start: f64,
    end: f64,
    rng: &mut R,
    sink: &mut S,
) -> Result<f64> {
    let DiffusionParams {
        lambda,
        mu,
        kappa,
        gamma,
        x0,
        horizon,
    } = *params;
    if [lambda, mu, kappa, gamma, x0, horizon].iter().any(|v| !v.is_finite())
        || kappa < 0.0
        || gamma < 0.0
        || x0 < 0.0
        || !(horizon > 0.0)
    {
        return Err(SimError::Params(format!("invalid diffusion parameters {params:?}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::Params(format!("dt must be positive, got {dt}")));
    }
    schedule.check_within(horizon)?;
    if !(0.0 <= start && start <= end && end <= horizon) || !(x_start >= 0.0) {
        return Err(SimError::Params(format!(
            "restart at {start} with state {x_start} and end {end} outside [0, {horizon}]"
        )));
    }
    if dt >= schedule.min_gap() {
        return Err(SimError::Schedule(format!(
            "dt = {dt} is not below the smallest gap {} between catastrophes",
            schedule.min_gap()
        )));
    }

    let growth = lambda - mu;
    let mut x = x_start;
    let mut t = start;
    let mut k = (start / dt).floor() as u64 + 1;
    let atoms = schedule.atoms();
    let first = atoms.partition_point(|a| a.0 <= start);
    let last = atoms.partition_point(|a| a.0 <= end);
    let mut cats = atoms[first..last].iter().peekable();
    sink.start(t, x);
    while t < end {
        let grid = (k as f64 * dt).min(end);
        let cat = cats.peek().map(|a| a.0);
        let next = cat.map_or(grid, |c| c.min(grid));
        let h = next - t;
        let before = x;
        if h > 0.0 && x > 0.0 {
            let drift = (growth - kappa * x) * x;
            x += drift * h;
            if gamma > 0.0 {
                let normal: f64 = rng.sample(StandardNormal);
                x += (gamma * before * h).sqrt() * normal;
            }
            x = x.max(0.0);
        }
        if cat == Some(next) {
            x *= cats.next().unwrap().1;
        }
        if next == grid {
            k += 1;
        }
        t = next;
        if x != before {
            sink.jump(t, x);
        }
    }
    Ok(x)
}
