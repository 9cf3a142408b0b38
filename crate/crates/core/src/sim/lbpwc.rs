//! Exact simulation of the logistic branching process with catastrophes.
//!
//! Between catastrophes the total jump rate only changes at jumps, so the
//! next event time is a single exponential draw with the current total rate
//! and its type is chosen proportionally to the rates. An event drawn at or
//! after the next catastrophe is discarded: by memorylessness, redrawing from
//! the catastrophe time is exact. At a catastrophe `(t, θ)` the state becomes
//! `θ` times its left limit, so `Z` may leave the integers; rates are evaluated
//! at the real state. A state below zero has negative rates, which the
//! dynamics read as no event, so it is absorbing.

use rand::Rng;
use rand_distr::Exp1;

use super::{CatastropheSchedule, ModelParams, Result, SimError};
use crate::path::{StepPath, StepPathBuilder};

/// Receives the trajectory of `X = Z / n` as it is generated.
pub trait PathSink {
    fn start(&mut self, t: f64, x: f64);
    fn jump(&mut self, t: f64, x: f64);
}

/// Discards the trajectory; the final value is in [`Outcome`].
#[derive(Debug, Default, Clone, Copy)]
pub struct NoRecord;

impl PathSink for NoRecord {
    #[inline]
    fn start(&mut self, _: f64, _: f64) {}
    #[inline]
    fn jump(&mut self, _: f64, _: f64) {}
}

/// Keeps `sup_t X(t)`.
#[derive(Debug, Clone, Copy)]
pub struct RunningMax(pub f64);

impl Default for RunningMax {
    fn default() -> Self {
        RunningMax(f64::NEG_INFINITY)
    }
}

impl PathSink for RunningMax {
    #[inline]
    fn start(&mut self, _: f64, x: f64) {
        self.0 = x;
    }
    #[inline]
    fn jump(&mut self, _: f64, x: f64) {
        self.0 = self.0.max(x);
    }
}

/// Records the full step path.
#[derive(Debug, Clone, Default)]
pub struct PathRecorder(Option<StepPathBuilder>);

impl PathRecorder {
    pub fn finish(self, horizon: f64) -> Result<StepPath> {
        let builder = self
            .0
            .ok_or_else(|| SimError::Params("recorder never started".into()))?;
        Ok(builder.finish(horizon)?)
    }
}

impl PathSink for PathRecorder {
    fn start(&mut self, t: f64, x: f64) {
        self.0 = Some(StepPathBuilder::new(t, x));
    }
    #[inline]
    fn jump(&mut self, t: f64, x: f64) {
        if let Some(b) = self.0.as_mut() {
            b.push(t, x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub final_value: f64,
    /// First time the state went below zero, if it did.
    pub absorbed_at: Option<f64>,
    /// Number of birth and death events.
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbpwcPath {
    pub path: StepPath,
    pub absorbed_at: Option<f64>,
    pub events: u64,
}

/// Simulates `X` on `[0, T]` from `x0` and records the path.
pub fn simulate_lbpwc<R: Rng + ?Sized>(
    params: &ModelParams,
    schedule: &CatastropheSchedule,
    rng: &mut R,
) -> Result<LbpwcPath> {
    let mut rec = PathRecorder::default();
    let out = simulate_lbpwc_into(params, schedule, 0.0, params.x0, params.horizon, rng, &mut rec)?;
    Ok(LbpwcPath {
        path: rec.finish(params.horizon)?,
        absorbed_at: out.absorbed_at,
        events: out.events,
    })
}

/// Simulates `X` on `[start, end]` given `X(start) = x_start`. Catastrophes at
/// times `<= start` are taken to have happened already.
pub fn simulate_lbpwc_into<R: Rng + ?Sized, S: PathSink>(
    params: &ModelParams,
    schedule: &CatastropheSchedule,
    start: f64,
    x_start: f64,
    end: f64,
    rng: &mut R,
    sink: &mut S,
) -> Result<Outcome> {
    params.validate()?;
    let horizon = params.horizon;
    if !(0.0 <= start && start <= end && end <= horizon) || !x_start.is_finite() {
        return Err(SimError::Params(format!(
            "restart at {start} with state {x_start} and end {end} outside [0, {horizon}]"
        )));
    }
    schedule.check_within(horizon)?;

    let n = params.n as f64;
    let inv_n = 1.0 / n;
    let (b, d, c) = params.rates();
    let mut t = start;
    let mut x = x_start;
    let mut z = x_start * n;
    let mut events = 0u64;
    let mut absorbed_at = (z < 0.0).then_some(start);
    sink.start(t, x);

    let atoms = schedule.atoms();
    let first = atoms.partition_point(|a| a.0 <= start);
    let last = atoms.partition_point(|a| a.0 <= end);
    let stops = atoms[first..last]
        .iter()
        .map(|&(s, theta)| (s, Some(theta)))
        .chain(std::iter::once((end, None)));
    for (stop, theta) in stops {
        loop {
            // per-capita rate; birth with probability b / per_capita
            let per_capita = b + d + c * z;
            let total = per_capita * z;
            if !(total > 0.0) {
                break;
            }
            let wait: f64 = rng.sample(Exp1);
            let next = t + wait / total;
            if next >= stop {
                break;
            }
            t = next;
            let u: f64 = rng.random();
            z += if u * per_capita < b { 1.0 } else { -1.0 };
            x = z * inv_n;
            events += 1;
            sink.jump(t, x);
            if z < 0.0 {
                absorbed_at = Some(t);
                break;
            }
        }
        t = stop;
        if let Some(theta) = theta {
            let scaled = theta * x;
            if scaled != x {
                x = scaled;
                z *= theta;
                sink.jump(t, x);
            }
        }
    }
    Ok(Outcome {
        final_value: x,
        absorbed_at,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;

    fn params(n: u32) -> ModelParams {
        ModelParams {
            lambda: 0.0,
            mu: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            n,
            x0: 1.0,
            horizon: 2.0,
        }
    }

    #[test]
    fn zero_rates_give_a_constant_path() {
        let mut rng = RngStream::new(1, 0);
        let r = simulate_lbpwc(&params(10), &CatastropheSchedule::empty(), &mut rng).unwrap();
        assert_eq!(r.path.jump_count(), 0);
        assert_eq!(r.path.final_value(), 1.0);
        assert_eq!(r.events, 0);
    }

    #[test]
    fn catastrophe_multiplies_the_state() {
        let n = 100;
        let p = ModelParams { x0: 100.0 / n as f64, ..params(n) };
        let s = CatastropheSchedule::new(vec![(1.0, 0.4)]).unwrap();
        let r = simulate_lbpwc(&p, &s, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(r.path.times(), &[1.0]);
        assert_eq!(r.path.values(), &[0.4 * p.x0]);
        assert!((r.path.final_value() - 40.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn jumps_are_plus_minus_one_over_n() {
        let p = ModelParams {
            lambda: 2.0,
            mu: 1.0,
            kappa: 1.0,
            gamma: 0.5,
            ..params(50)
        };
        let s = CatastropheSchedule::new(vec![(0.5, 0.3), (1.5, 0.7)]).unwrap();
        let r = simulate_lbpwc(&p, &s, &mut RngStream::new(2, 0)).unwrap();
        assert!(r.events > 100);
        let mut prev = r.path.initial_value();
        for (t, v) in r.path.jumps() {
            match s.atoms().iter().find(|a| a.0 == t) {
                Some(&(_, theta)) => assert_eq!(v, theta * prev),
                None => assert!(((v - prev).abs() - 1.0 / 50.0).abs() < 1e-12),
            }
            prev = v;
        }
    }

    #[test]
    fn negative_state_is_absorbing() {
        let p = ModelParams {
            mu: 5.0,
            x0: 0.5 / 10.0,
            ..params(10)
        };
        let r = simulate_lbpwc(&p, &CatastropheSchedule::empty(), &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(r.path.jump_count(), 1);
        assert_eq!(r.path.final_value(), -0.05);
        assert_eq!(r.absorbed_at, Some(r.path.times()[0]));
    }

    #[test]
    fn restart_skips_past_catastrophes() {
        let s = CatastropheSchedule::new(vec![(0.5, 0.5), (1.5, 0.5)]).unwrap();
        let mut rec = PathRecorder::default();
        let out =
            simulate_lbpwc_into(&params(10), &s, 0.5, 2.0, 2.0, &mut RngStream::new(4, 0), &mut rec)
                .unwrap();
        assert_eq!(out.final_value, 1.0);
        let path = rec.finish(2.0).unwrap();
        assert_eq!(path.t0(), 0.5);
        assert_eq!(path.times(), &[1.5]);
    }

    #[test]
    fn same_stream_same_path() {
        let p = ModelParams {
            lambda: 1.0,
            gamma: 1.0,
            ..params(20)
        };
        let s = CatastropheSchedule::geometric(2.0, 0.5, 0.9, 6).unwrap();
        let a = simulate_lbpwc(&p, &s, &mut RngStream::new(5, 9)).unwrap();
        let b = simulate_lbpwc(&p, &s, &mut RngStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
        let mut max = RunningMax::default();
        let out =
            simulate_lbpwc_into(&p, &s, 0.0, p.x0, 2.0, &mut RngStream::new(5, 9), &mut max).unwrap();
        assert_eq!(out.final_value, a.path.final_value());
        assert_eq!(max.0, a.path.values().iter().fold(p.x0, |m, &v| m.max(v)));

        let mut rec = PathRecorder::default();
        let out =
            simulate_lbpwc_into(&p, &s, 0.0, p.x0, 1.2, &mut RngStream::new(5, 9), &mut rec).unwrap();
        let short = rec.finish(1.2).unwrap();
        assert_eq!(out.final_value, a.path.eval(1.2).unwrap());
        assert_eq!(short, a.path.restrict(1.2).unwrap());
    }
}
