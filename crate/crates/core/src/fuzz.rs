//! Random instance generators shared by the property tests, the fuzz harnesses
//! and the acceptance suite.

use rand::Rng;

use crate::metric::Metric;
use crate::modulus::{Sparsity, Subdivision};
use crate::path::{MonotoneControl, StepPath};
use crate::sim::{CatastropheSchedule, ModelParams, RngStream};
use crate::subdivision::construct_b;
use crate::verify::{
    check_lemma_decomposition, LbpwcModel, LemmaReport, PathModel, Result as VerifyResult,
};

/// A random step path on `[0, horizon]` with at most `max_jumps` jumps and
/// values in `[0, value_max]`.
///
/// Half of the paths draw jump times from a coarse grid and values from a small
/// set, which produces exact ties between gaps and `eta` multiples and repeated
/// values, the cases where an off-by-one in the sweep would show.
pub fn random_step_path<R: Rng + ?Sized>(
    rng: &mut R,
    max_jumps: usize,
    value_max: f64,
    horizon: f64,
) -> StepPath {
    let coarse = rng.random_bool(0.5);
    let count = rng.random_range(0..=max_jumps);
    let mut times: Vec<f64> = (0..count)
        .map(|_| {
            if coarse {
                rng.random_range(1..20) as f64 * horizon / 20.0
            } else {
                rng.random_range(0.0..horizon)
            }
        })
        .filter(|&t| t > 0.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut value = || {
        if coarse {
            rng.random_range(0..=6) as f64 * value_max / 6.0
        } else {
            rng.random_range(0.0..=value_max)
        }
    };
    let initial = value();
    let jumps = times.into_iter().map(|t| (t, value())).collect();
    StepPath::new(0.0, initial, jumps, horizon).expect("generated path is valid")
}

pub fn random_eta<R: Rng + ?Sized>(rng: &mut R, horizon: f64) -> f64 {
    if rng.random_bool(0.3) {
        rng.random_range(1..10) as f64 * horizon / 20.0
    } else {
        rng.random_range(0.005..0.6) * horizon
    }
}

pub fn random_metric<R: Rng + ?Sized>(rng: &mut R) -> Metric {
    Metric::ALL[rng.random_range(0..Metric::ALL.len())]
}

pub fn random_mode<R: Rng + ?Sized>(rng: &mut R) -> Sparsity {
    if rng.random_bool(0.5) {
        Sparsity::Eta
    } else {
        Sparsity::EtaBar
    }
}

/// A non-decreasing control on `[0, horizon]` with up to `max_atoms` atoms and
/// slope in `{0} ∪ [0, 2)`.
pub fn random_control<R: Rng + ?Sized>(
    rng: &mut R,
    max_atoms: usize,
    horizon: f64,
) -> MonotoneControl {
    let slope = if rng.random_bool(0.25) {
        0.0
    } else {
        rng.random_range(0.0..2.0)
    };
    let count = rng.random_range(0..=max_atoms);
    let mut times: Vec<f64> = (0..count)
        .map(|_| rng.random_range(0.0..horizon))
        .filter(|&t| t > 0.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let atoms = times
        .into_iter()
        .map(|t| {
            let size = if rng.random_bool(0.3) {
                rng.random_range(0.5..2.0)
            } else {
                rng.random_range(0.0..0.2)
            };
            (t, size)
        })
        .collect();
    MonotoneControl::new(slope, atoms, horizon).expect("generated control is valid")
}

/// A random catastrophe schedule on `[0, horizon]`: either accumulating at
/// the horizon or a few scattered atoms.
pub fn random_schedule<R: Rng + ?Sized>(rng: &mut R, horizon: f64) -> CatastropheSchedule {
    let theta = |rng: &mut R| rng.random_range(0.0..1.0);
    if rng.random_bool(0.5) {
        let ratio = [0.5, 0.7][rng.random_range(0..2)];
        let k_max = rng.random_range(0..=8);
        CatastropheSchedule::geometric(horizon, ratio, theta(rng), k_max).expect("valid ratio")
    } else {
        let count = rng.random_range(0..=4);
        let mut times: Vec<f64> = (0..count)
            .map(|_| rng.random_range(0.0..horizon))
            .filter(|&t| t > 0.0)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let atoms = times.into_iter().map(|t| (t, theta(rng))).collect();
        CatastropheSchedule::new(atoms).expect("sorted distinct times")
    }
}

/// A random small-`n` logistic branching process with catastrophes on `[0, 1]`.
pub fn random_lbpwc<R: Rng + ?Sized>(rng: &mut R) -> LbpwcModel {
    let params = ModelParams {
        lambda: rng.random_range(0.0..2.0),
        mu: rng.random_range(0.0..2.0),
        kappa: rng.random_range(0.0..1.0),
        gamma: rng.random_range(0.0..1.0),
        n: rng.random_range(5..=40),
        x0: rng.random_range(0.2..2.0),
        horizon: 1.0,
    };
    let schedule = random_schedule(rng, params.horizon);
    LbpwcModel::new(params, schedule).expect("generated model is valid")
}

/// One instance of the windowed-modulus decomposition: a simulated path, a
/// subdivision built from the model's control (sometimes with extra random
/// breakpoints), `epsilon` in `(0, 0.3]`, `eta` in `(0, eta0 / 2)` and `m` in `1..=6`.
pub fn lemma_case(rng: &mut RngStream) -> VerifyResult<LemmaReport> {
    let model = random_lbpwc(rng);
    let horizon = model.horizon();
    let path = model.path(rng)?;
    let mesh_eps = rng.random_range(0.3..1.0);
    let cert = construct_b(&model.control()?, horizon, mesh_eps)?;
    let mut breakpoints = cert.subdivision.breakpoints().to_vec();
    for _ in 0..rng.random_range(0..3) {
        breakpoints.push(rng.random_range(0.0..horizon));
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let eta0 = breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let bn = Subdivision::new(breakpoints, Sparsity::EtaBar, eta0 / 2.0)?;
    let epsilon = 0.3 * (1.0 - rng.random::<f64>());
    // strictly inside (0, eta0 / 2)
    let eta = (eta0 / 2.0 * rng.random_range(0.001..1.0)).min((eta0 / 2.0).next_down());
    let m = rng.random_range(1..=6);
    check_lemma_decomposition(&path, &bn, epsilon, eta, m, random_metric(rng))
}
