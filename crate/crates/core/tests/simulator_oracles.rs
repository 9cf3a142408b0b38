//! Mean oracles for the simulators at modest scale.

use tightkit_core::sim::{
    run_replicas, simulate_gw, simulate_lbpwc_into, simulate_limit_diffusion_into, CatastropheSchedule,
    ModelParams, NoRecord, OffspringLaw, DEFAULT_POPULATION_CAP,
};
use tightkit_core::verify::MCEstimate;

fn linear(n: u32, gamma: f64) -> ModelParams {
    ModelParams {
        lambda: 1.0,
        mu: 0.0,
        kappa: 0.0,
        gamma,
        n,
        x0: 1.0,
        horizon: 1.0,
    }
}

fn mean_at_horizon(p: &ModelParams, s: &CatastropheSchedule, reps: usize, seed: u64) -> MCEstimate {
    let xs = run_replicas(seed, reps, |_, rng| {
        simulate_lbpwc_into(p, s, 0.0, p.x0, p.horizon, rng, &mut NoRecord)
            .unwrap()
            .final_value
    });
    MCEstimate::from_samples(xs, seed).unwrap()
}

#[test]
fn linear_mean_is_exponential() {
    let e = std::f64::consts::E;
    for gamma in [0.0, 1.0] {
        let est = mean_at_horizon(&linear(20, gamma), &CatastropheSchedule::empty(), 20_000, 11);
        assert!((est.mean - e).abs() < 3.0 * est.std_error(), "gamma {gamma}: {est:?}");
    }
}

#[test]
fn catastrophes_scale_the_mean() {
    let s = CatastropheSchedule::new(vec![(0.5, 0.5), (0.75, 0.5)]).unwrap();
    let target = std::f64::consts::E * s.survival_factor(1.0);
    let est = mean_at_horizon(&linear(20, 1.0), &s, 20_000, 12);
    assert!((est.mean - target).abs() < 3.0 * est.std_error(), "{est:?}");
}

#[test]
fn diffusion_mean_is_exponential() {
    let p = linear(1, 1.0).diffusion();
    let s = CatastropheSchedule::new(vec![(0.5, 0.5)]).unwrap();
    let xs = run_replicas(13, 20_000, |_, rng| {
        simulate_limit_diffusion_into(&p, &s, 1.0 / 512.0, 0.0, 1.0, 1.0, rng, &mut NoRecord).unwrap()
    });
    let est = MCEstimate::from_samples(xs, 13).unwrap();
    let target = std::f64::consts::E * 0.5;
    // Euler bias is O(dt), well inside the interval here
    assert!((est.mean - target).abs() < 3.0 * est.std_error() + 5e-3, "{est:?}");
}

#[test]
fn gw_mean_is_product_of_offspring_means() {
    let laws = vec![
        OffspringLaw::poisson(1.5, 30).unwrap(),
        OffspringLaw::geometric(0.6, 40).unwrap(),
        OffspringLaw::from_pmf(vec![0.2, 0.3, 0.5]).unwrap(),
    ];
    let target: f64 = 50.0 * laws.iter().map(OffspringLaw::mean).product::<f64>();
    let zs = run_replicas(14, 20_000, |_, rng| {
        simulate_gw(50, &laws, 3, DEFAULT_POPULATION_CAP, rng).unwrap()[3] as f64
    });
    let est = MCEstimate::from_samples(zs, 14).unwrap();
    assert!((est.mean - target).abs() < 3.0 * est.std_error(), "{est:?} vs {target}");
}

#[test]
fn replicas_are_reproducible() {
    let p = linear(30, 1.0);
    let s = CatastropheSchedule::geometric(1.0, 0.5, 0.9, 10).unwrap();
    let a = mean_at_horizon(&p, &s, 500, 15);
    let b = mean_at_horizon(&p, &s, 500, 15);
    assert_eq!(a, b);
    let c = mean_at_horizon(&p, &s, 500, 16);
    assert_ne!(a.mean, c.mean);
}
