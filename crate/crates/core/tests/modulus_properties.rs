use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use tightkit_core::fuzz::{random_eta, random_metric, random_mode, random_step_path};
use tightkit_core::modulus::{
    glued_bound, min_after, modulus, modulus_at_least, modulus_oracle, oscillation, ModulusError,
};
use tightkit_core::{Metric, Sparsity, StepPath, Subdivision};

fn path_strategy() -> impl Strategy<Value = StepPath> {
    any::<u64>().prop_map(|seed| {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        random_step_path(&mut rng, 8, 3.0, 1.0)
    })
}

#[test]
fn fast_modulus_matches_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5eed);
    let mut checked = 0;
    for _ in 0..2000 {
        let path = random_step_path(&mut rng, 8, 3.0, 1.0);
        let eta = random_eta(&mut rng, 1.0);
        let (a, b) = if rng.random_bool(0.7) {
            (0.0, 1.0)
        } else {
            let a = rng.random_range(0.0..0.5);
            (a, rng.random_range(a + 0.05..=1.0))
        };
        for metric in Metric::ALL {
            for mode in [Sparsity::Eta, Sparsity::EtaBar] {
                let fast = modulus(&path, eta, a, b, metric, mode);
                let slow = modulus_oracle(&path, eta, a, b, metric, mode);
                match (fast, slow) {
                    (Ok(fast), Ok(slow)) => {
                        assert_eq!(fast.value, slow, "{path:?} eta={eta} [{a},{b}] {metric} {mode}");
                        assert!(fast.witness.is_sparse());
                        assert_eq!(fast.witness.cost(&path, metric).unwrap(), fast.value);
                        checked += 1;
                    }
                    (Err(ModulusError::Infeasible { .. }), Err(ModulusError::Infeasible { .. })) => {}
                    (f, s) => panic!("disagreement: {f:?} vs {s:?}"),
                }
            }
        }
    }
    assert!(checked > 6000);
}

/// The oracle's finite grid is claimed sufficient; random admissible
/// subdivisions with arbitrary real breakpoints must never beat it.
#[test]
fn random_subdivisions_never_beat_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for _ in 0..300 {
        let path = random_step_path(&mut rng, 6, 3.0, 1.0);
        let eta = random_eta(&mut rng, 1.0);
        let mode = random_mode(&mut rng);
        let metric = random_metric(&mut rng);
        let Ok(best) = modulus_oracle(&path, eta, 0.0, 1.0, metric, mode) else {
            continue;
        };
        for _ in 0..200 {
            let mut bps = vec![0.0];
            loop {
                let last = *bps.last().unwrap();
                let next = if rng.random_bool(0.5) {
                    min_after(last, eta) + rng.random_range(0.0..0.05)
                } else {
                    rng.random_range(last..1.0 + eta)
                };
                if next >= 1.0 || rng.random_bool(0.2) {
                    break;
                }
                bps.push(next);
            }
            bps.push(1.0);
            bps.dedup();
            let Ok(sub) = Subdivision::new(bps, mode, eta) else {
                continue;
            };
            if sub.is_sparse() {
                assert!(sub.cost(&path, metric).unwrap() >= best);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn monotone_in_eta(path in path_strategy(), e1 in 0.01f64..0.5, e2 in 0.01f64..0.5) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        for metric in Metric::ALL {
            let w_lo = modulus(&path, lo, 0.0, 1.0, metric, Sparsity::Eta).unwrap().value;
            let w_hi = modulus(&path, hi, 0.0, 1.0, metric, Sparsity::Eta).unwrap().value;
            prop_assert!(w_lo <= w_hi);
        }
    }

    #[test]
    fn eta_bar_dominates_eta(path in path_strategy(), eta in 0.01f64..0.9) {
        let metric = Metric::BoundedEuclidean;
        let w = modulus(&path, eta, 0.0, 1.0, metric, Sparsity::Eta).unwrap().value;
        let wb = modulus(&path, eta, 0.0, 1.0, metric, Sparsity::EtaBar).unwrap().value;
        prop_assert!(wb >= w);
        prop_assert!(wb <= 1.0);
        // with a tiny eta every jump can be isolated, down to the floor
        let floor = modulus(&path, 1e-9, 0.0, 1.0, metric, Sparsity::Eta).unwrap().value;
        prop_assert!(w >= floor);
    }

    #[test]
    fn witness_realizes_value(path in path_strategy(), eta in 0.01f64..0.5, metric_ix in 0usize..3) {
        let metric = Metric::ALL[metric_ix];
        for mode in [Sparsity::Eta, Sparsity::EtaBar] {
            let r = modulus(&path, eta, 0.0, 1.0, metric, mode).unwrap();
            prop_assert!(r.witness.is_sparse());
            prop_assert_eq!(r.witness.start(), 0.0);
            prop_assert_eq!(r.witness.end(), 1.0);
            let mut worst = 0.0f64;
            for (a, b) in r.witness.cells() {
                worst = worst.max(oscillation(&path, a, b, metric).unwrap());
            }
            prop_assert_eq!(worst, r.value);
        }
    }

    #[test]
    fn threshold_decision_is_consistent(path in path_strategy(), eta in 0.01f64..0.5, delta in 0.0f64..3.5) {
        for metric in Metric::ALL {
            let w = modulus(&path, eta, 0.0, 1.0, metric, Sparsity::Eta).unwrap().value;
            let dec = modulus_at_least(&path, eta, 0.0, 1.0, metric, Sparsity::Eta, delta).unwrap();
            prop_assert_eq!(dec, w >= delta);
            let dec = modulus_at_least(&path, eta, 0.0, 1.0, metric, Sparsity::Eta, w).unwrap();
            prop_assert!(dec);
        }
    }

    #[test]
    fn glued_skeleton_bounds_the_whole(path in path_strategy(), cuts in proptest::collection::vec(0.1f64..0.9, 0..3), eta in 0.005f64..0.05) {
        let mut skeleton = vec![0.0];
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        for c in cuts {
            if c - skeleton.last().unwrap() > 0.1 && 1.0 - c > 0.1 {
                skeleton.push(c);
            }
        }
        skeleton.push(1.0);
        let (lhs, rhs) = glued_bound(&path, &skeleton, eta, Metric::Euclidean).unwrap();
        prop_assert!(lhs <= rhs);
        prop_assert!(rhs <= 1.0);
    }
}

#[test]
fn large_paths_use_bit_bisection() {
    // more distinct values than the materialization limit
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let jumps: Vec<(f64, f64)> = (1..4000)
        .map(|i| (i as f64 / 4000.0, rng.random_range(0.0..1.0)))
        .collect();
    let path = StepPath::new(0.0, 0.5, jumps, 1.0).unwrap();
    for eta in [0.001, 0.01, 0.1] {
        let r = modulus(&path, eta, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(r.witness.cost(&path, Metric::Euclidean).unwrap(), r.value);
        assert!(r.witness.is_sparse());
        // one level lower must be infeasible
        assert!(modulus_at_least(&path, eta, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta, r.value)
            .unwrap());
        assert!(!modulus_at_least(
            &path,
            eta,
            0.0,
            1.0,
            Metric::Euclidean,
            Sparsity::Eta,
            r.value.next_up()
        )
        .unwrap());
    }
}
