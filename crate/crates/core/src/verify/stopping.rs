//! Hitting-time traces on a frozen window and the pathwise bound they give on
//! the eta-bar modulus of that window.

use serde::Serialize;

use super::{Result, VerifyError};
use crate::metric::Metric;
use crate::modulus::{modulus, Sparsity, Subdivision};
use crate::path::StepPath;

/// The times `Υ(0) = lo < Υ(1) < ...` at which the path frozen before `hi`
/// moves at least `epsilon` (in `1 ∧ d`) away from its value at the previous
/// one, and `Ῡ`, the first such time after `hi - 2 eta` measured from the
/// value at `hi - 2 eta`. Times absent from `upsilon` are infinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingTimeTrace {
    pub epsilon: f64,
    pub eta: f64,
    pub lo: f64,
    pub hi: f64,
    /// Bounded version of the metric used.
    pub metric: Metric,
    /// The finite `Υ(i)`, starting with `Υ(0) = lo`.
    pub upsilon: Vec<f64>,
    /// `Ῡ(eta)`, infinite if the threshold is never reached.
    pub upsilon_bar: f64,
}

impl StoppingTimeTrace {
    /// `Υ(i)`, infinite past the last finite one.
    pub fn upsilon(&self, i: usize) -> f64 {
        self.upsilon.get(i).copied().unwrap_or(f64::INFINITY)
    }

    /// `1{Υ(i+1) - Υ(i) <= eta}` with `∞ - ∞ = ∞`.
    pub fn short_gap(&self, i: usize) -> bool {
        let (a, b) = (self.upsilon(i), self.upsilon(i + 1));
        b.is_finite() && b - a <= self.eta
    }

    /// Asserts that every finite `Υ(i)`, `i >= 1`, lies in `(Υ(i-1), hi]` and
    /// sits at least `epsilon` away from `X(Υ(i-1))`, with `X(∞) = X(hi)` on the frozen path.
    pub fn check(&self, path: &StepPath) -> Result<()> {
        let frozen = path.freeze_before(self.hi)?;
        for w in self.upsilon.windows(2) {
            let (a, b) = (w[0], w[1]);
            let moved = self.metric.distance(frozen.eval(a)?, frozen.eval(b)?);
            if !(b > a && b <= self.hi && moved >= self.epsilon) {
                return Err(VerifyError::Domain(format!(
                    "trace step {a} -> {b} moves {moved} < {}",
                    self.epsilon
                )));
            }
        }
        if self.upsilon_bar.is_finite() && self.upsilon_bar > self.hi {
            return Err(VerifyError::Domain("finite Ῡ after the window".into()));
        }
        Ok(())
    }
}

fn validate(epsilon: f64, eta: f64) -> Result<()> {
    if !(epsilon > 0.0) || !(eta > 0.0) {
        return Err(VerifyError::Domain(format!(
            "epsilon and eta must be positive, got {epsilon} and {eta}"
        )));
    }
    Ok(())
}

/// Successive times at which `frozen` moves at least `epsilon` from the
/// value at the previous time, starting from `from`.
pub(super) fn hitting_times(frozen: &StepPath, from: f64, epsilon: f64, metric: Metric, all: bool) -> Result<Vec<f64>> {
    let mut reference = frozen.eval(from)?;
    let mut out = Vec::new();
    let first = frozen.jumps_up_to(from);
    for (&t, &v) in frozen.times()[first..].iter().zip(&frozen.values()[first..]) {
        if metric.distance(v, reference) >= epsilon {
            out.push(t);
            if !all {
                break;
            }
            reference = v;
        }
    }
    Ok(out)
}

/// The trace of `path` frozen before `hi`, started at `lo`.
pub fn compute_stopping_times(
    path: &StepPath,
    lo: f64,
    hi: f64,
    epsilon: f64,
    eta: f64,
    metric: Metric,
) -> Result<StoppingTimeTrace> {
    validate(epsilon, eta)?;
    let metric = metric.bounded();
    if !(path.t0() <= lo && lo < hi && hi <= path.horizon()) {
        return Err(VerifyError::Domain(format!(
            "window [{lo}, {hi}] outside [{}, {}]",
            path.t0(),
            path.horizon()
        )));
    }
    let late = hi - 2.0 * eta;
    if late < path.t0() {
        return Err(VerifyError::Domain(format!(
            "hi - 2 eta = {late} precedes the path start {}",
            path.t0()
        )));
    }
    // jumps at or after hi are erased, so every hit is in (lo, hi)
    let frozen = path.freeze_before(hi)?;
    let mut upsilon = vec![lo];
    upsilon.extend(hitting_times(&frozen, lo, epsilon, metric, true)?);
    let upsilon_bar = hitting_times(&frozen, late, epsilon, metric, false)?
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    Ok(StoppingTimeTrace {
        epsilon,
        eta,
        lo,
        hi,
        metric,
        upsilon,
        upsilon_bar,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCheck {
    pub lo: f64,
    pub hi: f64,
    /// eta-bar modulus of the frozen path over the window.
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub hits: usize,
    pub short_gaps: usize,
    pub late_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub epsilon: f64,
    pub eta: f64,
    pub m: usize,
    /// Smallest window length of the subdivision.
    pub eta0: f64,
    pub windows: Vec<WindowCheck>,
    pub holds: bool,
}

/// Checks, on every window `[b_l, b_{l+1}]` of `bn`,
///
/// `w̄'(X_l, eta, window) <= 1{Υ(m) <= b_{l+1}} + Σ_{i<m} 1{Υ(i+1) - Υ(i) <= eta}
///                          + 6 epsilon + 2 · 1{Ῡ(eta) <= b_{l+1}}`,
///
/// which holds for every path when `0 < eta < eta0 / 2`.
pub fn check_lemma_decomposition(
    path: &StepPath,
    bn: &Subdivision,
    epsilon: f64,
    eta: f64,
    m: usize,
    metric: Metric,
) -> Result<LemmaReport> {
    validate(epsilon, eta)?;
    if m == 0 {
        return Err(VerifyError::Domain("m must be at least 1".into()));
    }
    let eta0 = bn.min_gap();
    if !(eta < eta0 / 2.0) {
        return Err(VerifyError::Domain(format!(
            "eta = {eta} must be below half the smallest window ({eta0})"
        )));
    }
    let bounded = metric.bounded();
    let mut windows = Vec::with_capacity(bn.breakpoints().len() - 1);
    for (lo, hi) in bn.cells() {
        let trace = compute_stopping_times(path, lo, hi, epsilon, eta, bounded)?;
        let frozen = path.freeze_before(hi)?;
        let lhs = modulus(&frozen, eta, lo, hi, bounded, Sparsity::EtaBar)?.value;
        let short_gaps = (0..m).filter(|&i| trace.short_gap(i)).count();
        let many = trace.upsilon(m) <= hi;
        let late_hit = trace.upsilon_bar <= hi;
        let rhs = many as u8 as f64 + short_gaps as f64 + 6.0 * epsilon + 2.0 * late_hit as u8 as f64;
        windows.push(WindowCheck {
            lo,
            hi,
            lhs,
            rhs,
            holds: lhs <= rhs,
            hits: trace.upsilon.len() - 1,
            short_gaps,
            late_hit,
        });
    }
    Ok(LemmaReport {
        epsilon,
        eta,
        m,
        eta0,
        holds: windows.iter().all(|w| w.holds),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_path_has_no_hits() {
        let p = StepPath::constant(0.0, 2.0, 1.0).unwrap();
        let tr = compute_stopping_times(&p, 0.0, 1.0, 0.1, 0.05, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.0]);
        assert_eq!(tr.upsilon(1), f64::INFINITY);
        assert_eq!(tr.upsilon_bar, f64::INFINITY);
        assert!(!tr.short_gap(0));
        tr.check(&p).unwrap();
    }

    #[test]
    fn single_and_double_hits() {
        let p = StepPath::new(0.0, 0.0, vec![(0.4, 1.0)], 1.0).unwrap();
        let tr = compute_stopping_times(&p, 0.0, 1.0, 0.5, 0.05, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.0, 0.4]);
        assert_eq!(tr.upsilon(2), f64::INFINITY);

        // each jump moves exactly epsilon from the previous marker
        let p = StepPath::new(0.0, 0.0, vec![(0.3, 0.25), (0.6, 0.5)], 1.0).unwrap();
        let tr = compute_stopping_times(&p, 0.0, 1.0, 0.25, 0.05, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.0, 0.3, 0.6]);
        tr.check(&p).unwrap();

        // small moves accumulate until they cross epsilon
        let p = StepPath::new(0.0, 0.0, vec![(0.2, 0.1), (0.3, 0.2), (0.5, 0.3)], 1.0).unwrap();
        let tr = compute_stopping_times(&p, 0.0, 1.0, 0.25, 0.05, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.0, 0.5]);
    }

    #[test]
    fn jump_at_window_end_is_frozen_out() {
        let p = StepPath::new(0.0, 0.0, vec![(0.5, 1.0), (0.95, 3.0)], 1.0).unwrap();
        let tr = compute_stopping_times(&p, 0.0, 0.5, 0.5, 0.1, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.0]);
        let tr = compute_stopping_times(&p, 0.5, 1.0, 0.5, 0.1, Metric::Euclidean).unwrap();
        assert_eq!(tr.upsilon, vec![0.5, 0.95]);
        assert_eq!(tr.upsilon_bar, 0.95);
        assert!(compute_stopping_times(&p, 0.0, 1.0, 0.0, 0.1, Metric::Euclidean).is_err());
    }

    #[test]
    fn lemma_examples() {
        let b = Subdivision::new(vec![0.0, 0.5, 1.0], Sparsity::EtaBar, 0.1).unwrap();
        let c = StepPath::constant(0.0, 1.0, 1.0).unwrap();
        let r = check_lemma_decomposition(&c, &b, 0.1, 0.05, 3, Metric::Euclidean).unwrap();
        assert!(r.holds);
        assert!(r.windows.iter().all(|w| w.lhs == 0.0 && (w.rhs - 0.6).abs() < 1e-15));

        let p = StepPath::new(0.0, 0.0, vec![(0.25, 1.0)], 1.0).unwrap();
        let r = check_lemma_decomposition(&p, &b, 0.1, 0.01, 2, Metric::Euclidean).unwrap();
        assert!(r.holds);
        assert_eq!(r.windows[0].lhs, 0.0);
        assert!(r.windows[0].rhs >= 0.6);

        assert!(check_lemma_decomposition(&p, &b, 0.1, 0.25, 2, Metric::Euclidean).is_err());
        assert!(check_lemma_decomposition(&p, &b, 0.1, 0.01, 0, Metric::Euclidean).is_err());
    }
}
