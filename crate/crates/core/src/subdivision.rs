//! Deterministic subdivisions adapted to a monotone control.
//!
//! [`construct_b`] builds a subdivision `b` of `[0, T]` whose cells carry little
//! continuous growth of `F` and which contains the times of all but a small mass
//! of its atoms. [`match_bn`] transports `b` to a nearby control `Fn` through a
//! piecewise-linear time change anchored at matched atoms. [`freeze_control`]
//! and [`window_increment_sup`] give the per-cell quantities that bound the
//! oscillations of the process between consecutive breakpoints.

use serde::Serialize;

use crate::modulus::{ModulusError, Sparsity, Subdivision};
use crate::path::{MonotoneControl, PathError, PiecewiseLinearTimeChange};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubdivisionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "no atom of the approximating control matches the atom of size {size} at {time} \
         (window ±{window}, relative size tolerance {tolerance})"
    )]
    Unmatched {
        time: f64,
        size: f64,
        window: f64,
        tolerance: f64,
    },
    #[error("cell [{lo}, {hi}) carries F-increment {increment} > mesh bound {bound}")]
    MeshViolated {
        lo: f64,
        hi: f64,
        increment: f64,
        bound: f64,
    },
    #[error("missed atom mass {missed} exceeds {bound}")]
    MissedMassViolated { missed: f64, bound: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
}

pub type Result<T> = std::result::Result<T, SubdivisionError>;

/// A subdivision `b` of `[0, T]` together with the two bounds it satisfies:
/// `F(b_{l+1}-) - F(b_l) <= mesh_bound` on every cell, and the total size of the
/// atoms in `[0, T)` that are not breakpoints is at most `epsilon^3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaBCertificate {
    /// Eta-bar-sparse with `eta` half the smallest gap.
    pub subdivision: Subdivision,
    pub mesh_bound: f64,
    pub missed_jump_mass: f64,
    pub epsilon: f64,
    /// `max_l F(b_{l+1}-) - F(b_l)`.
    pub max_increment: f64,
}

impl LemmaBCertificate {
    /// Checks both bounds against `control` from scratch, with no tolerance.
    pub fn verify(&self, control: &MonotoneControl) -> Result<()> {
        let bps = self.subdivision.breakpoints();
        let end = self.subdivision.end();
        let bound = mesh_bound(control, end, self.epsilon)?;
        if bound != self.mesh_bound {
            return Err(SubdivisionError::Domain(format!(
                "recorded mesh bound {} differs from {bound}",
                self.mesh_bound
            )));
        }
        for w in bps.windows(2) {
            let increment = control.left_limit(w[1])? - control.eval(w[0])?;
            if increment > bound {
                return Err(SubdivisionError::MeshViolated {
                    lo: w[0],
                    hi: w[1],
                    increment,
                    bound,
                });
            }
        }
        let missed = missed_mass(control, bps, end);
        let cube = self.epsilon.powi(3);
        if missed > cube || missed != self.missed_jump_mass {
            return Err(SubdivisionError::MissedMassViolated { missed, bound: cube });
        }
        Ok(())
    }
}

/// `epsilon^3 / (1 + F(T))^{1/3}`.
pub fn mesh_bound(control: &MonotoneControl, horizon: f64, epsilon: f64) -> Result<f64> {
    Ok(epsilon.powi(3) / (1.0 + control.eval(horizon)?).cbrt())
}

/// Largest `F(b_{l+1}-) - F(b_l)` over the cells of `breakpoints`.
pub fn max_mesh_increment(control: &MonotoneControl, breakpoints: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for w in breakpoints.windows(2) {
        worst = worst.max(control.left_limit(w[1])? - control.eval(w[0])?);
    }
    Ok(worst)
}

/// Total size of the atoms in `[0, end)` that are not breakpoints, summed from
/// the smallest up so that construction and verification agree to the bit.
fn missed_mass(control: &MonotoneControl, breakpoints: &[f64], end: f64) -> f64 {
    let mut sizes: Vec<f64> = control
        .atoms()
        .filter(|&(t, s)| t < end && s > 0.0)
        .filter(|(t, _)| breakpoints.binary_search_by(|b| b.total_cmp(t)).is_err())
        .map(|(_, s)| s)
        .collect();
    sizes.sort_by(f64::total_cmp);
    sizes.iter().sum()
}

/// Builds the subdivision in two passes.
///
/// The sweep puts the next breakpoint at the last `t` with
/// `F(t-) - F(b_l) <= mesh_bound`; an atom that overshoots the bound therefore
/// becomes a breakpoint itself. Then the largest remaining atoms are added
/// until the missed mass is at most `epsilon^3`. Adding breakpoints only
/// shrinks the increments, so the first bound survives the second pass.
pub fn construct_b(control: &MonotoneControl, horizon: f64, epsilon: f64) -> Result<LemmaBCertificate> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(SubdivisionError::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(horizon > 0.0) || horizon > control.horizon() {
        return Err(SubdivisionError::Domain(format!(
            "horizon {horizon} must lie in (0, {}]",
            control.horizon()
        )));
    }
    let bound = mesh_bound(control, horizon, epsilon)?;

    let mut bps = vec![0.0];
    let mut current = 0.0;
    while current < horizon {
        let base = control.eval(current)?;
        let fits = |t: f64| -> bool { control.left_limit(t).unwrap() - base <= bound };
        let next = if fits(horizon) {
            horizon
        } else {
            // largest float in [current, horizon) that fits; bit patterns of
            // non-negative floats are ordered like the floats themselves
            let (mut lo, mut hi) = (current.to_bits(), horizon.to_bits());
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if fits(f64::from_bits(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            f64::from_bits(lo).max(current.next_up())
        };
        bps.push(next);
        current = next;
    }

    let cube = epsilon.powi(3);
    let mut missed: Vec<(f64, f64)> = control
        .atoms()
        .filter(|&(t, s)| t < horizon && s > 0.0)
        .filter(|(t, _)| bps.binary_search_by(|b| b.total_cmp(t)).is_err())
        .collect();
    // largest first; suffix sums run from the smallest atom up
    missed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut suffix = vec![0.0; missed.len() + 1];
    for i in (0..missed.len()).rev() {
        suffix[i] = suffix[i + 1] + missed[i].1;
    }
    let keep = suffix.iter().position(|&s| s <= cube).unwrap_or(missed.len());
    bps.extend(missed[..keep].iter().map(|&(t, _)| t));
    bps.sort_by(f64::total_cmp);

    let subdivision = sparse_subdivision(bps)?;
    let certificate = LemmaBCertificate {
        max_increment: max_mesh_increment(control, subdivision.breakpoints())?,
        missed_jump_mass: missed_mass(control, subdivision.breakpoints(), horizon),
        subdivision,
        mesh_bound: bound,
        epsilon,
    };
    certificate.verify(control)?;
    Ok(certificate)
}

fn sparse_subdivision(breakpoints: Vec<f64>) -> Result<Subdivision> {
    let gap = breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Subdivision::new(breakpoints, Sparsity::EtaBar, gap / 2.0)?)
}

/// Acceptance window for pairing an atom of `F` with one of `Fn`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MatchConfig {
    /// Largest accepted `|size_n - size| / size`.
    pub size_tolerance: f64,
    /// Largest accepted displacement, as a fraction of the smallest gap
    /// between consecutive points of `{0} ∪ atoms of F ∪ {T}`.
    pub position_fraction: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            size_tolerance: 0.5,
            position_fraction: 0.5,
        }
    }
}

/// Convergence diagnostics at one breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakpointMatch {
    pub b: f64,
    pub bn: f64,
    pub f_at_b: f64,
    pub f_before_b: f64,
    pub fn_at_bn: f64,
    pub fn_before_bn: f64,
    /// Whether `b` is an atom of `F` anchored to an atom of `Fn`.
    pub anchored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedSubdivision {
    pub subdivision: Subdivision,
    #[serde(skip)]
    pub time_change: PiecewiseLinearTimeChange,
    pub matches: Vec<BreakpointMatch>,
}

impl MatchedSubdivision {
    /// `max_l |Fn(bn_l) - F(b_l)|` together with the same quantity for left limits.
    pub fn max_value_error(&self) -> f64 {
        self.matches
            .iter()
            .map(|m| (m.fn_at_bn - m.f_at_b).abs().max((m.fn_before_bn - m.f_before_b).abs()))
            .fold(0.0, f64::max)
    }

    /// `min_l (bn_{l+1} - bn_l)`.
    pub fn min_gap(&self) -> f64 {
        self.subdivision.min_gap()
    }

    /// `max_l Fn(bn_{l+1}-) - Fn(bn_{l+1} - eta)`, the growth of `Fn` just
    /// before each breakpoint.
    pub fn left_increment(&self, fn_control: &MonotoneControl, eta: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for &bn in &self.subdivision.breakpoints()[1..] {
            let lo = (bn - eta).max(0.0);
            worst = worst.max(fn_control.left_limit(bn)? - fn_control.eval(lo)?);
        }
        Ok(worst)
    }
}

/// Transports `b` to `Fn`: every breakpoint of `b` that is an atom of `F` is
/// anchored to the nearest acceptable atom of `Fn`, the time change interpolates
/// linearly between anchors and fixes `0` and `T`, and `bn = λ(b)`.
pub fn match_bn(
    f: &MonotoneControl,
    fn_control: &MonotoneControl,
    b: &Subdivision,
    config: &MatchConfig,
) -> Result<MatchedSubdivision> {
    let horizon = b.end();
    if b.start() != 0.0 || horizon > f.horizon() || horizon > fn_control.horizon() {
        return Err(SubdivisionError::Domain(format!(
            "subdivision [{}, {horizon}] must start at 0 and lie inside both controls",
            b.start()
        )));
    }
    let mut marks = vec![0.0];
    marks.extend(f.atoms().filter(|&(t, s)| t < horizon && s > 0.0).map(|(t, _)| t));
    marks.push(horizon);
    let min_gap = marks
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let window = config.position_fraction * min_gap;
    let candidates: Vec<(f64, f64)> = fn_control.atoms().filter(|&(_, s)| s > 0.0).collect();

    let mut anchors = vec![(0.0, 0.0)];
    let mut anchored = Vec::with_capacity(b.breakpoints().len());
    for &bl in b.breakpoints() {
        let size = f.jump_at(bl);
        if bl <= 0.0 || bl >= horizon || size <= 0.0 {
            anchored.push(false);
            continue;
        }
        let best = candidates
            .iter()
            .filter(|&&(t, s)| (t - bl).abs() < window && (s - size).abs() < config.size_tolerance * size)
            .min_by(|x, y| (x.0 - bl).abs().total_cmp(&(y.0 - bl).abs()))
            .ok_or(SubdivisionError::Unmatched {
                time: bl,
                size,
                window,
                tolerance: config.size_tolerance,
            })?;
        anchors.push((bl, best.0));
        anchored.push(true);
    }
    anchors.push((horizon, horizon));
    let time_change = PiecewiseLinearTimeChange::new(anchors)?;

    let mut bn = Vec::with_capacity(b.breakpoints().len());
    let mut matches = Vec::with_capacity(b.breakpoints().len());
    for (&bl, &anchored) in b.breakpoints().iter().zip(&anchored) {
        let image = time_change.apply(bl)?;
        bn.push(image);
        matches.push(BreakpointMatch {
            b: bl,
            bn: image,
            f_at_b: f.eval(bl)?,
            f_before_b: f.left_limit(bl)?,
            fn_at_bn: fn_control.eval(image)?,
            fn_before_bn: fn_control.left_limit(image)?,
            anchored,
        });
    }
    Ok(MatchedSubdivision {
        subdivision: Subdivision::new(bn, b.mode(), b.eta())?,
        time_change,
        matches,
    })
}

/// `Fn` on `[0, b_next)`, held at `Fn(b_next-)` from `b_next` on.
pub fn freeze_control(fn_control: &MonotoneControl, b_next: f64) -> Result<MonotoneControl> {
    if !(b_next > 0.0) || b_next > fn_control.horizon() {
        return Err(SubdivisionError::Domain(format!(
            "freeze time {b_next} outside (0, {}]",
            fn_control.horizon()
        )));
    }
    Ok(fn_control.freeze(b_next)?)
}

fn left_limit_extended(control: &MonotoneControl, t: f64) -> f64 {
    if t > control.horizon() {
        control.eval_extended(t)
    } else if t <= 0.0 {
        0.0
    } else {
        control.left_limit(t).expect("inside the horizon")
    }
}

/// `sup_{lo <= y <= hi} F(y + 2 eta) - F(y)` for a control extended
/// constantly past its horizon.
///
/// `y -> F(y + 2 eta) - F(y)` is affine between the points `a`, `a - 2 eta`
/// (atoms `a`) and the kinks of the linear part, so the supremum is a value or
/// a left limit at one of those points, or a value at `lo` or `hi`.
pub fn window_increment_sup(control: &MonotoneControl, lo: f64, hi: f64, eta: f64) -> Result<f64> {
    if !(lo <= hi) || !(eta > 0.0) || lo < 0.0 || !hi.is_finite() {
        return Err(SubdivisionError::Domain(format!(
            "need 0 <= lo <= hi and eta > 0, got [{lo}, {hi}] and {eta}"
        )));
    }
    let span = 2.0 * eta;
    let at = |y: f64, right: f64| control.eval_extended(right) - control.eval_extended(y);
    let before = |y: f64, right: f64| left_limit_extended(control, right) - left_limit_extended(control, y);

    let mut best = at(lo, lo + span).max(at(hi, hi + span));
    let kink = control.slope_until().min(control.horizon());
    let mut points = vec![kink, kink - span];
    for (a, size) in control.atoms() {
        if size <= 0.0 {
            continue;
        }
        // y = a - 2 eta with right end exactly a, so rounding cannot drop the atom
        let y = a - span;
        if y >= lo && y <= hi {
            best = best.max(at(y, a));
        }
        if y > lo && y <= hi {
            best = best.max(before(y, a));
        }
        points.push(a);
    }
    for y in points {
        if y >= lo && y <= hi {
            best = best.max(at(y, y + span));
        }
        if y > lo && y <= hi {
            best = best.max(before(y, y + span));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_control_certificate() {
        let f = MonotoneControl::identity(1.0).unwrap();
        let cert = construct_b(&f, 1.0, 0.5).unwrap();
        assert!((cert.mesh_bound - 0.125 / 2f64.cbrt()).abs() < 1e-15);
        assert!((cert.mesh_bound - 0.09921).abs() < 1e-5);
        assert_eq!(cert.missed_jump_mass, 0.0);
        assert!(cert.max_increment <= cert.mesh_bound);
        // the greedy sweep needs ceil(1 / bound) = 11 cells
        assert_eq!(cert.subdivision.breakpoints().len(), 12);

        let uniform: Vec<f64> = (0..=11).map(|i| i as f64 / 11.0).collect();
        assert!(max_mesh_increment(&f, &uniform).unwrap() <= cert.mesh_bound);
    }

    #[test]
    fn single_atom_becomes_a_breakpoint() {
        let f = MonotoneControl::new(0.0, vec![(0.5, 1.0)], 1.0).unwrap();
        let cert = construct_b(&f, 1.0, 0.5).unwrap();
        assert_eq!(cert.subdivision.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(cert.max_increment, 0.0);
        assert_eq!(cert.missed_jump_mass, 0.0);

        // without the atom the missed mass is 1 > 0.125
        let bad = LemmaBCertificate {
            subdivision: Subdivision::new(vec![0.0, 1.0], Sparsity::EtaBar, 0.5).unwrap(),
            missed_jump_mass: 1.0,
            max_increment: 0.0,
            ..cert
        };
        assert!(matches!(
            bad.verify(&f),
            Err(SubdivisionError::MeshViolated { .. })
        ));
    }

    #[test]
    fn zero_control_is_trivial() {
        let f = MonotoneControl::new(0.0, vec![], 2.0).unwrap();
        let cert = construct_b(&f, 2.0, 0.3).unwrap();
        assert_eq!(cert.subdivision.breakpoints(), &[0.0, 2.0]);
    }

    #[test]
    fn small_atoms_may_be_skipped() {
        let f = MonotoneControl::new(0.0, vec![(0.2, 0.01), (0.4, 0.9), (0.6, 0.02)], 1.0).unwrap();
        let cert = construct_b(&f, 1.0, 0.5).unwrap();
        assert!(cert.subdivision.breakpoints().contains(&0.4));
        assert!(cert.missed_jump_mass <= 0.125);
        cert.verify(&f).unwrap();
    }

    #[test]
    fn match_examples() {
        let f = MonotoneControl::new(0.0, vec![(1.0, 1.0)], 2.0).unwrap();
        let b = Subdivision::new(vec![0.0, 1.0, 2.0], Sparsity::EtaBar, 0.5).unwrap();

        let same = match_bn(&f, &f, &b, &MatchConfig::default()).unwrap();
        assert_eq!(same.subdivision.breakpoints(), b.breakpoints());
        assert_eq!(same.max_value_error(), 0.0);

        let n = 20.0;
        let shifted = MonotoneControl::new(0.0, vec![(1.0 + 1.0 / n, 1.0)], 2.0).unwrap();
        let m = match_bn(&f, &shifted, &b, &MatchConfig::default()).unwrap();
        assert_eq!(m.subdivision.breakpoints(), &[0.0, 1.0 + 1.0 / n, 2.0]);
        assert_eq!(m.max_value_error(), 0.0);

        let g = MonotoneControl::new(0.0, vec![(1.05, 1.0)], 2.0).unwrap();
        let m = match_bn(&f, &g, &b, &MatchConfig::default()).unwrap();
        assert!((m.time_change.apply(0.5).unwrap() - 0.525).abs() < 1e-15);
    }

    #[test]
    fn unmatched_atom_is_loud() {
        let f = MonotoneControl::new(0.0, vec![(1.0, 1.0)], 2.0).unwrap();
        let b = Subdivision::new(vec![0.0, 1.0, 2.0], Sparsity::EtaBar, 0.5).unwrap();
        let small = MonotoneControl::new(0.0, vec![(1.0, 0.4)], 2.0).unwrap();
        let far = MonotoneControl::new(0.0, vec![(1.6, 1.0)], 2.0).unwrap();
        for g in [small, far] {
            assert!(matches!(
                match_bn(&f, &g, &b, &MatchConfig::default()),
                Err(SubdivisionError::Unmatched { .. })
            ));
        }
    }

    #[test]
    fn freeze_examples() {
        let f = MonotoneControl::identity(2.0).unwrap();
        let frozen = freeze_control(&f, 1.0).unwrap();
        assert_eq!(frozen.eval(1.5).unwrap(), 1.0);

        let g = MonotoneControl::new(1.0, vec![(1.0, 0.5)], 2.0).unwrap();
        let frozen = freeze_control(&g, 1.0).unwrap();
        assert_eq!(frozen.eval(1.0).unwrap(), 1.0);
        assert_eq!(frozen.eval(2.0).unwrap(), 1.0);

        let h = MonotoneControl::new(1.0, vec![(0.5, 0.5)], 2.0).unwrap();
        let same = freeze_control(&h, 2.0).unwrap();
        for t in [0.0, 0.4, 0.5, 1.3, 2.0] {
            assert_eq!(same.eval(t).unwrap(), h.eval(t).unwrap());
        }
        assert!(freeze_control(&h, 0.0).is_err());
        assert!(freeze_control(&h, 2.5).is_err());
    }

    #[test]
    fn window_increment_examples() {
        let f = MonotoneControl::identity(1.0).unwrap();
        let v = window_increment_sup(&f, 0.2, 0.5, 0.1).unwrap();
        assert!((v - 0.2).abs() < 1e-15);

        let g = MonotoneControl::new(0.0, vec![(0.5, 0.5)], 1.0).unwrap();
        assert_eq!(window_increment_sup(&g, 0.2, 0.8, 1e-3).unwrap(), 0.5);
        // the atom at lo is not reachable from y >= lo
        assert_eq!(window_increment_sup(&g, 0.5, 0.8, 1e-3).unwrap(), 0.0);

        let v = window_increment_sup(&f, 0.3, 0.3, 0.1).unwrap();
        assert_eq!(v, f.eval(0.5).unwrap() - f.eval(0.3).unwrap());

        // extended constantly past the horizon
        let v = window_increment_sup(&f, 0.95, 1.0, 0.1).unwrap();
        assert!((v - 0.05).abs() < 1e-15);
    }

    #[test]
    fn window_increment_tends_to_largest_inner_atom() {
        let g = MonotoneControl::new(
            0.7,
            vec![(0.1, 0.9), (0.3, 0.2), (0.45, 0.6), (0.6, 0.1), (0.8, 0.3)],
            1.0,
        )
        .unwrap();
        let frozen = freeze_control(&g, 0.8).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let eta = 0.1f64.powi(k);
            let v = window_increment_sup(&frozen, 0.1, 0.8, eta).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!((prev - 0.6).abs() < 1e-9);
    }
}
