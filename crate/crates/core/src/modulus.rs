//! Skorokhod-type moduli of step paths over sparse subdivisions.
//!
//! For a subdivision `A = b_0 < ... < b_L = B` the cost is the largest
//! oscillation of the path over the half-open cells `[b_l, b_{l+1})`; the
//! modulus is the smallest cost over all admissible subdivisions.
//!
//! Admissibility (all gaps compared as `b_{l+1} - b_l > eta` in `f64`):
//! * [`Sparsity::Eta`]: every gap but the last exceeds `eta`;
//! * [`Sparsity::EtaBar`]: every gap, including the last, exceeds `eta`.
//!
//! For a step path the cost of any subdivision is a pairwise distance between
//! path values, so the infimum is attained. [`modulus`] finds it by bisection
//! over those candidate levels, deciding each level with a linear dynamic
//! program ([`Feasibility`]). [`modulus_oracle`] is an exhaustive search used
//! to validate it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metric::Metric;
use crate::path::{PathError, StepPath};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModulusError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no {mode} subdivision of [{a}, {b}] exists for eta = {eta}")]
    Infeasible {
        a: f64,
        b: f64,
        eta: f64,
        mode: Sparsity,
    },
    #[error("oracle refuses paths with {0} jumps in the interval (limit {ORACLE_MAX_JUMPS})")]
    TooManyJumps(usize),
    #[error("subdivision parts do not abut: {0} != {1}")]
    NotAbutting(f64, f64),
    #[error("glued subdivision is not eta-bar-sparse: gap {gap} <= {eta}")]
    NotSparse { gap: f64, eta: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

pub type Result<T> = std::result::Result<T, ModulusError>;

/// Largest number of in-interval jumps [`modulus_oracle`] accepts.
pub const ORACLE_MAX_JUMPS: usize = 10;

/// Above this many distinct values the candidate set is not materialized and
/// the bisection runs over the bit patterns of `f64` levels instead.
const MAX_MATERIALIZED_VALUES: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Gaps `> eta` except possibly the last one.
    Eta,
    /// Gaps `> eta` everywhere.
    EtaBar,
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sparsity::Eta => "eta",
            Sparsity::EtaBar => "etabar",
        })
    }
}

impl FromStr for Sparsity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "eta" | "eta_sparse" => Ok(Sparsity::Eta),
            "etabar" | "eta_bar" | "eta_bar_sparse" => Ok(Sparsity::EtaBar),
            other => Err(format!("unknown sparsity mode `{other}` (expected eta or etabar)")),
        }
    }
}

/// The gap test used everywhere: `hi - lo > eta` evaluated in `f64`.
#[inline]
pub fn gap_exceeds(lo: f64, hi: f64, eta: f64) -> bool {
    hi - lo > eta
}

/// Smallest `q` with `q - p > eta` in `f64` arithmetic.
pub fn min_after(p: f64, eta: f64) -> f64 {
    let mut q = p + eta;
    if gap_exceeds(p, q, eta) {
        loop {
            let down = q.next_down();
            if gap_exceeds(p, down, eta) {
                q = down;
            } else {
                return q;
            }
        }
    } else {
        loop {
            q = q.next_up();
            if gap_exceeds(p, q, eta) {
                return q;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subdivision {
    breakpoints: Vec<f64>,
    mode: Sparsity,
    eta: f64,
}

impl Subdivision {
    /// Checks ordering only; use [`Subdivision::is_sparse`] for the gap constraint.
    pub fn new(breakpoints: Vec<f64>, mode: Sparsity, eta: f64) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(ModulusError::Domain(
                "a subdivision needs at least two breakpoints".into(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(ModulusError::Domain("non-finite breakpoint".into()));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ModulusError::Domain(format!(
                "breakpoints must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
        if !(eta > 0.0) {
            return Err(ModulusError::Domain(format!("eta must be positive, got {eta}")));
        }
        Ok(Subdivision {
            breakpoints,
            mode,
            eta,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn mode(&self) -> Sparsity {
        self.mode
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn min_gap(&self) -> f64 {
        self.cells().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
    }

    pub fn is_sparse(&self) -> bool {
        let gaps = self.breakpoints.len() - 1;
        let checked = match self.mode {
            Sparsity::Eta => gaps - 1,
            Sparsity::EtaBar => gaps,
        };
        self.breakpoints
            .windows(2)
            .take(checked)
            .all(|w| gap_exceeds(w[0], w[1], self.eta))
    }

    /// Largest oscillation of `path` over the cells.
    pub fn cost(&self, path: &StepPath, metric: Metric) -> Result<f64> {
        let mut worst = 0.0f64;
        for (a, b) in self.cells() {
            worst = worst.max(oscillation(path, a, b, metric)?);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusResult {
    pub value: f64,
    pub witness: Subdivision,
}

fn check_interval(path: &StepPath, a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(ModulusError::Domain(format!("empty interval [{a}, {b})")));
    }
    if a < path.t0() || b > path.horizon() {
        return Err(ModulusError::Domain(format!(
            "[{a}, {b}] not inside the path domain [{}, {}]",
            path.t0(),
            path.horizon()
        )));
    }
    Ok(())
}

/// `sup { d(f(s), f(t)) : a <= s, t < b }`.
pub fn oscillation(path: &StepPath, a: f64, b: f64, metric: Metric) -> Result<f64> {
    check_interval(path, a, b)?;
    let first = path.jumps_up_to(a);
    let last = path.jumps_before(b);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in first..=last.max(first) {
        let p = metric.phi(path.value_after(k));
        lo = lo.min(p);
        hi = hi.max(p);
    }
    Ok(metric.from_phi(hi, lo))
}

/// The path restricted to `[a, b)` in `phi` coordinates.
struct Window {
    a: f64,
    b: f64,
    /// `phi` of the value on each constant stretch; `phis[0]` is `phi(f(a))`.
    phis: Vec<f64>,
    /// `times[k]` starts stretch `k` (`times[0] = a`); one trailing entry `b`.
    times: Vec<f64>,
    metric: Metric,
}

impl Window {
    fn new(path: &StepPath, a: f64, b: f64, metric: Metric) -> Result<Self> {
        check_interval(path, a, b)?;
        let first = path.jumps_up_to(a);
        let last = path.jumps_before(b);
        let m = last.saturating_sub(first);
        let mut phis = Vec::with_capacity(m + 1);
        let mut times = Vec::with_capacity(m + 2);
        phis.push(metric.phi(path.value_after(first)));
        times.push(a);
        for k in first..last {
            times.push(path.times()[k]);
            phis.push(metric.phi(path.values()[k]));
        }
        times.push(b);
        Ok(Window {
            a,
            b,
            phis,
            times,
            metric,
        })
    }

    fn stretches(&self) -> usize {
        self.phis.len()
    }

    fn diameter(&self) -> f64 {
        let (lo, hi) = self
            .phis
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        self.metric.from_phi(hi, lo)
    }
}

/// Decides, for a level `delta`, whether some admissible subdivision has all
/// cell oscillations `<= delta`.
///
/// A breakpoint's future only depends on which stretch it falls in and on its
/// position, and an earlier position within the same stretch is never worse.
/// The program therefore keeps, per stretch, the earliest reachable breakpoint.
/// Candidate sources for a stretch form a suffix of the earlier stretches
/// (cell oscillation shrinks as the cell start moves right), and the earliest
/// reachable source in that suffix is the best one, so one sweep with two
/// monotone deques and a monotone pointer decides the level in linear time.
struct Feasibility<'w> {
    w: &'w Window,
    eta: f64,
    mode: Sparsity,
}

struct Plan {
    /// Earliest breakpoint position in each stretch, if reachable.
    earliest: Vec<f64>,
    pred: Vec<usize>,
    last: usize,
}

const UNREACHED: usize = usize::MAX;

impl<'w> Feasibility<'w> {
    fn run(&self, delta: f64) -> Option<Plan> {
        let w = self.w;
        let m = w.stretches() - 1;
        if delta < 0.0 {
            return None;
        }
        let mut earliest = vec![f64::NAN; m + 1];
        let mut pred = vec![UNREACHED; m + 1];
        earliest[0] = w.a;
        let mut reached: Vec<usize> = Vec::with_capacity(16);
        reached.push(0);
        let mut ptr = 0usize;

        // sliding window [lo, j] of stretches with oscillation <= delta
        let mut maxq: std::collections::VecDeque<usize> = Default::default();
        let mut minq: std::collections::VecDeque<usize> = Default::default();
        let mut lo = 0usize;
        let push = |j: usize,
                        lo: &mut usize,
                        maxq: &mut std::collections::VecDeque<usize>,
                        minq: &mut std::collections::VecDeque<usize>| {
            let p = w.phis[j];
            while maxq.back().is_some_and(|&i| w.phis[i] <= p) {
                maxq.pop_back();
            }
            maxq.push_back(j);
            while minq.back().is_some_and(|&i| w.phis[i] >= p) {
                minq.pop_back();
            }
            minq.push_back(j);
            while w.metric.from_phi(w.phis[maxq[0]], w.phis[minq[0]]) > delta {
                *lo += 1;
                if maxq[0] < *lo {
                    maxq.pop_front();
                }
                if minq[0] < *lo {
                    minq.pop_front();
                }
            }
        };
        push(0, &mut lo, &mut maxq, &mut minq);

        let first_reached_from = |from: usize, reached: &Vec<usize>, ptr: &mut usize| {
            while *ptr < reached.len() && reached[*ptr] < from {
                *ptr += 1;
            }
            reached.get(*ptr).copied()
        };

        for k in 1..=m {
            // lo currently belongs to j = k - 1
            let start = w.times[k];
            let mut hit = None;
            if let Some(i) = first_reached_from(lo, &reached, &mut ptr) {
                if gap_exceeds(earliest[i], start, self.eta) {
                    hit = Some((i, start));
                }
            }
            push(k, &mut lo, &mut maxq, &mut minq);
            if hit.is_none() {
                if let Some(i) = first_reached_from(lo, &reached, &mut ptr) {
                    if i < k {
                        let p = min_after(earliest[i], self.eta);
                        if p > start && p < w.times[k + 1] {
                            hit = Some((i, p));
                        }
                    }
                }
            }
            if let Some((i, p)) = hit {
                earliest[k] = p;
                pred[k] = i;
                reached.push(k);
            }
        }

        let i = first_reached_from(lo, &reached, &mut ptr)?;
        match self.mode {
            Sparsity::Eta => {}
            Sparsity::EtaBar => {
                if !gap_exceeds(earliest[i], w.b, self.eta) {
                    return None;
                }
            }
        }
        Some(Plan {
            earliest,
            pred,
            last: i,
        })
    }

    fn witness(&self, plan: &Plan) -> Subdivision {
        let mut bps = vec![self.w.b];
        let mut k = plan.last;
        loop {
            bps.push(plan.earliest[k]);
            if k == 0 {
                break;
            }
            k = plan.pred[k];
        }
        bps.reverse();
        Subdivision {
            breakpoints: bps,
            mode: self.mode,
            eta: self.eta,
        }
    }
}

fn validate_request(a: f64, b: f64, eta: f64, mode: Sparsity) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(ModulusError::Domain(format!("eta must be positive, got {eta}")));
    }
    if mode == Sparsity::EtaBar && !gap_exceeds(a, b, eta) {
        return Err(ModulusError::Infeasible { a, b, eta, mode });
    }
    Ok(())
}

/// Sorted distinct candidate levels: every pairwise distance, plus zero.
fn candidate_levels(w: &Window) -> Option<Vec<f64>> {
    let mut phis = w.phis.clone();
    phis.sort_by(f64::total_cmp);
    phis.dedup();
    if phis.len() > MAX_MATERIALIZED_VALUES {
        return None;
    }
    let mut levels = Vec::with_capacity(phis.len() * (phis.len() - 1) / 2 + 1);
    levels.push(0.0);
    for (i, &x) in phis.iter().enumerate() {
        for &y in &phis[..i] {
            levels.push(w.metric.from_phi(x, y));
        }
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Some(levels)
}

/// `w(f, eta, [a, b])` for the given metric and sparsity mode, with a witness.
pub fn modulus(
    path: &StepPath,
    eta: f64,
    a: f64,
    b: f64,
    metric: Metric,
    mode: Sparsity,
) -> Result<ModulusResult> {
    validate_request(a, b, eta, mode)?;
    let window = Window::new(path, a, b, metric)?;
    let solver = Feasibility {
        w: &window,
        eta,
        mode,
    };
    let value = match candidate_levels(&window) {
        Some(levels) => {
            // levels.last() is the diameter: the single cell [a, b) achieves it
            let (mut lo, mut hi) = (0usize, levels.len() - 1);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if solver.run(levels[mid]).is_some() {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            levels[lo]
        }
        None => {
            // Feasibility only changes at candidate levels, so the smallest
            // feasible f64 is itself a candidate. Non-negative floats order
            // like their bit patterns.
            let (mut lo, mut hi) = (0u64, window.diameter().to_bits());
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if solver.run(f64::from_bits(mid)).is_some() {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            f64::from_bits(lo)
        }
    };
    let plan = solver
        .run(value)
        .expect("the optimal level is feasible by construction");
    Ok(ModulusResult {
        value,
        witness: solver.witness(&plan),
    })
}

/// Whether `w(f, eta, [a, b]) >= delta`, with a single feasibility sweep.
pub fn modulus_at_least(
    path: &StepPath,
    eta: f64,
    a: f64,
    b: f64,
    metric: Metric,
    mode: Sparsity,
    delta: f64,
) -> Result<bool> {
    validate_request(a, b, eta, mode)?;
    if delta <= 0.0 {
        return Ok(true);
    }
    let window = Window::new(path, a, b, metric)?;
    let solver = Feasibility {
        w: &window,
        eta,
        mode,
    };
    // cost < delta  <=>  cost <= the largest float below delta
    Ok(solver.run(delta.next_down()).is_none())
}

/// Exhaustive minimum over a finite grid of subdivisions.
///
/// At most one breakpoint per constant stretch `[s_k, s_{k+1})` is ever useful
/// (a second one only splits a constant cell), and within a stretch the only
/// positions worth trying are the jump time `s_k` itself or the earliest point
/// the gap constraint allows after the previous breakpoint. The oracle tries
/// every such choice, `3^m` combinations at most, and scores each subdivision
/// by enumerating the values the path takes in each cell.
pub fn modulus_oracle(
    path: &StepPath,
    eta: f64,
    a: f64,
    b: f64,
    metric: Metric,
    mode: Sparsity,
) -> Result<f64> {
    validate_request(a, b, eta, mode)?;
    check_interval(path, a, b)?;
    let first = path.jumps_up_to(a);
    let last = path.jumps_before(b);
    let jumps: Vec<f64> = path.times()[first..last.max(first)].to_vec();
    if jumps.len() > ORACLE_MAX_JUMPS {
        return Err(ModulusError::TooManyJumps(jumps.len()));
    }
    let mut stretch_end = jumps.clone();
    stretch_end.push(b);

    struct Search<'a> {
        path: &'a StepPath,
        jumps: &'a [f64],
        stretch_end: &'a [f64],
        eta: f64,
        b: f64,
        metric: Metric,
        mode: Sparsity,
        best: f64,
    }

    impl Search<'_> {
        fn finish(&mut self, bps: &mut Vec<f64>) -> Result<()> {
            let last = *bps.last().unwrap();
            if self.mode == Sparsity::EtaBar && !gap_exceeds(last, self.b, self.eta) {
                return Ok(());
            }
            bps.push(self.b);
            let mut cost = 0.0f64;
            for w in bps.windows(2) {
                cost = cost.max(cell_diameter(self.path, w[0], w[1], self.metric));
            }
            bps.pop();
            self.best = self.best.min(cost);
            Ok(())
        }

        fn go(&mut self, k: usize, bps: &mut Vec<f64>) -> Result<()> {
            if k == self.jumps.len() {
                return self.finish(bps);
            }
            let prev = *bps.last().unwrap();
            // no breakpoint in stretch k
            self.go(k + 1, bps)?;
            let s = self.jumps[k];
            if gap_exceeds(prev, s, self.eta) {
                bps.push(s);
                self.go(k + 1, bps)?;
                bps.pop();
            } else {
                let q = min_after(prev, self.eta);
                if q > s && q < self.stretch_end[k + 1] {
                    bps.push(q);
                    self.go(k + 1, bps)?;
                    bps.pop();
                }
            }
            Ok(())
        }
    }

    let mut search = Search {
        path,
        jumps: &jumps,
        stretch_end: &stretch_end,
        eta,
        b,
        metric,
        mode,
        best: f64::INFINITY,
    };
    // a breakpoint inside the first stretch (a, s_1) only splits a constant cell
    let mut bps = vec![a];
    search.go(0, &mut bps)?;
    Ok(search.best)
}

/// Largest pairwise distance among the values taken on `[a, b)`, by enumeration.
fn cell_diameter(path: &StepPath, a: f64, b: f64, metric: Metric) -> f64 {
    let mut values = vec![path.eval(a).expect("cell inside the path domain")];
    values.extend(path.jumps().filter(|&(t, _)| t > a && t < b).map(|(_, v)| v));
    let mut worst = 0.0f64;
    for (i, &x) in values.iter().enumerate() {
        for &y in &values[i + 1..] {
            worst = worst.max(metric.distance(x, y));
        }
    }
    worst
}

/// Concatenates eta-bar-sparse subdivisions of abutting intervals.
pub fn glue_subdivisions(parts: &[Subdivision]) -> Result<Subdivision> {
    let first = parts
        .first()
        .ok_or_else(|| ModulusError::Domain("nothing to glue".into()))?;
    let eta = first.eta();
    let mut bps = first.breakpoints().to_vec();
    for part in &parts[1..] {
        let end = *bps.last().unwrap();
        if part.start() != end {
            return Err(ModulusError::NotAbutting(end, part.start()));
        }
        bps.extend_from_slice(&part.breakpoints()[1..]);
    }
    let glued = Subdivision::new(bps, Sparsity::EtaBar, eta)?;
    if let Some((lo, hi)) = glued.cells().find(|&(lo, hi)| !gap_exceeds(lo, hi, eta)) {
        return Err(ModulusError::NotSparse { gap: hi - lo, eta });
    }
    Ok(glued)
}

/// Both sides of `w'(f, eta, [b_0, b_L]) <= max_l w̄'(f, eta, [b_l, b_{l+1}])`
/// for a skeleton whose cells are all longer than `eta`.
pub fn glued_bound(path: &StepPath, skeleton: &[f64], eta: f64, metric: Metric) -> Result<(f64, f64)> {
    let metric = metric.bounded();
    let sk = Subdivision::new(skeleton.to_vec(), Sparsity::EtaBar, eta)?;
    if !sk.is_sparse() {
        return Err(ModulusError::Domain(format!(
            "skeleton cells must be longer than eta = {eta}"
        )));
    }
    let lhs = modulus(path, eta, sk.start(), sk.end(), metric, Sparsity::Eta)?.value;
    let mut rhs = 0.0f64;
    for (lo, hi) in sk.cells() {
        rhs = rhs.max(modulus(path, eta, lo, hi, metric, Sparsity::EtaBar)?.value);
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_jumps() -> StepPath {
        StepPath::new(0.0, 0.0, vec![(0.5, 1.0), (0.6, 2.0)], 1.0).unwrap()
    }

    #[test]
    fn oscillation_examples() {
        let c = StepPath::constant(0.0, 3.0, 1.0).unwrap();
        assert_eq!(oscillation(&c, 0.0, 1.0, Metric::Euclidean).unwrap(), 0.0);
        let p = StepPath::new(0.0, 0.0, vec![(0.5, 1.0)], 1.0).unwrap();
        assert_eq!(oscillation(&p, 0.0, 1.0, Metric::Euclidean).unwrap(), 1.0);
        assert_eq!(oscillation(&two_jumps(), 0.5, 1.0, Metric::Euclidean).unwrap(), 1.0);
        assert!(oscillation(&p, 0.5, 0.5, Metric::Euclidean).is_err());
    }

    #[test]
    fn min_after_is_tight() {
        for (p, eta) in [(0.0, 0.2), (0.1, 0.2), (0.3, 0.1), (1.0 / 3.0, 0.05)] {
            let q = min_after(p, eta);
            assert!(q - p > eta);
            assert!(q.next_down() - p <= eta);
        }
    }

    #[test]
    fn modulus_examples() {
        let c = StepPath::constant(0.0, 1.0, 1.0).unwrap();
        let r = modulus(&c, 0.3, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.witness.breakpoints(), &[0.0, 1.0]);

        let p = StepPath::new(0.0, 0.0, vec![(0.5, 1.0)], 1.0).unwrap();
        let r = modulus(&p, 0.2, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.witness.breakpoints(), &[0.0, 0.5, 1.0]);

        let r = modulus(&two_jumps(), 0.2, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(r.value, 1.0);
        let r = modulus(&two_jumps(), 0.05, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.witness.breakpoints(), &[0.0, 0.5, 0.6, 1.0]);
    }

    #[test]
    fn oracle_agrees_on_examples() {
        let c = StepPath::constant(0.0, 1.0, 1.0).unwrap();
        assert_eq!(
            modulus_oracle(&c, 0.3, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap(),
            0.0
        );
        for eta in [0.2, 0.05] {
            let fast = modulus(&two_jumps(), eta, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta)
                .unwrap()
                .value;
            let slow =
                modulus_oracle(&two_jumps(), eta, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta)
                    .unwrap();
            assert_eq!(fast, slow);
        }
        // eta longer than the interval: only (a, b) or (a, s, b) with a final short gap
        let p = StepPath::new(0.0, 0.0, vec![(0.5, 1.0)], 1.0).unwrap();
        let slow = modulus_oracle(&p, 2.0, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(slow, 1.0);
        let fast = modulus(&p, 2.0, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(fast.value, 1.0);
        // a jump closer to a than eta cannot be isolated
        let p = StepPath::new(0.0, 0.0, vec![(0.3, 1.0)], 1.0).unwrap();
        let slow = modulus_oracle(&p, 0.5, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap();
        assert_eq!(slow, 1.0);
        assert_eq!(
            modulus(&p, 0.5, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap().value,
            1.0
        );
        // but one jump later than eta is
        let p = StepPath::new(0.0, 0.0, vec![(0.7, 1.0)], 1.0).unwrap();
        assert_eq!(
            modulus(&p, 0.5, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta).unwrap().value,
            0.0
        );
    }

    #[test]
    fn oracle_refuses_long_paths() {
        let jumps: Vec<_> = (1..=11).map(|i| (i as f64 / 12.0, i as f64)).collect();
        let p = StepPath::new(0.0, 0.0, jumps, 1.0).unwrap();
        assert!(matches!(
            modulus_oracle(&p, 0.01, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta),
            Err(ModulusError::TooManyJumps(11))
        ));
    }

    #[test]
    fn eta_bar_requires_room() {
        let c = StepPath::constant(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            modulus(&c, 1.0, 0.0, 1.0, Metric::Euclidean, Sparsity::EtaBar),
            Err(ModulusError::Infeasible { .. })
        ));
        assert!(modulus(&c, 0.5, 0.5, 0.5, Metric::Euclidean, Sparsity::Eta).is_err());
    }

    #[test]
    fn threshold_decision_matches_value() {
        let p = two_jumps();
        for delta in [0.5, 1.0, 1.5] {
            let w = modulus(&p, 0.2, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta)
                .unwrap()
                .value;
            let at_least =
                modulus_at_least(&p, 0.2, 0.0, 1.0, Metric::Euclidean, Sparsity::Eta, delta)
                    .unwrap();
            assert_eq!(at_least, w >= delta);
        }
    }

    #[test]
    fn glue_examples() {
        let a = Subdivision::new(vec![0.0, 0.5, 1.0], Sparsity::EtaBar, 0.3).unwrap();
        let b = Subdivision::new(vec![1.0, 1.6, 2.0], Sparsity::EtaBar, 0.3).unwrap();
        let g = glue_subdivisions(&[a.clone(), b]).unwrap();
        assert_eq!(g.breakpoints(), &[0.0, 0.5, 1.0, 1.6, 2.0]);
        assert!(g.is_sparse());
        assert_eq!(glue_subdivisions(&[a.clone()]).unwrap(), a);
        let short = Subdivision::new(vec![1.0, 1.2, 2.0], Sparsity::EtaBar, 0.3).unwrap();
        assert!(matches!(
            glue_subdivisions(&[a.clone(), short]),
            Err(ModulusError::NotSparse { .. })
        ));
        let apart = Subdivision::new(vec![1.1, 1.6, 2.0], Sparsity::EtaBar, 0.3).unwrap();
        assert!(matches!(
            glue_subdivisions(&[a, apart]),
            Err(ModulusError::NotAbutting(..))
        ));
    }
}
