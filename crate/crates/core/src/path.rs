//! Càdlàg step paths, monotone controls and piecewise-linear time changes.
//!
//! All types are immutable once built; operators return new values.

use crate::metric::Metric;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("time {t} outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("jump times must be strictly increasing (index {index}: {prev} then {next})")]
    NonIncreasing { index: usize, prev: f64, next: f64 },
    #[error("jump at {t} outside ({t0}, {horizon}]")]
    JumpOutsideDomain { t: f64, t0: f64, horizon: f64 },
    #[error("invalid horizon {horizon} for start {t0}")]
    InvalidHorizon { t0: f64, horizon: f64 },
    #[error("non-finite time or value: {0}")]
    NonFinite(f64),
    #[error("control must be non-decreasing: {0}")]
    NotMonotone(String),
    #[error("time change anchors must start at (0, 0) and be strictly increasing: {0}")]
    BadAnchors(String),
}

pub type Result<T> = std::result::Result<T, PathError>;

/// A right-continuous piecewise-constant path on `[t0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    t0: f64,
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl StepPath {
    pub fn new(t0: f64, initial: f64, jumps: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        let (times, values) = jumps.into_iter().unzip();
        Self::from_parts(t0, initial, times, values, horizon)
    }

    /// Builds a path from parallel time/value vectors.
    pub fn from_parts(
        t0: f64,
        initial: f64,
        times: Vec<f64>,
        values: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        assert_eq!(times.len(), values.len(), "times and values differ in length");
        if !t0.is_finite() {
            return Err(PathError::NonFinite(t0));
        }
        if !horizon.is_finite() || horizon < t0 {
            return Err(PathError::InvalidHorizon { t0, horizon });
        }
        if initial.is_nan() {
            return Err(PathError::NonFinite(initial));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(PathError::NonFinite(t));
            }
            if t <= t0 || t > horizon {
                return Err(PathError::JumpOutsideDomain { t, t0, horizon });
            }
            if i > 0 && times[i - 1] >= t {
                return Err(PathError::NonIncreasing {
                    index: i,
                    prev: times[i - 1],
                    next: t,
                });
            }
        }
        if let Some(v) = values.iter().find(|v| v.is_nan()) {
            return Err(PathError::NonFinite(*v));
        }
        Ok(StepPath {
            t0,
            initial,
            times,
            values,
            horizon,
        })
    }

    pub fn constant(t0: f64, value: f64, horizon: f64) -> Result<Self> {
        Self::from_parts(t0, value, Vec::new(), Vec::new(), horizon)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_value(&self) -> f64 {
        self.initial
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at the end of the path.
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    /// Value after the first `k` jumps have occurred.
    #[inline]
    pub fn value_after(&self, k: usize) -> f64 {
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    /// Number of jumps at times `<= t`.
    #[inline]
    pub fn jumps_up_to(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Number of jumps at times `< t`.
    #[inline]
    pub fn jumps_before(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t < self.t0 || t > self.horizon || t.is_nan() {
            Err(PathError::OutOfDomain {
                t,
                lo: self.t0,
                hi: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.value_after(self.jumps_up_to(t)))
    }

    /// `f(t-)`, with `f(t0-) = f(t0)`.
    pub fn left_limit(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.value_after(self.jumps_before(t)))
    }

    pub fn jump_size(&self, t: f64, metric: Metric) -> Result<f64> {
        Ok(metric.distance(self.eval(t)?, self.left_limit(t)?))
    }

    /// The path stopped just before `b`: equal to the input on `[t0, b)` and to
    /// `f(b-)` on `[b, horizon]`. A jump exactly at `b` is erased.
    pub fn freeze_before(&self, b: f64) -> Result<StepPath> {
        if b <= self.t0 || b > self.horizon || b.is_nan() {
            return Err(PathError::OutOfDomain {
                t: b,
                lo: self.t0,
                hi: self.horizon,
            });
        }
        let k = self.jumps_before(b);
        Ok(StepPath {
            t0: self.t0,
            initial: self.initial,
            times: self.times[..k].to_vec(),
            values: self.values[..k].to_vec(),
            horizon: self.horizon,
        })
    }

    /// The same path on the shorter domain `[t0, end]`.
    pub fn restrict(&self, end: f64) -> Result<StepPath> {
        if end < self.t0 || end > self.horizon || end.is_nan() {
            return Err(PathError::OutOfDomain {
                t: end,
                lo: self.t0,
                hi: self.horizon,
            });
        }
        let k = self.jumps_up_to(end);
        Ok(StepPath {
            t0: self.t0,
            initial: self.initial,
            times: self.times[..k].to_vec(),
            values: self.values[..k].to_vec(),
            horizon: end,
        })
    }

    /// Maps every jump time (and both domain ends) through `lambda`.
    pub fn time_change(&self, lambda: &PiecewiseLinearTimeChange) -> Result<StepPath> {
        let t0 = lambda.apply(self.t0)?;
        let horizon = lambda.apply(self.horizon)?;
        let times = self
            .times
            .iter()
            .map(|&t| lambda.apply(t))
            .collect::<Result<Vec<_>>>()?;
        StepPath::from_parts(t0, self.initial, times, self.values.clone(), horizon)
    }
}

/// Incremental builder used by the simulators; times must be pushed in
/// strictly increasing order.
#[derive(Debug, Clone)]
pub struct StepPathBuilder {
    t0: f64,
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepPathBuilder {
    pub fn new(t0: f64, initial: f64) -> Self {
        StepPathBuilder {
            t0,
            initial,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, value: f64) {
        debug_assert!(t > self.times.last().copied().unwrap_or(self.t0));
        self.times.push(t);
        self.values.push(value);
    }

    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    pub fn finish(self, horizon: f64) -> Result<StepPath> {
        StepPath::from_parts(self.t0, self.initial, self.times, self.values, horizon)
    }
}

/// A non-decreasing càdlàg function on `[0, horizon]`:
/// `F(t) = slope * min(t, slope_until) + (sum of atoms at times <= t)`, with `F(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneControl {
    slope: f64,
    slope_until: f64,
    atom_sizes: Vec<f64>,
    cumulative: StepPath,
}

impl MonotoneControl {
    /// `atoms` are `(time, size)` pairs with strictly increasing times in `(0, horizon]`.
    pub fn new(slope: f64, atoms: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        if !(slope >= 0.0) || !slope.is_finite() {
            return Err(PathError::NotMonotone(format!("slope {slope}")));
        }
        let mut total = 0.0;
        let mut jumps = Vec::with_capacity(atoms.len());
        let mut sizes = Vec::with_capacity(atoms.len());
        for &(t, size) in &atoms {
            if !(size >= 0.0) || !size.is_finite() {
                return Err(PathError::NotMonotone(format!("atom of size {size} at {t}")));
            }
            total += size;
            jumps.push((t, total));
            sizes.push(size);
        }
        let cumulative = StepPath::new(0.0, 0.0, jumps, horizon)?;
        Ok(MonotoneControl {
            slope,
            slope_until: f64::INFINITY,
            atom_sizes: sizes,
            cumulative,
        })
    }

    /// Rebuilds a control from its cumulative step part (as stored in CSV files).
    pub fn from_step_part(slope: f64, steps: &StepPath) -> Result<Self> {
        if steps.t0() != 0.0 || steps.initial_value() != 0.0 {
            return Err(PathError::NotMonotone(
                "step part must start at (0, 0)".to_string(),
            ));
        }
        let mut prev = 0.0;
        let mut atoms = Vec::with_capacity(steps.jump_count());
        for (t, v) in steps.jumps() {
            atoms.push((t, v - prev));
            prev = v;
        }
        Self::new(slope, atoms, steps.horizon())
    }

    pub fn identity(horizon: f64) -> Result<Self> {
        Self::new(1.0, Vec::new(), horizon)
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Time after which the linear part stops increasing (infinite unless frozen).
    pub fn slope_until(&self) -> f64 {
        self.slope_until
    }

    pub fn horizon(&self) -> f64 {
        self.cumulative.horizon()
    }

    pub fn step_part(&self) -> &StepPath {
        &self.cumulative
    }

    /// `(time, size)` of every atom.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cumulative
            .times()
            .iter()
            .copied()
            .zip(self.atom_sizes.iter().copied())
    }

    pub fn atom_count(&self) -> usize {
        self.atom_sizes.len()
    }

    /// Size of the atom at `t`, zero if there is none.
    pub fn jump_at(&self, t: f64) -> f64 {
        match self.cumulative.times().binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => self.atom_sizes[i],
            Err(_) => 0.0,
        }
    }

    #[inline]
    fn linear(&self, t: f64) -> f64 {
        self.slope * t.min(self.slope_until)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.linear(t) + self.cumulative.eval(t)?)
    }

    pub fn left_limit(&self, t: f64) -> Result<f64> {
        Ok(self.linear(t) + self.cumulative.left_limit(t)?)
    }

    /// Evaluation on `[0, ∞)`, extended constantly past the horizon.
    pub fn eval_extended(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        self.linear(t) + self.cumulative.value_after(self.cumulative.jumps_up_to(t))
    }

    /// The control frozen just before `b`: unchanged on `[0, b)`, equal to `F(b-)` after.
    pub fn freeze(&self, b: f64) -> Result<MonotoneControl> {
        let cumulative = self.cumulative.freeze_before(b)?;
        let k = cumulative.jump_count();
        Ok(MonotoneControl {
            slope: self.slope,
            slope_until: self.slope_until.min(b),
            atom_sizes: self.atom_sizes[..k].to_vec(),
            cumulative,
        })
    }
}

/// Continuous strictly increasing piecewise-linear map with `λ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearTimeChange {
    anchors: Vec<(f64, f64)>,
}

impl PiecewiseLinearTimeChange {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self> {
        match anchors.first() {
            Some(&(0.0, 0.0)) => {}
            _ => return Err(PathError::BadAnchors("first anchor must be (0, 0)".into())),
        }
        if anchors.len() < 2 {
            return Err(PathError::BadAnchors("need at least two anchors".into()));
        }
        for w in anchors.windows(2) {
            let ((s0, l0), (s1, l1)) = (w[0], w[1]);
            if !(s1 > s0 && l1 > l0) || !s1.is_finite() || !l1.is_finite() {
                return Err(PathError::BadAnchors(format!(
                    "({s0}, {l0}) -> ({s1}, {l1})"
                )));
            }
        }
        Ok(PiecewiseLinearTimeChange { anchors })
    }

    pub fn identity(horizon: f64) -> Result<Self> {
        Self::new(vec![(0.0, 0.0), (horizon, horizon)])
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn domain_end(&self) -> f64 {
        self.anchors.last().map(|a| a.0).unwrap_or(0.0)
    }

    pub fn apply(&self, t: f64) -> Result<f64> {
        let end = self.domain_end();
        if !(0.0..=end).contains(&t) {
            return Err(PathError::OutOfDomain { t, lo: 0.0, hi: end });
        }
        let i = self.anchors.partition_point(|a| a.0 <= t);
        if i == self.anchors.len() {
            return Ok(self.anchors[i - 1].1);
        }
        let (s0, l0) = self.anchors[i - 1];
        if s0 == t {
            return Ok(l0);
        }
        let (s1, l1) = self.anchors[i];
        Ok(l0 + (t - s0) * (l1 - l0) / (s1 - s0))
    }

    pub fn inverse(&self) -> PiecewiseLinearTimeChange {
        PiecewiseLinearTimeChange {
            anchors: self.anchors.iter().map(|&(s, l)| (l, s)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_jump() -> StepPath {
        StepPath::new(0.0, 0.0, vec![(0.5, 1.0)], 1.0).unwrap()
    }

    #[test]
    fn eval_is_right_continuous() {
        let c = StepPath::constant(0.0, 5.0, 1.0).unwrap();
        assert_eq!(c.eval(0.3).unwrap(), 5.0);
        let p = one_jump();
        assert_eq!(p.eval(0.5).unwrap(), 1.0);
        assert_eq!(p.eval(0.49).unwrap(), 0.0);
        assert!(matches!(p.eval(1.5), Err(PathError::OutOfDomain { .. })));
        assert!(p.eval(-0.1).is_err());
    }

    #[test]
    fn left_limits() {
        let p = one_jump();
        assert_eq!(p.left_limit(0.5).unwrap(), 0.0);
        assert_eq!(p.left_limit(0.0).unwrap(), 0.0);
        assert_eq!(p.left_limit(0.7).unwrap(), 1.0);
        assert!(p.left_limit(2.0).is_err());
    }

    #[test]
    fn jump_sizes() {
        let p = one_jump();
        assert_eq!(p.jump_size(0.5, Metric::Euclidean).unwrap(), 1.0);
        assert_eq!(p.jump_size(0.3, Metric::Euclidean).unwrap(), 0.0);
        let big = StepPath::new(0.0, 0.0, vec![(0.5, 3.0)], 1.0).unwrap();
        assert_eq!(big.jump_size(0.5, Metric::BoundedEuclidean).unwrap(), 1.0);
    }

    #[test]
    fn construction_rejects_bad_jumps() {
        assert!(matches!(
            StepPath::new(0.0, 0.0, vec![(0.5, 1.0), (0.5, 2.0)], 1.0),
            Err(PathError::NonIncreasing { .. })
        ));
        assert!(StepPath::new(0.0, 0.0, vec![(0.0, 1.0)], 1.0).is_err());
        assert!(StepPath::new(0.0, 0.0, vec![(1.5, 1.0)], 1.0).is_err());
        assert!(StepPath::new(1.0, 0.0, vec![], 0.5).is_err());
    }

    #[test]
    fn freeze_erases_jump_at_b() {
        let p = one_jump();
        let f = p.freeze_before(0.5).unwrap();
        assert_eq!(f.jump_count(), 0);
        assert_eq!(f.eval(0.8).unwrap(), 0.0);
        let f = p.freeze_before(0.4).unwrap();
        assert_eq!(f.eval(1.0).unwrap(), 0.0);
        let f = p.freeze_before(0.9).unwrap();
        assert_eq!(f.eval(0.6).unwrap(), 1.0);
        assert_eq!(f.eval(0.2).unwrap(), 0.0);
        assert!(p.freeze_before(0.0).is_err());
    }

    #[test]
    fn control_evaluation() {
        let id = MonotoneControl::identity(3.0).unwrap();
        assert_eq!(id.eval(2.0).unwrap(), 2.0);
        let f = MonotoneControl::new(1.0, vec![(0.5, 0.5), (0.75, 0.5), (0.875, 0.5)], 1.0)
            .unwrap();
        assert_eq!(f.eval(0.9).unwrap(), 2.4);
        assert_eq!(f.left_limit(0.5).unwrap(), 0.5);
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.jump_at(0.75), 0.5);
        assert_eq!(f.jump_at(0.7), 0.0);
        assert!(MonotoneControl::new(1.0, vec![(0.5, -0.1)], 1.0).is_err());
        assert!(MonotoneControl::new(-1.0, vec![], 1.0).is_err());
    }

    #[test]
    fn control_freeze() {
        let id = MonotoneControl::identity(2.0).unwrap();
        let frozen = id.freeze(1.0).unwrap();
        assert_eq!(frozen.eval(1.5).unwrap(), 1.0);
        assert_eq!(frozen.eval(0.5).unwrap(), 0.5);
        let f = MonotoneControl::new(0.0, vec![(1.0, 0.5)], 2.0).unwrap();
        let frozen = f.freeze(1.0).unwrap();
        assert_eq!(frozen.eval(1.5).unwrap(), 0.0);
        assert_eq!(frozen.atom_count(), 0);
        let g = MonotoneControl::new(1.0, vec![(0.5, 0.25)], 2.0).unwrap();
        let same = g.freeze(2.0).unwrap();
        for t in [0.0, 0.3, 0.5, 1.0, 1.9] {
            assert_eq!(same.eval(t).unwrap(), g.eval(t).unwrap());
        }
    }

    #[test]
    fn time_change_moves_jumps() {
        let p = StepPath::new(0.0, 0.0, vec![(0.5, 1.0), (1.0, 2.0)], 2.0).unwrap();
        let id = PiecewiseLinearTimeChange::identity(2.0).unwrap();
        assert_eq!(p.time_change(&id).unwrap(), p);
        let lam =
            PiecewiseLinearTimeChange::new(vec![(0.0, 0.0), (1.0, 1.1), (2.0, 2.0)]).unwrap();
        let q = p.time_change(&lam).unwrap();
        assert_eq!(q.times()[1], 1.1);
        assert!((q.times()[0] - 0.55).abs() < 1e-15);
        assert_eq!(q.values(), p.values());
        assert!(PiecewiseLinearTimeChange::new(vec![(0.0, 0.0), (1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(PiecewiseLinearTimeChange::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)]).is_err());
    }
}
