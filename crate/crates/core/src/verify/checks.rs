//! Monte Carlo estimates behind the tightness hypotheses and conclusion.

use serde::Serialize;

use super::stopping::hitting_times;
use super::{require_replicas, MCEstimate, PathModel, Result, VerifyError};
use crate::metric::Metric;
use crate::modulus::{modulus_at_least, Sparsity};
use crate::sim::{run_replicas, NoRecord, PathRecorder, RngStream, RunningMax};
use crate::subdivision::{freeze_control, window_increment_sup};

/// Seed label of model `j`, keyed by its scale when it has one so that an
/// estimate does not depend on where the model sits in the grid.
fn model_label<M: PathModel>(check: &str, model: &M, j: usize) -> String {
    match model.scale() {
        Some(n) => format!("{check}/n{n}"),
        None => format!("{check}/m{j}"),
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn strictly_increasing(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(VerifyError::Domain(format!("{what} must be non-empty, finite and increasing")));
    }
    Ok(())
}

/// Indices of the (at most) two models with the largest scale.
fn largest_two<M: PathModel>(models: &[M]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..models.len()).collect();
    idx.sort_by_key(|&j| (models[j].scale(), j));
    idx.into_iter().rev().take(2).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Row {
    pub n: Option<u32>,
    pub k: f64,
    /// `P(sup_{t <= T} X(t) >= K)`.
    pub estimate: MCEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Verdict {
    pub epsilon: f64,
    /// Smallest `K` whose proxy is at most `epsilon`, if any.
    pub k: Option<f64>,
    /// Per `K`, the largest estimate over the two largest scales.
    pub proxy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Report {
    pub k_grid: Vec<f64>,
    pub rows: Vec<A1Row>,
    pub verdicts: Vec<A1Verdict>,
    pub seed: u64,
}

/// Exceedance probabilities of the running supremum, one sample per replica
/// shared across the `K` grid. The limsup over `n` is approximated by the
/// maximum over the two largest scales.
pub fn check_a1<M: PathModel>(
    models: &[M],
    k_grid: &[f64],
    eps_levels: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<A1Report> {
    require_replicas(replicas)?;
    strictly_increasing(k_grid, "K grid")?;
    if models.is_empty() {
        return Err(VerifyError::Domain("no models given".into()));
    }
    let mut rows = Vec::with_capacity(models.len() * k_grid.len());
    for (j, model) in models.iter().enumerate() {
        let master = RngStream::derive_seed(seed, &model_label("a1", model, j));
        let sups = collect(run_replicas(master, replicas, |_, rng| {
            let mut max = RunningMax::default();
            model.run(0.0, model.x0(), model.horizon(), rng, &mut max)?;
            Ok(max.0)
        }))?;
        for &k in k_grid {
            rows.push(A1Row {
                n: model.scale(),
                k,
                estimate: MCEstimate::from_indicators(sups.iter().map(|&s| s >= k), master)?,
            });
        }
    }
    let top = largest_two(models);
    let proxy: Vec<f64> = (0..k_grid.len())
        .map(|i| {
            top.iter()
                .map(|&j| rows[j * k_grid.len() + i].estimate.mean)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let verdicts = eps_levels
        .iter()
        .map(|&epsilon| A1Verdict {
            epsilon,
            k: k_grid
                .iter()
                .zip(&proxy)
                .find(|(_, &p)| p <= epsilon)
                .map(|(&k, _)| k),
            proxy: proxy.clone(),
        })
        .collect();
    Ok(A1Report {
        k_grid: k_grid.to_vec(),
        rows,
        verdicts,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A2Row {
    pub s: f64,
    pub t: f64,
    pub x0: f64,
    /// `F(t) - F(s)`.
    pub increment: f64,
    /// `E[(1 ∧ d(x0, X(t)))^2 | X(s) = x0]`.
    pub estimate: MCEstimate,
    /// `estimate / increment`, infinite when only the estimate is positive.
    pub ratio: f64,
    /// `(mean - ci) / increment`, clamped at zero.
    pub ratio_lower: f64,
    /// `mean - ci > C_K * increment`.
    pub violation: bool,
    /// Zero increment with an estimate positive beyond its interval.
    pub hard_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A2Report {
    pub k: f64,
    pub c_k: f64,
    /// Set in the restricted mode, where only points with increment at most
    /// this value are kept.
    pub eta_bar0: Option<f64>,
    pub skipped: usize,
    pub rows: Vec<A2Row>,
    /// Largest `ratio` over the grid: the empirical constant.
    pub max_ratio: f64,
    pub max_ratio_lower: f64,
    pub holds: bool,
    pub seed: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Conditional oscillations, estimated by restarting the model at `(s, x0)`
/// for every grid point `(s, t, x0)`.
#[allow(clippy::too_many_arguments)]
pub fn check_a2<M: PathModel>(
    model: &M,
    grid: &[(f64, f64, f64)],
    k: f64,
    c_k: f64,
    eta_bar0: Option<f64>,
    metric: Metric,
    replicas: usize,
    seed: u64,
) -> Result<A2Report> {
    require_replicas(replicas)?;
    if !(c_k > 0.0) || !(k >= 0.0) || eta_bar0.is_some_and(|e| !(e > 0.0)) {
        return Err(VerifyError::Domain(format!(
            "need K >= 0, C_K > 0 and a positive eta_bar0, got {k}, {c_k}, {eta_bar0:?}"
        )));
    }
    let horizon = model.horizon();
    let control = model.control()?;
    let bounded = metric.bounded();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (i, &(s, t, x0)) in grid.iter().enumerate() {
        if !(0.0 <= s && s <= t && t <= horizon) || !(0.0 <= x0 && x0 <= k) {
            return Err(VerifyError::Domain(format!(
                "grid point (s, t, x0) = ({s}, {t}, {x0}) outside 0 <= s <= t <= {horizon}, 0 <= x0 <= {k}"
            )));
        }
        let increment = control.eval(t)? - control.eval(s)?;
        if eta_bar0.is_some_and(|e| increment > e) {
            skipped += 1;
            continue;
        }
        let master = RngStream::derive_seed(seed, &format!("a2/{i}"));
        let samples = collect(run_replicas(master, replicas, |_, rng| {
            let x = model.run(s, x0, t, rng, &mut NoRecord)?;
            Ok(bounded.distance(x0, x).powi(2))
        }))?;
        let estimate = MCEstimate::from_samples(samples, master)?;
        let lower = estimate.lower().max(0.0);
        rows.push(A2Row {
            s,
            t,
            x0,
            increment,
            ratio: ratio(estimate.mean, increment),
            ratio_lower: ratio(lower, increment),
            violation: lower > c_k * increment,
            hard_violation: increment == 0.0 && lower > 0.0,
            estimate,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_ratio_lower = rows.iter().map(|r| r.ratio_lower).fold(0.0, f64::max);
    Ok(A2Report {
        k,
        c_k,
        eta_bar0,
        skipped,
        holds: rows.iter().all(|r| !r.violation && !r.hard_violation),
        rows,
        max_ratio,
        max_ratio_lower,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessCell {
    /// Position of the model in the grid.
    pub model: usize,
    pub n: Option<u32>,
    pub eta: f64,
    pub delta: f64,
    /// `P(w'(X, eta, [0, T]) >= delta)`.
    pub estimate: MCEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub metric: Metric,
    pub eta_grid: Vec<f64>,
    pub deltas: Vec<f64>,
    pub cells: Vec<TightnessCell>,
    pub seed: u64,
}

impl TightnessReport {
    pub fn cell(&self, model: usize, eta: f64, delta: f64) -> Option<&TightnessCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.eta == eta && c.delta == delta)
    }

    /// Whether, for one model, the estimate never grows by more than the
    /// pooled interval as `eta` decreases.
    pub fn non_increasing_as_eta_shrinks(&self, model: usize, delta: f64) -> bool {
        let mut cells: Vec<&TightnessCell> = self
            .cells
            .iter()
            .filter(|c| c.model == model && c.delta == delta)
            .collect();
        cells.sort_by(|a, b| b.eta.total_cmp(&a.eta));
        cells.windows(2).all(|w| {
            let (big, small) = (&w[0].estimate, &w[1].estimate);
            small.mean - big.mean <= big.pooled_ci(small)
        })
    }

    /// Whether, at one `eta`, the estimate never grows by more than the
    /// pooled interval along the model grid.
    pub fn non_increasing_along_models(&self, eta: f64, delta: f64) -> bool {
        let mut cells: Vec<&TightnessCell> = self
            .cells
            .iter()
            .filter(|c| c.eta == eta && c.delta == delta)
            .collect();
        cells.sort_by_key(|c| c.model);
        cells.windows(2).all(|w| {
            let (a, b) = (&w[0].estimate, &w[1].estimate);
            b.mean - a.mean <= a.pooled_ci(b)
        })
    }
}

/// `P(w'(X, eta, [0, T]) >= delta)` over an `eta` by `delta` grid, all cells
/// of one model sharing the same simulated paths.
pub fn tightness_curve<M: PathModel>(
    models: &[M],
    eta_grid: &[f64],
    deltas: &[f64],
    metric: Metric,
    replicas: usize,
    seed: u64,
) -> Result<TightnessReport> {
    require_replicas(replicas)?;
    if models.is_empty() || eta_grid.is_empty() || deltas.is_empty() {
        return Err(VerifyError::Domain("empty model, eta or delta grid".into()));
    }
    if eta_grid.iter().chain(deltas).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(VerifyError::Domain("eta and delta values must be positive".into()));
    }
    let mut cells = Vec::new();
    for (j, model) in models.iter().enumerate() {
        let master = RngStream::derive_seed(seed, &model_label("tightness", model, j));
        let horizon = model.horizon();
        // one row of indicators per replica, ordered eta-major
        let hits = collect(run_replicas(master, replicas, |_, rng| {
            let path = model.path(rng)?;
            let mut row = Vec::with_capacity(eta_grid.len() * deltas.len());
            for &eta in eta_grid {
                for &delta in deltas {
                    row.push(modulus_at_least(&path, eta, 0.0, horizon, metric, Sparsity::Eta, delta)?);
                }
            }
            Ok(row)
        }))?;
        for (a, &eta) in eta_grid.iter().enumerate() {
            for (b, &delta) in deltas.iter().enumerate() {
                let col = a * deltas.len() + b;
                cells.push(TightnessCell {
                    model: j,
                    n: model.scale(),
                    eta,
                    delta,
                    estimate: MCEstimate::from_indicators(hits.iter().map(|r| r[col]), master)?,
                });
            }
        }
    }
    Ok(TightnessReport {
        metric,
        eta_grid: eta_grid.to_vec(),
        deltas: deltas.to_vec(),
        cells,
        seed,
    })
}

/// Window, state and stopping-time family of the M-proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MProxyConfig {
    pub lo: f64,
    pub hi: f64,
    pub x0: f64,
    pub eta: f64,
    pub k: f64,
    /// Threshold of the hitting times.
    pub epsilon: f64,
    pub c_k: f64,
    /// Hitting-time pairs `(Υ(i), Υ(i+1) ∧ (Υ(i) + eta) ∧ hi)` for `i < max_hits`.
    pub max_hits: usize,
    /// Deterministic pairs `(s, (s + eta) ∧ hi)` on this many evenly spaced `s`.
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MProxyReport {
    pub config: MProxyConfig,
    /// One estimate per candidate pair, hitting-time pairs first.
    pub candidates: Vec<MCEstimate>,
    /// The candidate with the largest mean.
    pub proxy: MCEstimate,
    /// `5 C_K sup_{lo <= y <= hi} (F_l(y + 2 eta) - F_l(y))` with `F` frozen at `hi`.
    pub bound: f64,
    /// `proxy.mean - proxy.ci <= bound`.
    pub holds: bool,
    pub seed: u64,
}

/// A lower proxy for the supremum over stopping-time pairs of
/// `E[d'(X_l(U), X_l(V))^2 1{V <= U <= V + eta} 1{both in [0, K]} | X_l(lo) = x0]`,
/// restricted to hitting times and deterministic times. Only a necessary
/// condition for the bound is checked.
pub fn m_proxy<M: PathModel>(
    model: &M,
    config: MProxyConfig,
    metric: Metric,
    replicas: usize,
    seed: u64,
) -> Result<MProxyReport> {
    require_replicas(replicas)?;
    let MProxyConfig {
        lo,
        hi,
        x0,
        eta,
        k,
        epsilon,
        c_k,
        max_hits,
        grid_points,
    } = config;
    if !(0.0 <= lo && lo < hi && hi <= model.horizon())
        || !(eta > 0.0 && epsilon > 0.0 && c_k > 0.0)
        || !(0.0 <= x0 && x0 <= k)
        || max_hits + grid_points == 0
    {
        return Err(VerifyError::Domain(format!("invalid proxy configuration {config:?}")));
    }
    let bounded = metric.bounded();
    let frozen_control = freeze_control(&model.control()?, hi)?;
    let bound = 5.0 * c_k * window_increment_sup(&frozen_control, lo, hi, eta)?;
    let starts: Vec<f64> = (0..grid_points)
        .map(|j| {
            if grid_points == 1 {
                lo
            } else {
                lo + (hi - lo) * j as f64 / (grid_points - 1) as f64
            }
        })
        .collect();

    let master = RngStream::derive_seed(seed, "mproxy");
    let rows = collect(run_replicas(master, replicas, |_, rng| {
        let mut rec = PathRecorder::default();
        model.run(lo, x0, hi, rng, &mut rec)?;
        let frozen = rec.finish(hi)?.freeze_before(hi)?;
        let mut upsilon = vec![lo];
        upsilon.extend(hitting_times(&frozen, lo, epsilon, bounded, true)?);
        let value = |v: f64, u: f64| -> Result<f64> {
            let (a, b) = (frozen.eval(v)?, frozen.eval(u)?);
            let inside = (0.0..=k).contains(&a) && (0.0..=k).contains(&b);
            Ok(if inside { bounded.distance(a, b).powi(2) } else { 0.0 })
        };
        let mut row = Vec::with_capacity(max_hits + grid_points);
        for i in 0..max_hits {
            // an infinite Υ(i) sits at hi on the frozen path, where both ends agree
            row.push(match upsilon.get(i) {
                Some(&v) => {
                    let next = upsilon.get(i + 1).copied().unwrap_or(f64::INFINITY);
                    value(v, next.min(v + eta).min(hi))?
                }
                None => 0.0,
            });
        }
        for &s in &starts {
            row.push(value(s, (s + eta).min(hi))?);
        }
        Ok(row)
    }))?;
    let candidates = (0..max_hits + grid_points)
        .map(|c| MCEstimate::from_samples(rows.iter().map(|r| r[c]).collect(), master))
        .collect::<Result<Vec<_>>>()?;
    let proxy = *candidates
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("at least one candidate");
    Ok(MProxyReport {
        config,
        candidates,
        holds: proxy.lower() <= bound,
        proxy,
        bound,
        seed,
    })
}
