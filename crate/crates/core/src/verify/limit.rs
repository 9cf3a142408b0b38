//! Distance in law between `X^n(T)` and the diffusion limit at `T`.

use serde::Serialize;

use super::{require_replicas, PathModel, Result, VerifyError};
use crate::sim::{run_replicas, NoRecord, RngStream};

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(VerifyError::Domain("KS needs two non-empty samples without NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // step past every copy of the smaller value in both samples
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Samples of `max(X(T), 0)`. Negative values only arise from absorbed
/// fractional states of the discrete model, which the limit reads as zero.
pub fn terminal_samples<M: PathModel>(model: &M, replicas: usize, master: u64) -> Result<Vec<f64>> {
    run_replicas(master, replicas, |_, rng| {
        Ok(model
            .run(0.0, model.x0(), model.horizon(), rng, &mut NoRecord)?
            .max(0.0))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub n: Option<u32>,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub replicas: usize,
    pub rows: Vec<LimitRow>,
    /// KS distance never grows along the model grid.
    pub decreasing: bool,
    pub threshold: f64,
    /// The last model is within `threshold` of the reference.
    pub last_within: bool,
    pub seed: u64,
}

/// KS distance between the terminal laws of each model and of `reference`,
/// `replicas` samples each.
pub fn limit_comparison<M: PathModel, R: PathModel>(
    models: &[M],
    reference: &R,
    threshold: f64,
    replicas: usize,
    seed: u64,
) -> Result<LimitReport> {
    require_replicas(replicas)?;
    if models.is_empty() {
        return Err(VerifyError::Domain("no models given".into()));
    }
    let limit = terminal_samples(reference, replicas, RngStream::derive_seed(seed, "limit/reference"))?;
    let mut rows = Vec::with_capacity(models.len());
    for (j, model) in models.iter().enumerate() {
        let label = match model.scale() {
            Some(n) => format!("limit/n{n}"),
            None => format!("limit/m{j}"),
        };
        let xs = terminal_samples(model, replicas, RngStream::derive_seed(seed, &label))?;
        rows.push(LimitRow {
            n: model.scale(),
            ks: ks_statistic(&xs, &limit)?,
        });
    }
    Ok(LimitReport {
        replicas,
        decreasing: rows.windows(2).all(|w| w[1].ks <= w[0].ks),
        last_within: rows.last().is_some_and(|r| r.ks < threshold),
        threshold,
        rows,
        seed,
    })
}
