//! Batch execution of the checks in a config, with atomic output files and a
//! manifest written last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tightkit_core::io::write_path_csv;
use tightkit_core::sim::{
    run_replicas, simulate_gw, PathSink, RngStream,
};
use tightkit_core::subdivision::construct_b;
use tightkit_core::verify::{
    check_a1, check_a2, check_lemma_decomposition, limit_comparison, m_proxy, tightness_curve,
    DiffusionModel, LbpwcModel, MCEstimate, PathModel, VerifyError,
};

use crate::config::{CheckKind, ExperimentConfig, ModelKind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("check `{check}` failed: {message}")]
    Check { check: String, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    pub check: String,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    /// `None` for checks without a verdict.
    pub verdict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub replicas: usize,
    pub status: RunStatus,
    pub error: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<CheckOutput>,
}

impl RunManifest {
    /// Whether every check with a verdict passed.
    pub fn all_hold(&self) -> bool {
        self.outputs.iter().all(|o| o.verdict != Some(false))
    }

    pub fn read(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| RunError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}

pub const MANIFEST: &str = "manifest.json";

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place, so a reader never sees a partial file. If `fill` fails the
/// temporary file is removed and `path` is left untouched.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), RunError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let io = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(io)?;
        buf.flush().map_err(io)?;
    }
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// Collects the files one check writes.
struct Emitter<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Emitter<'_> {
    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        write_atomic(&self.dir.join(name), |w| w.write_all(bytes))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), RunError> {
        let bytes = csv_bytes(rows).map_err(|source| RunError::Io {
            path: self.dir.join(name),
            source,
        })?;
        self.bytes(name, &bytes)
    }

    /// `{check, grid, estimates, verdict, seed}`.
    fn report<T: Serialize>(&mut self, check: CheckKind, grid: Value, estimates: &[T], verdict: Value, seed: u64) -> Result<(), RunError> {
        let doc = json!({
            "check": check.name(),
            "grid": grid,
            "estimates": estimates,
            "verdict": verdict,
            "seed": seed,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        self.bytes(&format!("{}.json", check.name()), text.as_bytes())
    }
}

/// The continuous-time models of a config, one per scale for the discrete model.
enum Models {
    Lbpwc(Vec<LbpwcModel>),
    Diffusion(Vec<DiffusionModel>),
}

macro_rules! with_models {
    ($models:expr, |$ms:ident| $body:expr) => {
        match $models {
            Models::Lbpwc($ms) => $body,
            Models::Diffusion($ms) => $body,
        }
    };
}

fn build_models(cfg: &ExperimentConfig) -> Result<Models, VerifyError> {
    Ok(match cfg.model {
        ModelKind::Lbpwc => Models::Lbpwc(
            cfg.n_grid
                .iter()
                .map(|&n| LbpwcModel::new(cfg.params.with_n(n), cfg.schedule.clone()))
                .collect::<Result<_, _>>()?,
        ),
        ModelKind::Diffusion => Models::Diffusion(vec![diffusion_of(cfg)]),
        ModelKind::Gw => unreachable!("gw has no continuous-time checks"),
    })
}

/// The diffusion limit of the discrete model. For `model.kind = "diffusion"`
/// the parameters are read as the discrete model's, so both kinds of run on
/// one config describe the same limit.
fn diffusion_of(cfg: &ExperimentConfig) -> DiffusionModel {
    DiffusionModel {
        params: cfg.params.diffusion(),
        schedule: cfg.schedule.clone(),
        dt: cfg.dt,
    }
}

fn n_label(n: Option<u32>) -> String {
    n.map_or_else(|| "inf".to_string(), |n| n.to_string())
}

/// Runs every check of `cfg` in order under `cfg.out`. On a hard error the
/// manifest is still written, flagged incomplete, before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, RunError> {
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        pool.install(|| run_in_pool(cfg))
    } else {
        run_in_pool(cfg)
    }
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunManifest, RunError> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = RunManifest {
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        status: RunStatus::Incomplete,
        error: None,
        started_unix: now(),
        finished_unix: 0,
        outputs: Vec::new(),
    };
    let mut failure = None;
    for &check in &cfg.checks {
        let mut em = Emitter {
            dir,
            files: Vec::new(),
        };
        match run_check(cfg, check, &mut em) {
            Ok(verdict) => manifest.outputs.push(CheckOutput {
                check: check.name().to_string(),
                files: em.files,
                verdict,
            }),
            Err(e) => {
                let err = match e {
                    CheckFailure::Run(e) => e,
                    CheckFailure::Verify(e) => RunError::Check {
                        check: check.name().to_string(),
                        message: e.to_string(),
                    },
                };
                manifest.error = Some(err.to_string());
                failure = Some(err);
                break;
            }
        }
    }
    if failure.is_none() {
        manifest.status = RunStatus::Complete;
    }
    manifest.finished_unix = now();
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&dir.join(MANIFEST), |w| w.write_all(text.as_bytes()))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

enum CheckFailure {
    Run(RunError),
    Verify(VerifyError),
}

impl From<RunError> for CheckFailure {
    fn from(e: RunError) -> Self {
        CheckFailure::Run(e)
    }
}

impl<E: Into<VerifyError>> From<E> for CheckFailure {
    fn from(e: E) -> Self {
        CheckFailure::Verify(e.into())
    }
}

type CheckResult = Result<Option<bool>, CheckFailure>;

fn run_check(cfg: &ExperimentConfig, check: CheckKind, em: &mut Emitter) -> CheckResult {
    if check == CheckKind::Simulate && cfg.model == ModelKind::Gw {
        return simulate_gw_check(cfg, em);
    }
    let models = build_models(cfg)?;
    with_models!(&models, |ms| match check {
        CheckKind::Simulate => simulate_check(cfg, ms, em),
        CheckKind::A1 => a1_check(cfg, ms, em),
        CheckKind::A2 => a2_check(cfg, ms, None, check, em),
        CheckKind::A2prime => a2_check(cfg, ms, cfg.a2.eta_bar0, check, em),
        CheckKind::Lemma23 => lemma_check(cfg, ms, em),
        CheckKind::Tightness => tightness_check(cfg, ms, em),
        CheckKind::Mproxy => mproxy_check(cfg, ms, em),
        CheckKind::Limit => limit_check(cfg, ms, em),
    })
}

/// Values of a path at fixed times, filled in as the path streams by.
struct GridSink<'a> {
    times: &'a [f64],
    values: Vec<f64>,
    current: f64,
}

impl<'a> GridSink<'a> {
    fn new(times: &'a [f64]) -> Self {
        GridSink {
            times,
            values: Vec::with_capacity(times.len()),
            current: f64::NAN,
        }
    }

    fn finish(mut self) -> Vec<f64> {
        self.values.resize(self.times.len(), self.current);
        self.values
    }
}

impl PathSink for GridSink<'_> {
    fn start(&mut self, _: f64, x: f64) {
        self.values.clear();
        self.current = x;
    }

    #[inline]
    fn jump(&mut self, t: f64, x: f64) {
        // the value at a grid time equal to t is the post-jump one
        while self.values.len() < self.times.len() && self.times[self.values.len()] < t {
            self.values.push(self.current);
        }
        self.current = x;
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    t: f64,
    mean: f64,
    var: f64,
    p95: f64,
}

/// Nearest-rank 95th percentile.
fn p95(sorted: &[f64]) -> f64 {
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(times: &[f64], samples: Vec<Vec<f64>>, seed: u64) -> Result<Vec<SummaryRow>, VerifyError> {
    times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            col.sort_by(f64::total_cmp);
            let p = p95(&col);
            let est = MCEstimate::from_samples(col, seed)?;
            Ok(SummaryRow {
                t,
                mean: est.mean,
                var: est.variance,
                p95: p,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SimulateEstimate {
    n: String,
    t: f64,
    mean: f64,
    var: f64,
    p95: f64,
    count: usize,
}

fn simulate_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let horizon = cfg.params.horizon;
    let last = (cfg.simulate.times - 1) as f64;
    let times: Vec<f64> = (0..cfg.simulate.times)
        .map(|j| if j as f64 == last { horizon } else { horizon * j as f64 / last })
        .collect();
    let mut estimates = Vec::new();
    for (j, model) in models.iter().enumerate() {
        let label = n_label(model.scale());
        let master = RngStream::derive_seed(cfg.seed, &format!("simulate/n{label}/{j}"));
        let stem = format!("simulate_n{label}");
        let samples: Vec<Vec<f64>> = if cfg.simulate.paths {
            let paths = run_replicas(master, cfg.replicas, |_, rng| model.path(rng))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            for (i, p) in paths.iter().enumerate() {
                let name = format!("paths_n{label}/replica_{i:06}.csv");
                write_atomic(&em.dir.join(&name), |w| {
                    write_path_csv(p, w).map_err(|e| std::io::Error::other(e.to_string()))
                })?;
                em.files.push(name);
            }
            paths
                .iter()
                .map(|p| times.iter().map(|&t| p.eval(t).expect("grid inside the horizon")).collect())
                .collect()
        } else {
            run_replicas(master, cfg.replicas, |_, rng| {
                let mut sink = GridSink::new(&times);
                model.run(0.0, model.x0(), horizon, rng, &mut sink)?;
                Ok(sink.finish())
            })
            .into_iter()
            .collect::<Result<Vec<_>, VerifyError>>()?
        };
        let rows = summarize(&times, samples, master)?;
        em.csv(&format!("{stem}.csv"), &rows)?;
        estimates.extend(rows.iter().map(|r| SimulateEstimate {
            n: label.clone(),
            t: r.t,
            mean: r.mean,
            var: r.var,
            p95: r.p95,
            count: cfg.replicas,
        }));
    }
    em.report(CheckKind::Simulate, json!({ "t": times, "n": cfg.n_grid }), &estimates, Value::Null, cfg.seed)?;
    Ok(None)
}

fn simulate_gw_check(cfg: &ExperimentConfig, em: &mut Emitter) -> CheckResult {
    let gw = cfg.gw.as_ref().expect("validated gw section");
    let master = RngStream::derive_seed(cfg.seed, "simulate/gw");
    let trajectories = run_replicas(master, cfg.replicas, |_, rng| {
        simulate_gw(gw.z0, &gw.laws, gw.generations, gw.cap, rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| RunError::Check {
        check: "simulate".into(),
        message: e.to_string(),
    })?;
    if cfg.simulate.paths {
        for (i, traj) in trajectories.iter().enumerate() {
            let rows: Vec<(usize, u64)> = traj.iter().copied().enumerate().collect();
            let bytes = csv_bytes(&rows).map_err(|source| RunError::Io {
                path: em.dir.to_path_buf(),
                source,
            })?;
            let mut text = b"generation,z\n".to_vec();
            text.extend(bytes);
            em.bytes(&format!("paths_gw/replica_{i:06}.csv"), &text)?;
        }
    }
    let times: Vec<f64> = (0..=gw.generations).map(|k| k as f64).collect();
    let samples = trajectories
        .iter()
        .map(|z| z.iter().map(|&v| v as f64).collect())
        .collect();
    let rows = summarize(&times, samples, master)?;
    em.csv("simulate_gw.csv", &rows)?;
    let estimates: Vec<SimulateEstimate> = rows
        .iter()
        .map(|r| SimulateEstimate {
            n: "gw".into(),
            t: r.t,
            mean: r.mean,
            var: r.var,
            p95: r.p95,
            count: cfg.replicas,
        })
        .collect();
    em.report(CheckKind::Simulate, json!({ "generation": times }), &estimates, Value::Null, cfg.seed)?;
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
struct A1Out {
    n: String,
    k: f64,
    p_hat: f64,
    ci: f64,
    count: usize,
}

fn a1_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let r = check_a1(models, &cfg.k_grid, &cfg.epsilons, cfg.replicas, cfg.seed)?;
    let rows: Vec<A1Out> = r
        .rows
        .iter()
        .map(|row| A1Out {
            n: n_label(row.n),
            k: row.k,
            p_hat: row.estimate.mean,
            ci: row.estimate.ci_halfwidth,
            count: row.estimate.count,
        })
        .collect();
    let holds = r.verdicts.iter().all(|v| v.k.is_some());
    em.csv("a1.csv", &rows)?;
    em.report(
        CheckKind::A1,
        json!({ "n": cfg.n_grid, "k": cfg.k_grid, "epsilon": cfg.epsilons }),
        &rows,
        json!({
            "limsup_proxy": "max over the two largest n",
            "by_epsilon": r.verdicts,
            "holds": holds,
        }),
        cfg.seed,
    )?;
    Ok(Some(holds))
}

#[derive(Debug, Clone, Serialize)]
struct A2Out {
    n: String,
    s: f64,
    t: f64,
    x0: f64,
    increment: f64,
    mean: f64,
    ci: f64,
    ratio: f64,
    ratio_lower: f64,
    violation: bool,
    hard_violation: bool,
}

fn a2_check<M: PathModel>(
    cfg: &ExperimentConfig,
    models: &[M],
    eta_bar0: Option<f64>,
    check: CheckKind,
    em: &mut Emitter,
) -> CheckResult {
    let mut rows = Vec::new();
    let mut per_model = Vec::new();
    for model in models {
        let seed = RngStream::derive_seed(cfg.seed, &format!("{check}/n{}", n_label(model.scale())));
        let r = check_a2(model, &cfg.points, cfg.a2.k, cfg.a2.c_k, eta_bar0, cfg.metric, cfg.replicas, seed)?;
        rows.extend(r.rows.iter().map(|row| A2Out {
            n: n_label(model.scale()),
            s: row.s,
            t: row.t,
            x0: row.x0,
            increment: row.increment,
            mean: row.estimate.mean,
            ci: row.estimate.ci_halfwidth,
            ratio: row.ratio,
            ratio_lower: row.ratio_lower,
            violation: row.violation,
            hard_violation: row.hard_violation,
        }));
        per_model.push(json!({
            "n": n_label(model.scale()),
            "max_ratio": r.max_ratio,
            "max_ratio_lower": r.max_ratio_lower,
            "skipped": r.skipped,
            "holds": r.holds,
        }));
    }
    let holds = per_model.iter().all(|m| m["holds"] == json!(true));
    em.csv(&format!("{check}.csv"), &rows)?;
    em.report(
        check,
        json!({ "n": cfg.n_grid, "points": cfg.points, "k": cfg.a2.k, "eta_bar0": eta_bar0 }),
        &rows,
        json!({
            "c_k": cfg.a2.c_k,
            "checked_k": [cfg.a2.k],
            "by_n": per_model,
            "holds": holds,
        }),
        cfg.seed,
    )?;
    Ok(Some(holds))
}

#[derive(Debug, Clone, Serialize)]
struct LemmaOut {
    case: usize,
    n: String,
    epsilon: f64,
    eta: f64,
    m: usize,
    eta0: f64,
    windows: usize,
    max_lhs: f64,
    min_slack: f64,
    holds: bool,
}

fn lemma_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let opts = cfg.lemma23;
    let subdivisions = models
        .iter()
        .map(|m| Ok(construct_b(&m.control()?, m.horizon(), opts.mesh_epsilon)?.subdivision))
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let master = RngStream::derive_seed(cfg.seed, "lemma23");
    let rows = run_replicas(master, opts.cases, |i, rng| {
        let j = i as usize % models.len();
        let bn = &subdivisions[j];
        let path = models[j].path(rng)?;
        let eta0 = bn.min_gap();
        let eta = opts.eta_fraction * eta0 / 2.0;
        let epsilon = cfg.epsilons[i as usize % cfg.epsilons.len()];
        let r = check_lemma_decomposition(&path, bn, epsilon, eta, opts.m, cfg.metric)?;
        Ok(LemmaOut {
            case: i as usize,
            n: n_label(models[j].scale()),
            epsilon,
            eta,
            m: opts.m,
            eta0,
            windows: r.windows.len(),
            max_lhs: r.windows.iter().map(|w| w.lhs).fold(0.0, f64::max),
            min_slack: r.windows.iter().map(|w| w.rhs - w.lhs).fold(f64::INFINITY, f64::min),
            holds: r.holds,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, VerifyError>>()?;
    let violations = rows.iter().filter(|r| !r.holds).count();
    em.csv("lemma23.csv", &rows)?;
    em.report(
        CheckKind::Lemma23,
        json!({ "n": cfg.n_grid, "epsilon": cfg.epsilons, "cases": opts.cases, "m": opts.m }),
        &rows,
        json!({ "cases": rows.len(), "violations": violations, "holds": violations == 0 }),
        cfg.seed,
    )?;
    Ok(Some(violations == 0))
}

#[derive(Debug, Clone, Serialize)]
struct TightnessOut {
    n: String,
    eta: f64,
    delta: f64,
    p_hat: f64,
    ci: f64,
}

fn tightness_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let r = tightness_curve(models, &cfg.eta_grid, &cfg.deltas, cfg.metric, cfg.replicas, cfg.seed)?;
    let rows: Vec<TightnessOut> = r
        .cells
        .iter()
        .map(|c| TightnessOut {
            n: n_label(c.n),
            eta: c.eta,
            delta: c.delta,
            p_hat: c.estimate.mean,
            ci: c.estimate.ci_halfwidth,
        })
        .collect();
    // models are ordered by increasing n
    let largest = models.len() - 1;
    let eta_min = cfg.eta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let by_delta: Vec<Value> = cfg
        .deltas
        .iter()
        .map(|&d| {
            json!({
                "delta": d,
                "largest_n_non_increasing_as_eta_shrinks": r.non_increasing_as_eta_shrinks(largest, d),
                "smallest_eta_non_increasing_in_n": r.non_increasing_along_models(eta_min, d),
            })
        })
        .collect();
    let holds = cfg
        .deltas
        .iter()
        .all(|&d| r.non_increasing_as_eta_shrinks(largest, d) && r.non_increasing_along_models(eta_min, d));
    em.csv("tightness.csv", &rows)?;
    em.report(
        CheckKind::Tightness,
        json!({ "n": cfg.n_grid, "eta": cfg.eta_grid, "delta": cfg.deltas, "metric": cfg.metric }),
        &rows,
        json!({ "tolerance": "one pooled 99% interval", "by_delta": by_delta, "holds": holds }),
        cfg.seed,
    )?;
    Ok(Some(holds))
}

#[derive(Debug, Clone, Serialize)]
struct MProxyOut {
    n: String,
    candidate: usize,
    kind: &'static str,
    mean: f64,
    ci: f64,
    bound: f64,
}

fn mproxy_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let mut rows = Vec::new();
    let mut per_model = Vec::new();
    for model in models {
        let label = n_label(model.scale());
        let seed = RngStream::derive_seed(cfg.seed, &format!("mproxy/n{label}"));
        let r = m_proxy(model, cfg.mproxy, cfg.metric, cfg.replicas, seed)?;
        rows.extend(r.candidates.iter().enumerate().map(|(c, e)| MProxyOut {
            n: label.clone(),
            candidate: c,
            kind: if c < cfg.mproxy.max_hits { "hitting" } else { "deterministic" },
            mean: e.mean,
            ci: e.ci_halfwidth,
            bound: r.bound,
        }));
        per_model.push(json!({
            "n": label,
            "proxy": r.proxy.mean,
            "ci": r.proxy.ci_halfwidth,
            "bound": r.bound,
            "holds": r.holds,
        }));
    }
    let holds = per_model.iter().all(|m| m["holds"] == json!(true));
    em.csv("mproxy.csv", &rows)?;
    em.report(
        CheckKind::Mproxy,
        json!({ "n": cfg.n_grid, "config": cfg.mproxy }),
        &rows,
        json!({ "scope": "hitting and deterministic times only", "by_n": per_model, "holds": holds }),
        cfg.seed,
    )?;
    Ok(Some(holds))
}

#[derive(Debug, Clone, Serialize)]
struct LimitOut {
    n: String,
    ks: f64,
}

fn limit_check<M: PathModel>(cfg: &ExperimentConfig, models: &[M], em: &mut Emitter) -> CheckResult {
    let r = limit_comparison(models, &diffusion_of(cfg), cfg.limit.threshold, cfg.replicas, cfg.seed)?;
    let rows: Vec<LimitOut> = r
        .rows
        .iter()
        .map(|row| LimitOut {
            n: n_label(row.n),
            ks: row.ks,
        })
        .collect();
    let holds = r.decreasing && r.last_within;
    em.csv("limit.csv", &rows)?;
    em.report(
        CheckKind::Limit,
        json!({ "n": cfg.n_grid, "dt": cfg.dt, "replicas": cfg.replicas }),
        &rows,
        json!({
            "threshold": r.threshold,
            "decreasing": r.decreasing,
            "last_within": r.last_within,
            "holds": holds,
        }),
        cfg.seed,
    )?;
    Ok(Some(holds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn config(dir: &Path, body: &str) -> ExperimentConfig {
        let mut c = parse_config(body).unwrap();
        c.out = dir.to_path_buf();
        c
    }

    #[test]
    fn grid_sink_reads_cadlag_values() {
        let times = [0.0, 0.5, 1.0];
        let mut s = GridSink::new(&times);
        s.start(0.0, 1.0);
        s.jump(0.25, 2.0);
        s.jump(0.5, 3.0);
        s.jump(0.75, 4.0);
        assert_eq!(s.finish(), vec![1.0, 3.0, 4.0]);
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("table.csv");
        let err = write_atomic(&target, |w| {
            w.write_all(b"t,mean\n0,1\n")?;
            Err(std::io::Error::other("killed mid-write"))
        });
        assert!(err.is_err());
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

        write_atomic(&target, |w| w.write_all(b"old\n")).unwrap();
        let _ = write_atomic(&target, |w| {
            w.write_all(b"new but partial")?;
            Err(std::io::Error::other("killed"))
        });
        assert_eq!(fs::read_to_string(&target).unwrap(), "old\n");
    }

    #[test]
    fn simulate_only_writes_summary_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "seed = 4\nreplicas = 50\n[model]\nn = 10\n[simulate]\ntimes = 3\n");
        let m = run_experiment(&c).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert_eq!(m.outputs[0].files, vec!["simulate_n10.csv", "simulate.json"]);
        let text = fs::read_to_string(dir.path().join("simulate_n10.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,mean,var,p95");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0,1.0,0.0,1.0"));
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn paths_mode_writes_one_file_per_replica() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "seed = 4\nreplicas = 3\n[model]\nn = 10\n[simulate]\noutput = \"paths\"\n",
        );
        let m = run_experiment(&c).unwrap();
        let files = &m.outputs[0].files;
        assert_eq!(files.iter().filter(|f| f.starts_with("paths_n10/")).count(), 3);
        let p = tightkit_core::io::read_path_csv(fs::File::open(dir.path().join(&files[0])).unwrap()).unwrap();
        assert_eq!(p.initial_value(), 1.0);
    }

    #[test]
    fn tightness_grid_shape() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "seed = 5\nreplicas = 100\nchecks = [\"tightness\"]\n[model]\nlambda = 0\nmu = 0\nkappa = 0\ngamma = 0\n\
             [grids]\nn = [10, 20]\neta = [0.2, 0.05, 0.01]\n",
        );
        run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("tightness.csv")).unwrap();
        // 2 scales by 3 etas, one delta
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn same_seed_same_bytes() {
        let body = "seed = 8\nreplicas = 100\nchecks = [\"simulate\", \"a1\", \"lemma23\"]\n\
                    [model]\nn = 10\n[schedule]\nkind = \"geometric\"\nk_max = 3\n\
                    [grids]\nn = [5, 10]\n[lemma23]\ncases = 20\n";
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_experiment(&config(a.path(), body)).unwrap();
        let mb = run_experiment(&config(b.path(), body)).unwrap();
        assert_eq!(ma.config_hash, mb.config_hash);
        for o in &ma.outputs {
            for f in &o.files {
                assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
            }
        }
        assert_eq!(ma.outputs.iter().map(|o| o.files.len()).sum::<usize>(), 7);
    }

    #[test]
    fn gw_summary() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "seed = 6\nreplicas = 20\n[model]\nkind = \"gw\"\n[gw]\nz0 = 5\ngenerations = 3\nlaws = [[0, 0, 1]]\n",
        );
        run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("simulate_gw.csv")).unwrap();
        assert_eq!(text, "t,mean,var,p95\n0.0,5.0,0.0,5.0\n1.0,10.0,0.0,10.0\n2.0,20.0,0.0,20.0\n3.0,40.0,0.0,40.0\n");
    }

    #[test]
    fn hard_error_leaves_an_incomplete_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "seed = 6\nreplicas = 20\n[model]\nkind = \"gw\"\n[gw]\nz0 = 5\ngenerations = 3\nlaws = [[0, 0, 0, 0, 1]]\ncap = 100\n",
        );
        assert!(run_experiment(&c).is_err());
        let m = RunManifest::read(dir.path()).unwrap();
        assert_eq!(m.status, RunStatus::Incomplete);
        assert!(m.error.unwrap().contains("exceeded"));
        assert!(m.outputs.is_empty());
    }
}
