//! Experiment configuration.
//!
//! A config is a TOML document. Unknown keys are errors, and validation
//! reports every problem it finds rather than stopping at the first. The
//! grammar, with defaults:
//!
//! ```toml
//! seed = 7                      # required
//! out = "out"
//! replicas = 1000
//! threads = 0                   # 0: one per core
//! checks = ["simulate"]         # simulate a1 a2 a2prime lemma23 tightness mproxy limit
//! metric = "bounded_euclidean"  # euclidean bounded_euclidean exp_compactified
//!
//! [model]
//! kind = "lbpwc"                # lbpwc diffusion gw
//! lambda = 1.0
//! mu = 1.0
//! kappa = 1.0
//! gamma = 1.0
//! n = 100
//! x0 = 1.0
//! horizon = 1.0
//! dt = 0.000244140625           # horizon / 4096, diffusion step
//!
//! [gw]                          # only with kind = "gw"
//! z0 = 10
//! generations = 20
//! laws = [[0.25, 0.5, 0.25]]    # one pmf per generation; a single pmf is reused
//! cap = 9007199254740992
//!
//! [schedule]
//! kind = "none"                 # none atoms geometric file
//! atoms = [[0.5, 0.5]]          # kind = "atoms": (time, theta) pairs
//! ratio = 0.5                   # kind = "geometric": t_k = horizon (1 - ratio^k)
//! theta = 0.9
//! k_max = 10
//! path = "schedule.csv"         # kind = "file": time,theta rows
//!
//! [grids]
//! n = [100]                     # defaults to [model.n]
//! eta = [0.2, 0.05, 0.0125]
//! k = [2.0, 4.0, 8.0]
//! delta = [0.1]
//! epsilon = [0.05]
//! points = [[0.0, 0.5, 1.0]]    # (s, t, x0); defaults to three windows from x0
//!
//! [simulate]
//! output = "summary"            # summary paths
//! times = 11                    # summary time points on [0, horizon]
//!
//! [a2]
//! k = 4.0
//! c_k = 1.0
//! eta_bar0 = 0.5                # required by a2prime
//!
//! [lemma23]
//! cases = 1000
//! mesh_epsilon = 0.5
//! eta_fraction = 0.5            # eta = eta_fraction * eta0 / 2
//! m = 3
//!
//! [mproxy]
//! lo = 0.0
//! hi = 1.0                      # defaults to the horizon
//! x0 = 1.0                      # defaults to model.x0
//! eta = 0.05
//! k = 4.0
//! epsilon = 0.1
//! c_k = 1.0
//! max_hits = 4
//! grid_points = 9
//!
//! [limit]
//! threshold = 0.05
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use tightkit_core::io::read_schedule_csv;
use tightkit_core::metric::Metric;
use tightkit_core::sim::{CatastropheSchedule, ModelParams, OffspringLaw, DEFAULT_POPULATION_CAP};
use tightkit_core::verify::{MProxyConfig, MIN_REPLICAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lbpwc,
    Diffusion,
    Gw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Simulate,
    A1,
    A2,
    A2prime,
    Lemma23,
    Tightness,
    Mproxy,
    Limit,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::Simulate,
        CheckKind::A1,
        CheckKind::A2,
        CheckKind::A2prime,
        CheckKind::Lemma23,
        CheckKind::Tightness,
        CheckKind::Mproxy,
        CheckKind::Limit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Simulate => "simulate",
            CheckKind::A1 => "a1",
            CheckKind::A2 => "a2",
            CheckKind::A2prime => "a2prime",
            CheckKind::Lemma23 => "lemma23",
            CheckKind::Tightness => "tightness",
            CheckKind::Mproxy => "mproxy",
            CheckKind::Limit => "limit",
        }
    }

    /// Whether the check draws Monte Carlo estimates with intervals.
    fn needs_interval(self) -> bool {
        !matches!(self, CheckKind::Simulate | CheckKind::Lemma23)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        CheckKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = CheckKind::ALL.iter().map(|c| c.name()).collect();
                format!("unknown check `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwSpec {
    pub z0: u64,
    pub generations: usize,
    pub laws: Vec<OffspringLaw>,
    pub cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulateOptions {
    /// Write one CSV per replica as well as the summary.
    pub paths: bool,
    pub times: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A2Options {
    pub k: f64,
    pub c_k: f64,
    pub eta_bar0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaOptions {
    pub cases: usize,
    pub mesh_epsilon: f64,
    pub eta_fraction: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitOptions {
    pub threshold: f64,
}

/// A validated experiment. `out` and `threads` do not affect results and are
/// left out of the hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: usize,
    pub replicas: usize,
    pub checks: Vec<CheckKind>,
    pub metric: Metric,
    pub model: ModelKind,
    pub params: ModelParams,
    pub dt: f64,
    pub gw: Option<GwSpec>,
    pub schedule: CatastropheSchedule,
    pub n_grid: Vec<u32>,
    pub eta_grid: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub points: Vec<(f64, f64, f64)>,
    pub simulate: SimulateOptions,
    pub a2: A2Options,
    pub lemma23: LemmaOptions,
    pub mproxy: MProxyConfig,
    pub limit: LimitOptions,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form, hex encoded. Independent of key
    /// order and formatting in the source text.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Every validation problem, one message per entry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError(vec![format!("TOML syntax: {}", e.message())]))?;
    parse_table(&table)
}

/// Sets `dotted.key` in `table`, creating sections as needed. Used to apply
/// command-line flags before validation.
pub fn set_key(table: &mut Table, dotted: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(vec![format!("`{p}` is not a section")]))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// One TOML table being read; remembers which keys were consumed.
struct Section<'a> {
    path: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn root(table: &'a Table) -> Self {
        Section {
            path: "",
            table: Some(table),
            used: BTreeSet::new(),
        }
    }

    fn child(&mut self, name: &'static str, errs: &mut Vec<String>) -> Section<'a> {
        let table = match self.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errs.push(format!("`{name}` must be a section"));
                None
            }
        };
        Section {
            path: name,
            table,
            used: BTreeSet::new(),
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table?.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k.as_str()) {
                    errs.push(format!("unknown key `{}`", self.key(k)));
                }
            }
        }
    }

    fn float(&mut self, key: &'static str, default: f64, errs: &mut Vec<String>) -> f64 {
        self.opt_float(key, errs).unwrap_or(default)
    }

    fn opt_float(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        let v = self.get(key)?;
        let x = as_float(v);
        if x.is_none() {
            errs.push(format!("`{}` must be a number", self.key(key)));
        }
        x
    }

    fn uint(&mut self, key: &'static str, default: u64, errs: &mut Vec<String>) -> u64 {
        self.opt_uint(key, errs).unwrap_or(default)
    }

    fn opt_uint(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<u64> {
        let v = self.get(key)?;
        match v.as_integer() {
            Some(i) if i >= 0 => Some(i as u64),
            _ => {
                errs.push(format!("`{}` must be a non-negative integer, got {v}", self.key(key)));
                None
            }
        }
    }

    fn string(&mut self, key: &'static str, default: &str, errs: &mut Vec<String>) -> String {
        match self.get(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                errs.push(format!("`{}` must be a string, got {v}", self.key(key)));
                default.to_string()
            }
        }
    }

    /// An array of numbers, or `None` when absent or malformed.
    fn floats(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
        let v = self.get(key)?;
        let xs = v
            .as_array()
            .and_then(|a| a.iter().map(as_float).collect::<Option<Vec<_>>>());
        if xs.is_none() {
            errs.push(format!("`{}` must be an array of numbers", self.key(key)));
        }
        xs
    }

    /// An array of fixed-length number arrays.
    fn tuples(&mut self, key: &'static str, len: usize, errs: &mut Vec<String>) -> Option<Vec<Vec<f64>>> {
        let v = self.get(key)?;
        let rows = v.as_array().and_then(|a| {
            a.iter()
                .map(|row| {
                    row.as_array()
                        .filter(|r| r.len() == len)
                        .and_then(|r| r.iter().map(as_float).collect::<Option<Vec<_>>>())
                })
                .collect::<Option<Vec<_>>>()
        });
        if rows.is_none() {
            errs.push(format!("`{}` must be an array of {len}-element number arrays", self.key(key)));
        }
        rows
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn positive(x: f64, key: &str, errs: &mut Vec<String>) {
    if !(x > 0.0) || !x.is_finite() {
        errs.push(format!("`{key}` must be positive, got {x}"));
    }
}

fn non_empty<T>(xs: &[T], key: &str, why: &str, errs: &mut Vec<String>) {
    if xs.is_empty() {
        errs.push(format!("`{key}` must not be empty ({why})"));
    }
}

pub fn parse_table(table: &Table) -> Result<ExperimentConfig, ConfigError> {
    let mut errs = Vec::new();
    let mut root = Section::root(table);

    let seed = root.opt_uint("seed", &mut errs);
    if seed.is_none() && !root.has("seed") {
        errs.push("`seed` is required; runs are seeded explicitly, never from the clock".into());
    }
    let out = PathBuf::from(root.string("out", "out", &mut errs));
    let threads = root.uint("threads", 0, &mut errs) as usize;
    let replicas_raw = root.get("replicas").cloned();
    let replicas = match &replicas_raw {
        None => 1000,
        Some(Value::Integer(i)) if *i >= 2 => *i as usize,
        Some(v) => {
            errs.push(format!("`replicas` must be an integer >= 2, got {v}"));
            1000
        }
    };
    let checks: Vec<CheckKind> = match root.get("checks") {
        None => vec![CheckKind::Simulate],
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| match v.as_str().map(CheckKind::from_str) {
                Some(Ok(c)) => Some(c),
                Some(Err(e)) => {
                    errs.push(format!("`checks`: {e}"));
                    None
                }
                None => {
                    errs.push(format!("`checks` entries must be strings, got {v}"));
                    None
                }
            })
            .collect(),
        Some(v) => {
            errs.push(format!("`checks` must be an array of check names, got {v}"));
            Vec::new()
        }
    };
    if checks.is_empty() {
        errs.push("`checks` must list at least one check".into());
    }
    if checks.iter().collect::<BTreeSet<_>>().len() != checks.len() {
        errs.push("`checks` lists a check twice".into());
    }
    if checks.iter().any(|c| c.needs_interval()) && replicas < MIN_REPLICAS {
        errs.push(format!(
            "`replicas` = {replicas} is below {MIN_REPLICAS}, the minimum for the Monte Carlo checks"
        ));
    }
    let metric_name = root.string("metric", "bounded_euclidean", &mut errs);
    let metric = Metric::from_str(&metric_name).unwrap_or_else(|e| {
        errs.push(format!("`metric`: {e}"));
        Metric::BoundedEuclidean
    });

    // model
    let mut m = root.child("model", &mut errs);
    let kind = match m.string("kind", "lbpwc", &mut errs).as_str() {
        "lbpwc" => ModelKind::Lbpwc,
        "diffusion" => ModelKind::Diffusion,
        "gw" => ModelKind::Gw,
        other => {
            errs.push(format!("`model.kind`: unknown model `{other}` (expected lbpwc, diffusion or gw)"));
            ModelKind::Lbpwc
        }
    };
    let n = m.uint("n", 100, &mut errs);
    let params = ModelParams {
        lambda: m.float("lambda", 1.0, &mut errs),
        mu: m.float("mu", 1.0, &mut errs),
        kappa: m.float("kappa", 1.0, &mut errs),
        gamma: m.float("gamma", 1.0, &mut errs),
        n: u32::try_from(n).unwrap_or_else(|_| {
            errs.push(format!("`model.n` = {n} is too large"));
            1
        }),
        x0: m.float("x0", 1.0, &mut errs),
        horizon: m.float("horizon", 1.0, &mut errs),
    };
    if kind != ModelKind::Gw {
        if let Err(e) = params.validate() {
            errs.push(format!("`model`: {e}"));
        }
    }
    let horizon = if params.horizon > 0.0 { params.horizon } else { 1.0 };
    let dt = m.float("dt", horizon / 4096.0, &mut errs);
    positive(dt, "model.dt", &mut errs);
    m.finish(&mut errs);

    // gw
    let mut g = root.child("gw", &mut errs);
    let gw = if kind == ModelKind::Gw {
        let z0 = g.uint("z0", 10, &mut errs);
        let generations = g.uint("generations", 20, &mut errs) as usize;
        let cap = g.uint("cap", DEFAULT_POPULATION_CAP, &mut errs);
        let laws: Vec<OffspringLaw> = match g.get("laws") {
            None => {
                errs.push("`gw.laws` is required for the gw model".into());
                Vec::new()
            }
            Some(v) => {
                let pmfs = v.as_array().and_then(|a| {
                    a.iter()
                        .map(|row| row.as_array().and_then(|r| r.iter().map(as_float).collect::<Option<Vec<_>>>()))
                        .collect::<Option<Vec<_>>>()
                });
                match pmfs {
                    None => {
                        errs.push("`gw.laws` must be an array of probability arrays".into());
                        Vec::new()
                    }
                    Some(pmfs) => pmfs
                        .into_iter()
                        .enumerate()
                        .filter_map(|(i, pmf)| {
                            OffspringLaw::from_pmf(pmf)
                                .map_err(|e| errs.push(format!("`gw.laws[{i}]`: {e}")))
                                .ok()
                        })
                        .collect(),
                }
            }
        };
        let laws = if laws.len() == 1 {
            vec![laws[0].clone(); generations]
        } else {
            laws
        };
        if !laws.is_empty() && laws.len() < generations {
            errs.push(format!(
                "`gw.laws` has {} laws but `gw.generations` = {generations}",
                laws.len()
            ));
        }
        Some(GwSpec {
            z0,
            generations,
            laws,
            cap,
        })
    } else {
        if g.table.is_some() {
            errs.push("`gw` section given but `model.kind` is not gw".into());
        }
        g.used.extend(["z0", "generations", "cap", "laws"]);
        None
    };
    g.finish(&mut errs);

    // schedule
    let mut s = root.child("schedule", &mut errs);
    let schedule_kind = s.string("kind", "none", &mut errs);
    let schedule = match schedule_kind.as_str() {
        "none" => Ok(CatastropheSchedule::empty()),
        "atoms" => {
            let atoms = s.tuples("atoms", 2, &mut errs).unwrap_or_default();
            CatastropheSchedule::new(atoms.into_iter().map(|a| (a[0], a[1])).collect()).map_err(|e| e.to_string())
        }
        "geometric" => {
            let ratio = s.float("ratio", 0.5, &mut errs);
            let theta = s.float("theta", 0.9, &mut errs);
            let k_max = s.uint("k_max", 10, &mut errs);
            CatastropheSchedule::geometric(horizon, ratio, theta, k_max.min(u32::MAX as u64) as u32)
                .map_err(|e| e.to_string())
        }
        "file" => {
            let path = s.string("path", "", &mut errs);
            std::fs::File::open(&path)
                .map_err(|e| format!("cannot open `{path}`: {e}"))
                .and_then(|f| read_schedule_csv(f).map_err(|e| format!("`{path}`: {e}")))
        }
        other => Err(format!("unknown kind `{other}` (expected none, atoms, geometric or file)")),
    };
    // keys of the other kinds are accepted but must belong to the chosen one
    for (key, owner) in [("atoms", "atoms"), ("ratio", "geometric"), ("theta", "geometric"), ("k_max", "geometric"), ("path", "file")] {
        if s.has(key) && owner != schedule_kind {
            errs.push(format!("`schedule.{key}` only applies to kind = \"{owner}\""));
        }
        s.used.insert(key);
    }
    s.finish(&mut errs);
    let schedule = schedule.unwrap_or_else(|e| {
        errs.push(format!("`schedule`: {e}"));
        CatastropheSchedule::empty()
    });
    if kind != ModelKind::Gw {
        if let Some(last) = schedule.last_time() {
            if last > horizon {
                errs.push(format!("`schedule`: catastrophe at {last} after the horizon {horizon}"));
            }
        }
    }
    if kind == ModelKind::Diffusion || checks.contains(&CheckKind::Limit) {
        if dt >= schedule.min_gap() {
            errs.push(format!(
                "`model.dt` = {dt} must be below the smallest catastrophe gap {}",
                schedule.min_gap()
            ));
        }
    }

    // grids
    let mut gr = root.child("grids", &mut errs);
    let n_grid: Vec<u32> = match gr.floats("n", &mut errs) {
        None => vec![params.n],
        Some(ns) => ns
            .into_iter()
            .filter_map(|x| {
                if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                    Some(x as u32)
                } else {
                    errs.push(format!("`grids.n` entries must be integers >= 1, got {x}"));
                    None
                }
            })
            .collect(),
    };
    let mut n_grid = n_grid;
    n_grid.sort_unstable();
    if n_grid.windows(2).any(|w| w[0] == w[1]) {
        errs.push("`grids.n` lists a scale twice".into());
    }
    let eta_grid = gr.floats("eta", &mut errs).unwrap_or_else(|| vec![0.2, 0.05, 0.0125]);
    let k_grid = gr.floats("k", &mut errs).unwrap_or_else(|| vec![2.0, 4.0, 8.0]);
    let deltas = gr.floats("delta", &mut errs).unwrap_or_else(|| vec![0.1]);
    let epsilons = gr.floats("epsilon", &mut errs).unwrap_or_else(|| vec![0.05]);
    let points: Vec<(f64, f64, f64)> = match gr.tuples("points", 3, &mut errs) {
        Some(rows) => rows.into_iter().map(|r| (r[0], r[1], r[2])).collect(),
        None => {
            let x0 = params.x0;
            vec![(0.0, horizon / 2.0, x0), (horizon / 2.0, horizon, x0), (0.0, horizon, x0)]
        }
    };
    gr.finish(&mut errs);
    for (name, xs) in [("grids.eta", &eta_grid), ("grids.k", &k_grid), ("grids.delta", &deltas), ("grids.epsilon", &epsilons)] {
        if xs.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            errs.push(format!("`{name}` entries must be positive"));
        }
    }
    let uses = |c: CheckKind| checks.contains(&c);
    if uses(CheckKind::A1) {
        non_empty(&k_grid, "grids.k", "a1", &mut errs);
        non_empty(&epsilons, "grids.epsilon", "a1", &mut errs);
        if k_grid.windows(2).any(|w| !(w[0] < w[1])) {
            errs.push("`grids.k` must be increasing".into());
        }
    }
    if uses(CheckKind::Tightness) {
        non_empty(&eta_grid, "grids.eta", "tightness", &mut errs);
        non_empty(&deltas, "grids.delta", "tightness", &mut errs);
    }
    if uses(CheckKind::A2) || uses(CheckKind::A2prime) {
        non_empty(&points, "grids.points", "a2", &mut errs);
    }
    if uses(CheckKind::Lemma23) {
        non_empty(&epsilons, "grids.epsilon", "lemma23", &mut errs);
    }
    if kind == ModelKind::Lbpwc {
        non_empty(&n_grid, "grids.n", "lbpwc model", &mut errs);
    }

    // per-check options
    let mut sim = root.child("simulate", &mut errs);
    let output = sim.string("output", "summary", &mut errs);
    let simulate = SimulateOptions {
        paths: match output.as_str() {
            "summary" => false,
            "paths" => true,
            other => {
                errs.push(format!("`simulate.output` must be summary or paths, got `{other}`"));
                false
            }
        },
        times: sim.uint("times", 11, &mut errs) as usize,
    };
    if simulate.times < 2 {
        errs.push("`simulate.times` must be at least 2".into());
    }
    sim.finish(&mut errs);

    let mut a = root.child("a2", &mut errs);
    let a2 = A2Options {
        k: a.float("k", 4.0, &mut errs),
        c_k: a.float("c_k", 1.0, &mut errs),
        eta_bar0: a.opt_float("eta_bar0", &mut errs),
    };
    a.finish(&mut errs);
    positive(a2.c_k, "a2.c_k", &mut errs);
    if let Some(e) = a2.eta_bar0 {
        positive(e, "a2.eta_bar0", &mut errs);
    } else if uses(CheckKind::A2prime) {
        errs.push("`a2.eta_bar0` is required by the a2prime check".into());
    }
    for &(s, t, x0) in &points {
        if !(0.0 <= s && s <= t && t <= horizon) || !(0.0 <= x0 && x0 <= a2.k) {
            errs.push(format!(
                "`grids.points` entry ({s}, {t}, {x0}) needs 0 <= s <= t <= {horizon} and 0 <= x0 <= a2.k = {}",
                a2.k
            ));
        }
    }

    let mut l = root.child("lemma23", &mut errs);
    let lemma23 = LemmaOptions {
        cases: l.uint("cases", 1000, &mut errs) as usize,
        mesh_epsilon: l.float("mesh_epsilon", 0.5, &mut errs),
        eta_fraction: l.float("eta_fraction", 0.5, &mut errs),
        m: l.uint("m", 3, &mut errs) as usize,
    };
    l.finish(&mut errs);
    positive(lemma23.mesh_epsilon, "lemma23.mesh_epsilon", &mut errs);
    if !(lemma23.eta_fraction > 0.0 && lemma23.eta_fraction < 1.0) {
        errs.push(format!("`lemma23.eta_fraction` must lie in (0, 1), got {}", lemma23.eta_fraction));
    }
    if lemma23.m == 0 || lemma23.cases == 0 {
        errs.push("`lemma23.m` and `lemma23.cases` must be at least 1".into());
    }

    let mut mp = root.child("mproxy", &mut errs);
    let mproxy = MProxyConfig {
        lo: mp.float("lo", 0.0, &mut errs),
        hi: mp.float("hi", horizon, &mut errs),
        x0: mp.float("x0", params.x0, &mut errs),
        eta: mp.float("eta", 0.05, &mut errs),
        k: mp.float("k", 4.0, &mut errs),
        epsilon: mp.float("epsilon", 0.1, &mut errs),
        c_k: mp.float("c_k", 1.0, &mut errs),
        max_hits: mp.uint("max_hits", 4, &mut errs) as usize,
        grid_points: mp.uint("grid_points", 9, &mut errs) as usize,
    };
    mp.finish(&mut errs);
    if uses(CheckKind::Mproxy) {
        if !(0.0 <= mproxy.lo && mproxy.lo < mproxy.hi && mproxy.hi <= horizon) {
            errs.push(format!("`mproxy` window [{}, {}] must lie in [0, {horizon}]", mproxy.lo, mproxy.hi));
        }
        positive(mproxy.eta, "mproxy.eta", &mut errs);
        positive(mproxy.epsilon, "mproxy.epsilon", &mut errs);
        positive(mproxy.c_k, "mproxy.c_k", &mut errs);
        if !(0.0 <= mproxy.x0 && mproxy.x0 <= mproxy.k) {
            errs.push("`mproxy.x0` must lie in [0, mproxy.k]".into());
        }
    }

    let mut lim = root.child("limit", &mut errs);
    let limit = LimitOptions {
        threshold: lim.float("threshold", 0.05, &mut errs),
    };
    lim.finish(&mut errs);
    positive(limit.threshold, "limit.threshold", &mut errs);

    match kind {
        ModelKind::Gw => {
            for c in &checks {
                if *c != CheckKind::Simulate {
                    errs.push(format!("check `{c}` needs a continuous-time model, not gw"));
                }
            }
        }
        ModelKind::Diffusion => {
            if uses(CheckKind::Limit) {
                errs.push("check `limit` compares the lbpwc model with its diffusion; set model.kind = \"lbpwc\"".into());
            }
        }
        ModelKind::Lbpwc => {}
    }
    root.finish(&mut errs);

    if !errs.is_empty() {
        return Err(ConfigError(errs));
    }
    Ok(ExperimentConfig {
        seed: seed.expect("checked above"),
        out,
        threads,
        replicas,
        checks,
        metric,
        model: kind,
        params,
        dt,
        gw,
        schedule,
        n_grid,
        eta_grid,
        k_grid,
        deltas,
        epsilons,
        points,
        simulate,
        a2,
        lemma23,
        mproxy,
        limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("seed = 3").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.checks, vec![CheckKind::Simulate]);
        assert_eq!(c.model, ModelKind::Lbpwc);
        assert_eq!(c.n_grid, vec![100]);
        assert_eq!(c.dt, 1.0 / 4096.0);
        assert!(c.schedule.is_empty());
        assert_eq!(c.out, PathBuf::from("out"));
    }

    #[test]
    fn every_error_is_reported() {
        let e = parse_config("replicas = -5\nchekcs = [\"a1\"]\n[model]\nkind = \"ou\"\n").unwrap_err();
        let all = e.0.join("\n");
        assert!(all.contains("`seed` is required"), "{all}");
        assert!(all.contains("`replicas`"), "{all}");
        assert!(all.contains("unknown key `chekcs`"), "{all}");
        assert!(all.contains("`model.kind`"), "{all}");
        assert_eq!(e.0.len(), 4);
    }

    #[test]
    fn unknown_keys_in_sections_are_fatal() {
        let e = parse_config("seed = 1\n[grids]\netas = [0.1]\n").unwrap_err();
        assert_eq!(e.0, vec!["unknown key `grids.etas`".to_string()]);
        let e = parse_config("seed = 1\n[schedule]\nkind = \"none\"\nratio = 0.5\n").unwrap_err();
        assert!(e.0[0].contains("only applies"));
    }

    #[test]
    fn geometric_schedule_generator() {
        let c = parse_config(
            "seed = 1\n[schedule]\nkind = \"geometric\"\nratio = 0.5\ntheta = 0.9\nk_max = 10\n",
        )
        .unwrap();
        let times: Vec<f64> = c.schedule.atoms().iter().map(|a| a.0).collect();
        assert_eq!(times.len(), 10);
        assert_eq!(&times[..3], &[0.5, 0.75, 0.875]);
        assert!(c.schedule.atoms().iter().all(|a| a.1 == 0.9));
    }

    #[test]
    fn hash_ignores_key_order_and_output_dir() {
        let a = parse_config("seed = 1\nreplicas = 200\n[model]\nn = 5\nx0 = 2\n").unwrap();
        let b = parse_config("replicas = 200\nout = \"elsewhere\"\nseed = 1\n[model]\nx0 = 2.0\nn = 5\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = parse_config("seed = 2\nreplicas = 200\n[model]\nn = 5\nx0 = 2\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn check_specific_requirements() {
        let e = parse_config("seed = 1\nchecks = [\"a2prime\"]\n").unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("eta_bar0")));
        let e = parse_config("seed = 1\nreplicas = 50\nchecks = [\"tightness\"]\n").unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("below 100")));
        let e = parse_config("seed = 1\nchecks = [\"a1\"]\n[model]\nkind = \"gw\"\n[gw]\nlaws = [[0.5, 0.5]]\n")
            .unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.0[0].contains("continuous-time"));
    }

    #[test]
    fn overrides_are_applied_before_validation() {
        let mut t: Table = "[model]\nn = 5\n".parse().unwrap();
        set_key(&mut t, "seed", Value::Integer(9)).unwrap();
        set_key(&mut t, "model.kind", Value::String("diffusion".into())).unwrap();
        let c = parse_table(&t).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model, ModelKind::Diffusion);
    }
}
