use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use toml::{Table, Value};

use tightkit::config::{parse_table, set_key, CheckKind, ConfigError};
use tightkit::plot::{emit_plot_data, plot_csv};
use tightkit::run::{run_experiment, write_atomic};
use tightkit_core::io::{read_control_csv, read_path_csv};
use tightkit_core::metric::Metric;
use tightkit_core::modulus::{modulus, Sparsity};
use tightkit_core::subdivision::construct_b;

#[derive(Parser)]
#[command(name = "tightkit", version, about = "Tightness diagnostics for Markov processes with fixed discontinuities")]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check listed in the config.
    Run,
    /// Simulate replicas and write paths or a summary table.
    Simulate {
        /// lbpwc, diffusion or gw.
        #[arg(long)]
        model: Option<String>,
        /// Config file with the model parameters; an alternative to --config.
        #[arg(long)]
        params: Option<PathBuf>,
        /// CSV with time,theta rows.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<i64>,
        /// Write one CSV per replica instead of the summary.
        #[arg(long)]
        paths: bool,
        /// Number of summary time points.
        #[arg(long)]
        times: Option<i64>,
    },
    /// Modulus of a path read from CSV.
    Modulus {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        eta: f64,
        /// A,B
        #[arg(long, value_parser = parse_interval)]
        interval: (f64, f64),
        #[arg(long, default_value = "euclidean")]
        metric: Metric,
        /// eta or etabar.
        #[arg(long, default_value = "eta")]
        mode: Sparsity,
    },
    /// Subdivision certificate for a control read from CSV.
    Subdivide {
        #[arg(long)]
        control: PathBuf,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Run a single check, with grid overrides.
    Verify {
        #[arg(long)]
        check: CheckKind,
        #[arg(long)]
        replicas: Option<i64>,
        /// Comma-separated scales.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<i64>>,
        #[arg(long, value_delimiter = ',')]
        eta: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        delta: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        #[arg(long)]
        c_k: Option<f64>,
        #[arg(long)]
        eta_bar0: Option<f64>,
        /// Instances for lemma23.
        #[arg(long)]
        cases: Option<i64>,
    },
    /// Long-format plot table for one curve of a finished run.
    Plotdata {
        /// tightness, a1, a2, a2prime, simulate or limit.
        #[arg(long)]
        curve: String,
        /// Run directory holding manifest.json; defaults to --out.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected A,B")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verdict,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0.join("\n"))
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_table(path: Option<&Path>) -> Result<Table, Failure> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Float(x)).collect())
}

struct Overrides(Vec<(&'static str, Value)>);

impl Overrides {
    fn add(&mut self, key: &'static str, value: Option<Value>) {
        if let Some(v) = value {
            self.0.push((key, v));
        }
    }

    fn apply(self, table: &mut Table) -> Result<(), Failure> {
        for (key, value) in self.0 {
            set_key(table, key, value)?;
        }
        Ok(())
    }
}

fn global_overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides(Vec::new());
    o.add("seed", cli.seed.map(|s| Value::Integer(s as i64)));
    o.add("out", cli.out.as_ref().map(|p| Value::String(p.display().to_string())));
    o.add("threads", cli.threads.map(|t| Value::Integer(t as i64)));
    o
}

/// Runs the config and reports the verdicts.
fn execute(table: &Table) -> Result<(), Failure> {
    let cfg = parse_table(table)?;
    let manifest = run_experiment(&cfg).map_err(runtime)?;
    for o in &manifest.outputs {
        let verdict = match o.verdict {
            None => "done",
            Some(true) => "holds",
            Some(false) => "FAILS",
        };
        println!("{}: {verdict} ({} files)", o.check, o.files.len());
    }
    println!("manifest: {}", cfg.out.join(tightkit::run::MANIFEST).display());
    if manifest.all_hold() {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(runtime)?;
    writeln!(out).map_err(runtime)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let globals = global_overrides(&cli);
    match cli.command {
        Command::Run => {
            let mut table = load_table(cli.config.as_deref())?;
            globals.apply(&mut table)?;
            execute(&table)
        }
        Command::Simulate {
            model,
            params,
            schedule,
            replicas,
            paths,
            times,
        } => {
            let mut table = load_table(params.as_deref().or(cli.config.as_deref()))?;
            globals.apply(&mut table)?;
            let mut o = Overrides(vec![("checks", Value::Array(vec![Value::String("simulate".into())]))]);
            o.add("model.kind", model.map(Value::String));
            o.add("replicas", replicas.map(Value::Integer));
            o.add("simulate.times", times.map(Value::Integer));
            o.add("simulate.output", paths.then(|| Value::String("paths".into())));
            if let Some(s) = schedule {
                o.add("schedule.kind", Some(Value::String("file".into())));
                o.add("schedule.path", Some(Value::String(s.display().to_string())));
            }
            o.apply(&mut table)?;
            execute(&table)
        }
        Command::Modulus {
            path,
            eta,
            interval: (a, b),
            metric,
            mode,
        } => {
            let file = fs::File::open(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let p = read_path_csv(file).map_err(runtime)?;
            let r = modulus(&p, eta, a, b, metric, mode).map_err(runtime)?;
            print_json(&json!({ "value": r.value, "witness": r.witness.breakpoints() }))
        }
        Command::Subdivide {
            control,
            horizon,
            epsilon,
        } => {
            let file = fs::File::open(&control).map_err(|e| Failure::Usage(format!("{}: {e}", control.display())))?;
            let f = read_control_csv(file).map_err(runtime)?;
            let cert = construct_b(&f, horizon, epsilon).map_err(runtime)?;
            let ok = cert.verify(&f).is_ok();
            print_json(&json!({
                "breakpoints": cert.subdivision.breakpoints(),
                "mesh_bound": cert.mesh_bound,
                "missed_jump_mass": cert.missed_jump_mass,
                "ok": ok,
            }))?;
            if ok {
                Ok(())
            } else {
                Err(Failure::Verdict)
            }
        }
        Command::Verify {
            check,
            replicas,
            n,
            eta,
            delta,
            k,
            epsilon,
            c_k,
            eta_bar0,
            cases,
        } => {
            let mut table = load_table(cli.config.as_deref())?;
            globals.apply(&mut table)?;
            let mut o = Overrides(vec![("checks", Value::Array(vec![Value::String(check.name().into())]))]);
            o.add("replicas", replicas.map(Value::Integer));
            o.add("grids.n", n.map(|v| Value::Array(v.into_iter().map(Value::Integer).collect())));
            o.add("grids.eta", eta.as_deref().map(floats));
            o.add("grids.delta", delta.as_deref().map(floats));
            o.add("grids.k", k.as_deref().map(floats));
            o.add("grids.epsilon", epsilon.as_deref().map(floats));
            o.add("a2.c_k", c_k.map(Value::Float));
            o.add("a2.eta_bar0", eta_bar0.map(Value::Float));
            o.add("lemma23.cases", cases.map(Value::Integer));
            o.apply(&mut table)?;
            execute(&table)
        }
        Command::Plotdata {
            curve,
            manifest,
            output,
        } => {
            let dir = manifest
                .or(cli.out)
                .ok_or_else(|| Failure::Usage("plotdata needs --manifest or --out".into()))?;
            let rows = emit_plot_data(&dir, &curve).map_err(|e| match e {
                tightkit::plot::PlotError::UnknownCurve(_) => Failure::Usage(e.to_string()),
                e => runtime(e),
            })?;
            let bytes = plot_csv(&rows);
            match output {
                Some(path) => write_atomic(&path, |w| w.write_all(&bytes)).map_err(runtime),
                None => std::io::stdout().write_all(&bytes).map_err(runtime),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
