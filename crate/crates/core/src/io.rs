//! CSV serialization for step paths, controls and catastrophe schedules.
//!
//! Layout: `# key=value` metadata lines (`horizon`, and `slope` for controls),
//! then a `t,value` header, then the row `(t0, initial)` followed by one row per
//! jump `(time, post_value)`. Floats are written in shortest round-trip form,
//! so files are byte-stable across runs.

use std::io::{BufRead, BufReader, Read, Write};

use crate::path::{MonotoneControl, PathError, StepPath};
use crate::sim::{CatastropheSchedule, SimError};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing `# {0}=` metadata line")]
    MissingMeta(&'static str),
    #[error("bad metadata line `{0}`")]
    BadMeta(String),
    #[error("no rows: the first row must hold (t0, initial value)")]
    Empty,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Schedule(#[from] SimError),
}

pub fn write_path_csv<W: Write>(path: &StepPath, mut out: W) -> Result<(), CsvError> {
    writeln!(out, "# horizon={}", path.horizon())?;
    write_rows(path, out)
}

pub fn write_control_csv<W: Write>(control: &MonotoneControl, mut out: W) -> Result<(), CsvError> {
    writeln!(out, "# horizon={}", control.horizon())?;
    writeln!(out, "# slope={}", control.slope())?;
    write_rows(control.step_part(), out)
}

fn write_rows<W: Write>(path: &StepPath, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value"])?;
    w.write_record([path.t0().to_string(), path.initial_value().to_string()])?;
    for (t, v) in path.jumps() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

struct Parsed {
    horizon: Option<f64>,
    slope: Option<f64>,
    rows: Vec<(f64, f64)>,
}

fn parse<R: Read>(input: R) -> Result<Parsed, CsvError> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut horizon = None;
    let mut slope = None;
    for line in text.as_bytes().lines() {
        let line = line?;
        let Some(meta) = line.strip_prefix('#') else {
            continue;
        };
        let (key, value) = meta
            .trim()
            .split_once('=')
            .ok_or_else(|| CsvError::BadMeta(line.clone()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CsvError::BadMeta(line.clone()))?;
        match key.trim() {
            "horizon" => horizon = Some(value),
            "slope" => slope = Some(value),
            _ => {}
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.deserialize::<(f64, f64)>() {
        rows.push(rec?);
    }
    Ok(Parsed {
        horizon,
        slope,
        rows,
    })
}

/// Reads a catastrophe schedule from `time,theta` rows with a header.
pub fn read_schedule_csv<R: Read>(input: R) -> Result<CatastropheSchedule, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let atoms = reader
        .deserialize::<(f64, f64)>()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CatastropheSchedule::new(atoms)?)
}

pub fn write_schedule_csv<W: Write>(schedule: &CatastropheSchedule, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "theta"])?;
    for &(t, theta) in schedule.atoms() {
        w.write_record([t.to_string(), theta.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<R: Read>(input: R) -> Result<StepPath, CsvError> {
    let parsed = parse(input)?;
    let horizon = parsed.horizon.ok_or(CsvError::MissingMeta("horizon"))?;
    let (&(t0, initial), rest) = parsed.rows.split_first().ok_or(CsvError::Empty)?;
    Ok(StepPath::new(t0, initial, rest.to_vec(), horizon)?)
}

pub fn read_control_csv<R: Read>(input: R) -> Result<MonotoneControl, CsvError> {
    let parsed = parse(input)?;
    let horizon = parsed.horizon.ok_or(CsvError::MissingMeta("horizon"))?;
    let slope = parsed.slope.ok_or(CsvError::MissingMeta("slope"))?;
    let (&(t0, initial), rest) = parsed.rows.split_first().ok_or(CsvError::Empty)?;
    let steps = StepPath::new(t0, initial, rest.to_vec(), horizon)?;
    Ok(MonotoneControl::from_step_part(slope, &steps)?)
}
