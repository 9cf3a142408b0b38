//! Long-format plot tables built from the files of a finished run.

use std::fs;
use std::path::Path;

use serde::Serialize;

use tightkit_core::verify::Z99;

use crate::run::{RunError, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("manifest lists no outputs")]
    EmptyManifest,
    #[error("unknown curve `{0}`; expected one of {CURVES:?}")]
    UnknownCurve(String),
    #[error("the run has no `{0}` output")]
    MissingCurve(String),
    #[error("{file}: {message}")]
    Table { file: String, message: String },
    #[error(transparent)]
    Run(#[from] RunError),
}

pub const CURVES: [&str; 6] = ["tightness", "a1", "a2", "a2prime", "simulate", "limit"];

/// One point of a curve. `ci` is empty where the curve has no interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub ci: Option<f64>,
}

/// Reads the run in `dir` and returns the rows of `curve`.
pub fn emit_plot_data(dir: &Path, curve: &str) -> Result<Vec<PlotRow>, PlotError> {
    if !CURVES.contains(&curve) {
        return Err(PlotError::UnknownCurve(curve.to_string()));
    }
    let manifest = RunManifest::read(dir)?;
    if manifest.outputs.is_empty() {
        return Err(PlotError::EmptyManifest);
    }
    let output = manifest
        .outputs
        .iter()
        .find(|o| o.check == curve)
        .ok_or_else(|| PlotError::MissingCurve(curve.to_string()))?;
    let mut rows = Vec::new();
    for file in output.files.iter().filter(|f| f.ends_with(".csv") && !f.contains('/')) {
        let table = Table::read(dir, file)?;
        match curve {
            "tightness" => {
                for r in 0..table.len() {
                    rows.push(PlotRow {
                        series: format!("n={},delta={}", table.text(r, "n")?, table.text(r, "delta")?),
                        x: table.num(r, "eta")?,
                        y: table.num(r, "p_hat")?,
                        ci: Some(table.num(r, "ci")?),
                    });
                }
            }
            "a1" => {
                for r in 0..table.len() {
                    rows.push(PlotRow {
                        series: format!("n={}", table.text(r, "n")?),
                        x: table.num(r, "k")?,
                        y: table.num(r, "p_hat")?,
                        ci: Some(table.num(r, "ci")?),
                    });
                }
            }
            "a2" | "a2prime" => {
                for r in 0..table.len() {
                    rows.push(PlotRow {
                        series: format!("n={}", table.text(r, "n")?),
                        x: table.num(r, "increment")?,
                        y: table.num(r, "mean")?,
                        ci: Some(table.num(r, "ci")?),
                    });
                }
            }
            "simulate" => {
                let series = file.trim_start_matches("simulate_").trim_end_matches(".csv");
                let count = manifest.replicas as f64;
                for r in 0..table.len() {
                    rows.push(PlotRow {
                        series: series.to_string(),
                        x: table.num(r, "t")?,
                        y: table.num(r, "mean")?,
                        ci: Some(Z99 * (table.num(r, "var")? / count).sqrt()),
                    });
                }
            }
            _ => {
                for r in 0..table.len() {
                    rows.push(PlotRow {
                        series: "ks".into(),
                        x: table.num(r, "n")?,
                        y: table.num(r, "ks")?,
                        ci: None,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Writes rows as `series,x,y,ci`.
pub fn plot_csv(rows: &[PlotRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

struct Table {
    file: String,
    headers: csv::StringRecord,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn read(dir: &Path, file: &str) -> Result<Self, PlotError> {
        let err = |message: String| PlotError::Table {
            file: file.to_string(),
            message,
        };
        let text = fs::read(dir.join(file)).map_err(|e| err(e.to_string()))?;
        let mut rdr = csv::Reader::from_reader(text.as_slice());
        let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
        let records = rdr
            .records()
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        Ok(Table {
            file: file.to_string(),
            headers,
            records,
        })
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn text(&self, row: usize, column: &str) -> Result<&str, PlotError> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| PlotError::Table {
                file: self.file.clone(),
                message: format!("no column `{column}`"),
            })?;
        Ok(&self.records[row][idx])
    }

    fn num(&self, row: usize, column: &str) -> Result<f64, PlotError> {
        let text = self.text(row, column)?;
        text.parse().map_err(|_| PlotError::Table {
            file: self.file.clone(),
            message: format!("`{text}` in column `{column}` is not a number"),
        })
    }
}
