//! CSV and JSON writers.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;

pub const RUN_COLUMNS: [&str; 14] = [
    "iter",
    "train_loss",
    "rel_test_error_fro",
    "rel_test_error_spec",
    "sigma_min_signal",
    "nuisance_norm",
    "angle_norm",
    "imbalance_norm",
    "imbalance_nuisance",
    "imbalance_signal_angle",
    "vw_imbalance",
    "delta_norm",
    "z_norm",
    "sigma_min_LZ",
];

/// 15 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.14e}")
}

/// Cell for a value that may be absent.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_row(r: &DiagnosticsRecord) -> Vec<Cell> {
    vec![
        r.iter.into(),
        r.train_loss.into(),
        r.rel_test_error_fro.into(),
        r.rel_test_error_spec.into(),
        r.sigma_min_signal.into(),
        r.nuisance_norm.into(),
        r.angle_norm.into(),
        r.imbalance_norm.into(),
        r.imbalance_nuisance.into(),
        r.imbalance_signal_angle.into(),
        r.vw_imbalance.into(),
        r.delta_norm.into(),
        r.z_norm.into(),
        r.sigma_min_lz.into(),
    ]
}

pub fn write_run_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let rows: Vec<_> = records.iter().map(run_row).collect();
    write_table(path, &RUN_COLUMNS, &rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
