//! CSV emission and the run manifest.

use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// One CSV cell. Floats are written with 17 significant digits so they
/// round-trip exactly.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    F(f64),
    I(i64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::I(i64::from(v))
    }
}

fn fmt_cell(c: &Cell) -> String {
    match c {
        Cell::F(v) => format!("{v:.16e}"),
        Cell::I(v) => v.to_string(),
    }
}

/// In-memory table, written once by a single writer.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Prepends a constant column, e.g. the swept parameter.
    pub fn with_leading(mut self, column: &str, value: f64) -> Self {
        self.header.insert(0, column.to_string());
        for r in &mut self.rows {
            r.insert(0, Cell::F(value));
        }
        self
    }

    pub fn write(&self, dir: &Path) -> io::Result<FileEntry> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(fmt_cell))?;
        }
        w.flush()?;
        Ok(FileEntry { path: PathBuf::from(format!("{}.csv", self.name)), columns: self.header.clone(), rows: self.rows.len() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub software: Software,
    pub experiment: &'a str,
    pub seed: u64,
    pub config: &'a C,
    pub files: Vec<FileEntry>,
    pub convergence: Vec<Value>,
    pub metadata: Value,
}

#[derive(Debug, Serialize)]
pub struct Software {
    pub name: &'static str,
    pub version: &'static str,
}

impl Software {
    pub fn current() -> Self {
        Software { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

pub fn write_manifest<C: Serialize>(dir: &Path, m: &Manifest<'_, C>) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, m)?;
    f.write_all(b"\n")?;
    f.flush()
}
