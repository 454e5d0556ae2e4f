//! Tabular outputs and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (csv or json)")),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl Cell {
    /// Reals get 17 significant digits so they round-trip exactly.
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Real(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

/// One output file: named columns plus `#`-prefixed metadata lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub meta: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table { name: name.to_string(), meta: Vec::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        Ok(match format {
            Format::Csv => {
                let mut out = String::new();
                for m in &self.meta {
                    let _ = writeln!(out, "# {m}");
                }
                let _ = writeln!(out, "{}", self.columns.join(","));
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    let _ = writeln!(out, "{}", cells.join(","));
                }
                out
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        Value::Object(
                            self.columns.iter().map(|c| c.to_string()).zip(r.iter().map(Cell::json)).collect(),
                        )
                    })
                    .collect();
                let doc = json!({ "table": self.name, "meta": self.meta, "columns": self.columns, "rows": rows });
                serde_json::to_string_pretty(&doc)? + "\n"
            }
        })
    }

    pub fn file_name(&self, format: Format) -> String {
        format!("{}.{}", self.name, format)
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf, CliError> {
        let path = dir.join(self.file_name(format));
        fs::write(&path, self.render(format)?)?;
        Ok(path)
    }
}

/// Resolved parameters and provenance for one run; rerunning with
/// `--config manifest.json` reproduces the same tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        json!({
            "tool": "dfbm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.params.get("seed"),
            "params": self.params,
            "warnings": self.warnings,
            "outputs": self.outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self.to_json())? + "\n")?;
        Ok(path)
    }
}
