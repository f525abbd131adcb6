//! Experiment result tables: named, unit-tagged columns with a provenance
//! header, serialized deterministically to CSV and JSON. Identical config +
//! seed must reproduce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One table cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn write_csv(&self, out: &mut String) {
        match self {
            // Shortest-roundtrip float formatting: deterministic and lossless.
            Cell::Float(v) => {
                if v.is_nan() {
                    out.push_str("NaN");
                } else {
                    let _ = write!(out, "{v}");
                }
            }
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Text(s) => {
                debug_assert!(!s.contains(',') && !s.contains('\n'));
                out.push_str(s);
            }
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Float(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Int(v) => serde_json::Value::from(*v),
            Cell::Text(s) => serde_json::Value::from(s.as_str()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Column with its unit / scale tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
}

/// Where a table came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
}

/// A rectangular table of results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub provenance: Provenance,
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Cell>>,
    /// Set when any row was flagged (maps to exit code 2).
    pub flagged: bool,
}

/// Output serialization format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl ResultTable {
    pub fn new(name: &str, provenance: Provenance, columns: &[(&str, &str)]) -> Self {
        ResultTable {
            name: name.to_string(),
            provenance,
            columns: columns
                .iter()
                .map(|(n, u)| ColumnSpec { name: n.to_string(), unit: u.to_string() })
                .collect(),
            rows: Vec::new(),
            flagged: false,
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in {}", self.name);
        self.rows.push(row);
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// All float values of a named column.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let idx = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows
            .iter()
            .map(|r| match &r[idx] {
                Cell::Float(v) => *v,
                Cell::Int(v) => *v as f64,
                Cell::Text(_) => f64::NAN,
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# experiment: {}", self.provenance.experiment);
        let _ = writeln!(out, "# table: {}", self.name);
        let _ = writeln!(out, "# config_hash: {}", self.provenance.config_hash);
        let _ = writeln!(out, "# master_seed: {}", self.provenance.master_seed);
        let _ = writeln!(out, "# code_version: {}", self.provenance.code_version);
        let units: Vec<String> =
            self.columns.iter().map(|c| format!("{}={}", c.name, c.unit)).collect();
        let _ = writeln!(out, "# units: {}", units.join(";"));
        let header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.write_csv(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "provenance": self.provenance,
            "table": self.name,
            "flagged": self.flagged,
            "columns": self.columns,
            "rows": self.rows.iter()
                .map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }

    /// Write `<dir>/<table>.<ext>`; returns the path.
    pub fn emit(&self, dir: &Path, format: OutputFormat) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("create {}: {e}", dir.display())))?;
        let (ext, body) = match format {
            OutputFormat::Csv => ("csv", self.to_csv_string()),
            OutputFormat::Json => {
                ("json", format!("{:#}\n", self.to_json_value()))
            }
        };
        let path = dir.join(format!("{}.{ext}", self.name));
        std::fs::write(&path, body)
            .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance {
            experiment: "unit".into(),
            config_hash: "deadbeef".into(),
            master_seed: 7,
            code_version: "test".into(),
        }
    }

    #[test]
    fn csv_layout_and_determinism() {
        let mut t = ResultTable::new("demo", provenance(), &[("x", "space"), ("p", "probability")]);
        t.push_row(vec![Cell::Float(0.5), Cell::Float(0.25)]);
        t.push_row(vec![Cell::Float(1.5), Cell::Float(f64::NAN)]);
        let a = t.to_csv_string();
        let b = t.to_csv_string();
        assert_eq!(a, b);
        assert!(a.starts_with("# experiment: unit\n# table: demo\n"));
        assert!(a.contains("# units: x=space;p=probability\n"));
        assert!(a.contains("x,p\n0.5,0.25\n1.5,NaN\n"));
    }

    #[test]
    fn json_round_trip_preserves_rows() {
        let mut t = ResultTable::new("demo", provenance(), &[("k", "1"), ("label", "text")]);
        t.push_row(vec![Cell::Int(3), Cell::Text("ok".into())]);
        let v = t.to_json_value();
        assert_eq!(v["rows"][0][0], serde_json::json!(3));
        assert_eq!(v["rows"][0][1], serde_json::json!("ok"));
        // NaN floats become null in JSON.
        let mut t2 = ResultTable::new("d2", provenance(), &[("v", "1")]);
        t2.push_row(vec![Cell::Float(f64::NAN)]);
        assert_eq!(t2.to_json_value()["rows"][0][0], serde_json::Value::Null);
    }

    #[test]
    fn empty_table_emits_header_only() {
        let t = ResultTable::new("empty", provenance(), &[("a", "1")]);
        let csv = t.to_csv_string();
        assert!(csv.ends_with("a\n"));
        assert_eq!(csv.lines().count(), 7);
    }
}
