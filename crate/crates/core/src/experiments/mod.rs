//! Scenario files, parameter sweeps, presets and tabular output.
//!
//! A scenario names an engine, a base configuration and one or two sweep
//! axes. Every grid point becomes one output row that echoes the full
//! materialised configuration. Points run in parallel, but rows are always
//! written in grid order, and each point's seed depends only on the master
//! seed and the point index.

mod presets;
mod runner;
mod scenario;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use presets::{list_presets, preset, PresetInfo};
pub use runner::{point_seed, run_scenario, RunOptions, ScenarioOutcome};
pub use scenario::{
    AttackSpec, Engine, Format, HierarchySpec, OutputSpec, Point, PointConfig, Replication,
    ScenarioSpec, SweepAxis, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no sweep point could be evaluated ({skipped} skipped)")]
    NothingEvaluated { skipped: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl ExperimentError {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Malformed(_) => 2,
            ExperimentError::Io { .. } => 3,
            ExperimentError::NothingEvaluated { .. } | ExperimentError::ThreadPool(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Float(v) => Some(v),
            Cell::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Float(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(u64::from(v))
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Rows in grid order, all with the same columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&Cell> {
        self.column_index(column).map(|c| &self.rows[row][c])
    }

    pub fn f64(&self, row: usize, column: &str) -> Option<f64> {
        self.get(row, column).and_then(Cell::as_f64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv))?;
        }
        w.flush()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.rows {
            let obj: serde_json::Map<String, serde_json::Value> = self
                .columns
                .iter()
                .cloned()
                .zip(row.iter().map(Cell::to_json))
                .collect();
            serde_json::to_writer(&mut out, &obj)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Writes the table. CSV output starts with a `# generated_at_unix=<s>`
    /// comment line when `timestamp` is set; JSON lines never carry one.
    pub fn write<W: Write>(
        &self,
        mut out: W,
        format: Format,
        timestamp: bool,
    ) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                if timestamp {
                    let secs = std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map_or(0, |d| d.as_secs());
                    writeln!(out, "# generated_at_unix={secs}")?;
                }
                self.write_csv(out)
            }
            Format::Jsonl => self.write_jsonl(out),
        }
    }

    pub fn write_to_path(
        &self,
        path: &Path,
        format: Format,
        timestamp: bool,
    ) -> Result<(), ExperimentError> {
        let io = |source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        self.write(std::io::BufWriter::new(file), format, timestamp)
            .map_err(io)
    }
}
