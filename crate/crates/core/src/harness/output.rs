use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => x.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
            Value::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => (*i).into(),
            // non-finite floats have no JSON form
            Value::Float(x) => serde_json::Number::from_f64(*x)
                .map_or(serde_json::Value::Null, serde_json::Value::Number),
            Value::Bool(b) => (*b).into(),
            Value::Text(s) => s.clone().into(),
            Value::Empty => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Int(x as i64)
    }
}

impl From<u32> for Value {
    fn from(x: u32) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Empty, Value::Float)
    }
}

/// Row-oriented table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Fails early when `dir` cannot be created or written to.
pub fn prepare_out_dir(dir: &Path) -> Result<(), HarnessError> {
    let fail = |e: std::io::Error| HarnessError::Output(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".srde-write-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

/// Writes `table` to `dir/stem.{csv,jsonl}` and returns the path.
pub fn write_table(dir: &Path, stem: &str, table: &Table, format: Format) -> Result<PathBuf, HarnessError> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let fail = |e: String| HarnessError::Output(format!("{}: {e}", path.display()));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(&path).map_err(|e| fail(e.to_string()))?;
            w.write_record(&table.columns).map_err(|e| fail(e.to_string()))?;
            for row in &table.rows {
                w.write_record(row.iter().map(Value::csv))
                    .map_err(|e| fail(e.to_string()))?;
            }
            w.flush().map_err(|e| fail(e.to_string()))?;
        }
        Format::Jsonl => {
            let mut out = String::new();
            for row in &table.rows {
                out.push('{');
                for (i, (name, v)) in table.columns.iter().zip(row).enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(name).expect("string serializes"));
                    out.push(':');
                    out.push_str(&v.json().to_string());
                }
                out.push_str("}\n");
            }
            let mut f = fs::File::create(&path).map_err(|e| fail(e.to_string()))?;
            f.write_all(out.as_bytes()).map_err(|e| fail(e.to_string()))?;
        }
    }
    Ok(path)
}

/// Run metadata written next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, HarnessError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| HarnessError::Output(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}
