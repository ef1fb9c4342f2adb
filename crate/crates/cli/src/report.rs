//! CSV tables and the JSON summary written to the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Rows of one CSV file.
pub struct Table {
    pub name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
        w.write_record(&self.header).map_err(|e| io_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| io_error(path, e))?;
        }
        w.flush().map_err(|e| io_error(path, e.into()))
    }
}

/// Shortest round-tripping decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Everything a command produces.
pub struct Report {
    pub command: &'static str,
    pub passed: bool,
    /// Some estimate did not converge (e.g. a divergent inner integral).
    pub numerical_failure: bool,
    pub tables: Vec<Table>,
    pub summary: Value,
    /// Extra files, as `(name, contents)`.
    pub files: Vec<(String, String)>,
}

impl Report {
    /// Writes the tables, the summary, the extra files and the resolved configuration.
    pub fn write(&self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        let dir = &cfg.out;
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for t in &self.tables {
            t.write(&dir.join(format!("{}.csv", t.name)))?;
        }
        for (name, text) in &self.files {
            write_file(&dir.join(name), text)?;
        }
        write_file(&dir.join("config.toml"), &cfg.to_toml()?)?;
        let path = dir.join(format!("{}.json", self.command));
        write_file(&path, &self.summary_json(cfg)?)?;
        Ok(path)
    }

    pub fn exit_code(&self) -> u8 {
        if self.numerical_failure {
            crate::exit::NUMERICAL
        } else if self.passed {
            crate::exit::PASS
        } else {
            crate::exit::INVARIANT
        }
    }

    pub fn summary_json(&self, cfg: &RunConfig) -> Result<String, CliError> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "seed": cfg.seed,
            "passed": self.passed,
            "numerical_failure": self.numerical_failure,
            "result": self.summary,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

/// JSON value of `x`; non-finite floats become `null`.
pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn io_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}
