use std::fmt;
use std::io::Write;

use lacelab::Error;
use serde_json::{json, Value};

use crate::config::{Format, VERSION};

/// Rows of a CSV table, already formatted.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Result of one command: the same content as JSON and as a table, plus
/// whether a hard invariant failed.
#[derive(Debug)]
pub struct Artifact {
    pub json: Value,
    pub table: Table,
    pub invariant_failure: Option<String>,
    /// One-line summary for stderr.
    pub message: Option<String>,
}

impl Artifact {
    pub fn new(json: Value, table: Table) -> Self {
        Artifact {
            json,
            table,
            invariant_failure: None,
            message: None,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs the model cannot run with: exit 2.
    Usage(String),
    /// A hard invariant failed: exit 1.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

fn is_invariant(e: &Error) -> bool {
    match e {
        Error::MassMismatch { .. } => true,
        Error::Stage { source, .. } => is_invariant(source),
        _ => false,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if is_invariant(&e) {
            CliError::Invariant(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("output: {e}"))
    }
}

/// Formats the artifact with its header: `#` comment lines for CSV, a
/// `lacelab` object for JSON.
pub fn render(artifact: &Artifact, config: &Value, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let doc = json!({
                "lacelab": { "version": VERSION, "config": config },
                "result": artifact.json,
            });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut out = Vec::new();
            writeln!(out, "# lacelab {VERSION}")?;
            writeln!(out, "# config: {config}")?;
            let mut w = csv::Writer::from_writer(out);
            let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
            w.write_record(&artifact.table.header).map_err(csv_err)?;
            for row in &artifact.table.rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}
