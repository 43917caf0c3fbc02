use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use klopt::search::TraceRecord;
use klopt::SeedSpec;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub seed: SeedSpec,
    pub artifact_version: String,
    /// Excluded from reproducibility comparisons.
    pub started_at: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub body: Value,
}

impl Report {
    pub fn new(command: &str, args: &impl Serialize, seed: SeedSpec, body: Value) -> Self {
        let parameters = match serde_json::to_value(args).expect("arguments serialize") {
            Value::Object(map) => map.into_iter().collect(),
            other => BTreeMap::from([("value".to_owned(), other)]),
        };
        Self {
            manifest: RunManifest {
                command: command.to_owned(),
                parameters,
                seed,
                artifact_version: env!("CARGO_PKG_VERSION").to_owned(),
                started_at: chrono::Utc::now().to_rfc3339(),
            },
            body,
        }
    }
}

pub fn emit(report: &Report) {
    println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
}

pub fn write_json(path: &Path, report: &Report) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for rec in trace {
        w.serialize(rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
