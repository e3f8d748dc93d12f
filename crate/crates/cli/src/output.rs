//! Run header, artifacts and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{command_name, RunConfig};
use crate::error::CliError;

/// A named pass/fail check whose failure makes the run exit with code 1.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

pub enum Artifact {
    Json(Value),
    Csv(Vec<u8>),
}

pub struct RunOutput {
    pub summary: Value,
    pub gates: Vec<Gate>,
    /// Extra files, by name with extension.
    pub artifacts: Vec<(String, Artifact)>,
}

impl RunOutput {
    pub fn new(summary: Value) -> Self {
        Self {
            summary,
            gates: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn gate(&mut self, gate: Gate) {
        self.gates.push(gate);
    }

    pub fn csv(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts
            .push((name.to_string(), Artifact::Csv(bytes)));
    }

    pub fn json(&mut self, name: &str, value: Value) {
        self.artifacts
            .push((name.to_string(), Artifact::Json(value)));
    }

    pub fn failures(&self) -> Vec<&Gate> {
        self.gates.iter().filter(|g| !g.passed).collect()
    }
}

pub fn header(cfg: &RunConfig) -> Value {
    json!({
        "tool": "riesz-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command_name(cfg.command()),
        "seed": cfg.seed(),
        "config": cfg,
    })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json values serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(bytes).map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Emits the run to `cfg.out` (one file per artifact) or to stdout.
pub fn emit(cfg: &RunConfig, out: &RunOutput) -> Result<(), CliError> {
    let head = header(cfg);
    let mut summary = json!({ "header": head.clone(), "summary": out.summary.clone() });
    summary["gates"] = serde_json::to_value(&out.gates).expect("gates serialize");
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            write_atomic(&dir.join("header.json"), &pretty(&head))?;
            write_atomic(&dir.join("summary.json"), &pretty(&summary))?;
            for (name, art) in &out.artifacts {
                let bytes = match art {
                    Artifact::Json(v) => pretty(v),
                    Artifact::Csv(b) => b.clone(),
                };
                write_atomic(&dir.join(name), &bytes)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let mut text = pretty(&summary);
            for (name, art) in &out.artifacts {
                text.extend_from_slice(format!("# {name}\n").as_bytes());
                match art {
                    Artifact::Json(v) => text.extend(pretty(v)),
                    Artifact::Csv(b) => text.extend_from_slice(b),
                }
            }
            stdout
                .write_all(&text)
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

/// Serializes rows with the csv crate.
pub fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Io(format!("csv: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(format!("csv: {e}")))
}
