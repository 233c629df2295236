//! Run manifest: what ran, on which inputs, and what it produced.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    /// CSV column left out of the hash because it holds wall-clock times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash_excludes: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub notes: Map<String, Value>,
    pub timings_ms: Map<String, Value>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Hash of a CSV with one named column dropped.
fn masked_csv_hash(bytes: &[u8], column: &str) -> String {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let skip = header.iter().position(|h| *h == column);
    let mut h = Sha256::new();
    let mut emit = |line: &str| {
        let kept: Vec<&str> = line.split(',').enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, c)| c).collect();
        h.update(kept.join(",").as_bytes());
        h.update(b"\n");
    };
    emit(&header.join(","));
    lines.for_each(&mut emit);
    hex(&h.finalize())
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Map::new(),
            timings_ms: Map::new(),
        }
    }

    fn artifact(path: &Path, mask: Option<&str>) -> Result<Artifact, CliError> {
        let bytes = read(path)?;
        let sha256 = match mask {
            Some(col) => masked_csv_hash(&bytes, col),
            None => hex(&Sha256::digest(&bytes)),
        };
        Ok(Artifact { path: path.display().to_string(), sha256, hash_excludes: mask.map(str::to_string) })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(Self::artifact(path, None)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(Self::artifact(path, None)?);
        Ok(())
    }

    pub fn add_output_masked(&mut self, path: &Path, column: &str) -> Result<(), CliError> {
        self.outputs.push(Self::artifact(path, Some(column))?);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.notes.insert(key.to_string(), value);
    }

    pub fn timing(&mut self, key: &str, since: Instant) {
        self.timings_ms.insert(key.to_string(), Value::from(since.elapsed().as_secs_f64() * 1e3));
    }
}
