use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ProjectConfig;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance record written next to every artifact set. Contains no
/// timestamps, so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    /// Full configuration text, so a run can be replayed from the manifest.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &ProjectConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config.hash.clone(),
            config: config.text.clone(),
            seeds: BTreeMap::new(),
            threads: rayon::current_num_threads(),
            outputs: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.into(), seed);
        self
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    /// Records the hash of `dir/name`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs
            .insert(name.into(), file_sha256(&dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Writes a CSV table with a header row.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV table into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Format {
            path: path.display().to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v}")
}
