use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{LeadField, Modality};
use crate::error::{Error, Result};

/// JSON sidecar of a binary lead-field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadFieldHeader {
    pub rows: usize,
    pub cols: usize,
    pub modality: Modality,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub binary: String,
    pub positions: Vec<[f64; 3]>,
    pub orientations: Vec<[f64; 3]>,
    pub sigma_hash: Option<String>,
    pub background: Option<Vec<f64>>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

impl LeadField {
    pub fn header(&self, binary: &str) -> LeadFieldHeader {
        LeadFieldHeader {
            rows: self.rows(),
            cols: self.dofs(),
            modality: self.modality,
            dtype: "float64".into(),
            byte_order: "little".into(),
            layout: "column-major".into(),
            binary: binary.into(),
            positions: self.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            orientations: self.orientations.iter().map(|o| [o.x, o.y, o.z]).collect(),
            sigma_hash: self.sigma_hash.clone(),
            background: self.background.as_ref().map(|b| b.as_slice().to_vec()),
        }
    }

    /// Writes `<stem>.bin` (little-endian f64, column-major) and
    /// `<stem>.json`, plus `<stem>.csv` (one row per matrix row) if `csv`.
    pub fn save(&self, stem: impl AsRef<Path>, csv: bool) -> Result<()> {
        let stem = stem.as_ref();
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bin = with_ext(stem, "bin");
        let bytes: Vec<u8> = self
            .matrix
            .as_slice()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let name = bin
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let json = with_ext(stem, "json");
        let text = serde_json::to_string_pretty(&self.header(&name))
            .map_err(|e| Error::Data(e.to_string()))?;
        fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        if csv {
            let path = with_ext(stem, "csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
            for i in 0..self.rows() {
                let row: Vec<String> = self
                    .matrix
                    .row(i)
                    .iter()
                    .map(|v| format!("{v:e}"))
                    .collect();
                w.write_record(&row).map_err(|e| csv_error(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads a lead field written by [`LeadField::save`]; `stem` may also be
    /// the path of the `.json` sidecar.
    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let stem = if stem.extension().is_some_and(|e| e == "json" || e == "bin") {
            stem.with_extension("")
        } else {
            stem.to_path_buf()
        };
        let json = with_ext(&stem, "json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let h: LeadFieldHeader = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: json.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let bin = json.with_file_name(&h.binary);
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != 8 * h.rows * h.cols {
            return Err(Error::Format {
                path: bin.display().to_string(),
                line: 0,
                message: format!(
                    "expected {} bytes for a {}x{} matrix, found {}",
                    8 * h.rows * h.cols,
                    h.rows,
                    h.cols,
                    bytes.len()
                ),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if h.positions.len() != h.cols {
            return Err(Error::Format {
                path: json.display().to_string(),
                line: 0,
                message: "one position per column is required".into(),
            });
        }
        Ok(LeadField {
            matrix: DMatrix::from_vec(h.rows, h.cols, values),
            positions: h
                .positions
                .iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
            orientations: h
                .orientations
                .iter()
                .map(|o| Vector3::new(o[0], o[1], o[2]))
                .collect(),
            modality: h.modality,
            sigma_hash: h.sigma_hash,
            background: h.background.map(DVector::from_vec),
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}
