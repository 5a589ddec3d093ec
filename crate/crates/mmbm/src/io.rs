//! Model files, CSV tables and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mmbm_core::{Error, MmbmModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diag::CliError;

/// On-disk model: `{"Q": [[...]], "mu": [...], "sigma2": [...], "b": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub b: f64,
}

impl ModelFile {
    pub fn from_model(model: &MmbmModel) -> Self {
        let q = model.q();
        Self {
            q: (0..q.nrows()).map(|i| q.row(i).iter().copied().collect()).collect(),
            mu: model.mu().iter().copied().collect(),
            sigma2: model.sigma2().iter().copied().collect(),
            b: model.b(),
        }
    }

    /// Validates and builds the model.
    pub fn to_model(&self) -> Result<MmbmModel, Error> {
        let m = self.q.len();
        if self.q.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("Q must be square".into()));
        }
        let q = DMatrix::from_fn(m, m, |i, j| self.q[i][j]);
        mmbm_core::validate_model(
            q,
            DVector::from_vec(self.mu.clone()),
            DVector::from_vec(self.sigma2.clone()),
            self.b,
        )
    }
}

pub fn load_model(path: &Path) -> Result<MmbmModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input("IoError", format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input("InvalidModelFile", format!("{}: {e}", path.display())))?;
    Ok(file.to_model()?)
}

/// CSV number format: 17 significant digits, enough to round-trip a double.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// `prefix,phase_1,...,phase_m`.
pub fn phase_header(prefix: &[&str], m: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=m).map(|i| format!("phase_{i}")))
        .collect()
}

/// Collects the files of one run and writes each atomically.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::input("IoError", format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        self.write_text(name, &table.to_csv())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::numerical("SerializeError", e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::input("IoError", format!("cannot write {}: {e}", path.display()));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
