//! File ingestion and the buffered output set: every command computes all of
//! its artifacts in memory first, then writes them together with a run
//! manifest, so a failing run never leaves partial outputs behind.

use crate::errors::{CliError, CliResult};
use lsem_core::graph::MixedGraph;
use lsem_core::linalg::Matrix;
use lsem_core::scm::{ObservationBatch, Parameters};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub fn load_matrix_csv(path: &Path) -> CliResult<Matrix> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    Matrix::read_csv(&mut bytes.as_slice())
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_graph_json(path: &Path) -> CliResult<MixedGraph> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_params_json(path: &Path) -> CliResult<Parameters> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Observational data: a header of variable names followed by one row per
/// sample.
pub fn load_data_csv(path: &Path) -> CliResult<(Vec<String>, ObservationBatch)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(CliError::validation(format!(
            "{}: data file has no columns",
            path.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let row: Result<Vec<f64>, _> = record.iter().map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| {
            CliError::validation(format!("{}: non-numeric value on row {k}", path.display()))
        })?;
        if row.len() != names.len() {
            return Err(CliError::validation(format!(
                "{}: row {k} has {} fields, expected {}",
                path.display(),
                row.len(),
                names.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let data = Matrix::from_rows(rows)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok((names, ObservationBatch { data }))
}

pub fn data_csv_bytes(names: &[String], data: &Matrix) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..data.rows() {
        let line: Vec<String> = data.row(r).iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// Subtracts each column's mean (for external data that is not zero-mean).
pub fn center_columns(data: &Matrix) -> Matrix {
    let (m, n) = (data.rows(), data.cols());
    let mut means = vec![0.0f64; n];
    for r in 0..m {
        for (j, mean) in means.iter_mut().enumerate() {
            *mean += data[(r, j)];
        }
    }
    for mean in means.iter_mut() {
        *mean /= m as f64;
    }
    Matrix::from_fn(m, n, |r, j| data[(r, j)] - means[j])
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: serde_json::Value,
    outputs: Vec<ManifestEntry>,
    plot_recipes: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
}

/// In-memory output staging for experiment commands.
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
    plot_recipes: Vec<String>,
}

impl OutputSet {
    pub fn new() -> Self {
        OutputSet {
            files: Vec::new(),
            plot_recipes: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::validation(format!("serialization failed: {e}")))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn recipe(&mut self, line: impl Into<String>) {
        self.plot_recipes.push(line.into());
    }

    /// Writes every staged file plus `run_manifest.json` into `out_dir`.
    pub fn write_all(
        self,
        out_dir: &Path,
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
    ) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(out_dir).map_err(|e| {
            CliError::validation(format!("cannot create {}: {e}", out_dir.display()))
        })?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            outputs: self
                .files
                .iter()
                .map(|(name, bytes)| ManifestEntry {
                    file: name.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
            plot_recipes: self.plot_recipes,
        };
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = out_dir.join(name);
            fs::write(&path, bytes)
                .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
            written.push(path);
        }
        let manifest_path = out_dir.join("run_manifest.json");
        let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| CliError::validation(format!("manifest serialization failed: {e}")))?;
        manifest_bytes.push(b'\n');
        fs::write(&manifest_path, manifest_bytes).map_err(|e| {
            CliError::validation(format!("cannot write {}: {e}", manifest_path.display()))
        })?;
        written.push(manifest_path);
        Ok(written)
    }
}
