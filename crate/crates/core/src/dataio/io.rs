//! On-disk layout: a `dataset.json` manifest next to headerless CSV files.
//!
//! ```json
//! {
//!   "n_samples": 4,
//!   "views": [{"name": "view0", "file": "view0.csv", "dim": 2}],
//!   "mask_file": "mask.csv",
//!   "labels_file": "labels.csv"
//! }
//! ```
//!
//! `mask_file` and `labels_file` are optional; a missing mask means every
//! slot is observed. File paths are relative to the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::MultiViewDataset;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub file: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<String>,
    pub n_samples: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, record: &csv::StringRecord, detail: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: record.position().map_or(0, |p| p.line()),
        detail,
    }
}

fn read_rows<T: std::str::FromStr>(path: &Path, width: Option<usize>) -> Result<Vec<Vec<T>>> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        if let Some(w) = width {
            if record.len() != w {
                return Err(parse_error(path, &record, format!("expected {w} columns, found {}", record.len())));
            }
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<T>()
                    .map_err(|_| parse_error(path, &record, format!("malformed value `{cell}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path, dim: usize) -> Result<Array2<f64>> {
    let rows = read_rows::<f64>(path, Some(dim))?;
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, dim), rows.into_iter().flatten().collect()).expect("row widths checked"))
}

pub fn read_mask(path: &Path, n_views: usize) -> Result<Array2<u8>> {
    let rows = read_rows::<u8>(path, Some(n_views))?;
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, n_views), rows.into_iter().flatten().collect()).expect("row widths checked"))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    Ok(read_rows::<usize>(path, Some(1))?.into_iter().map(|r| r[0]).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Rows as comma-separated shortest round-trip decimals.
pub fn write_matrix<T: std::fmt::Display>(path: &Path, m: &Array2<T>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: e.line() as u64,
        detail: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |f: &str| -> PathBuf { base.join(f) };

    let mut views = Vec::with_capacity(manifest.views.len());
    for entry in &manifest.views {
        let x = read_matrix(&resolve(&entry.file), entry.dim)?;
        if x.nrows() != manifest.n_samples {
            return Err(Error::Validation(format!(
                "view `{}` has {} rows, manifest declares n_samples={}",
                entry.name,
                x.nrows(),
                manifest.n_samples
            )));
        }
        views.push(x);
    }
    let mask = match &manifest.mask_file {
        Some(f) => read_mask(&resolve(f), views.len())?,
        None => Array2::ones((manifest.n_samples, views.len())),
    };
    let labels = manifest
        .labels_file
        .as_deref()
        .map(|f| read_labels(&resolve(f)))
        .transpose()?;
    let names = manifest.views.iter().map(|e| e.name.clone()).collect();
    MultiViewDataset::new(views, mask, labels, names)
}

/// Accepts either a manifest file or the directory holding `dataset.json`.
pub fn load_dataset_at(path: &Path) -> Result<MultiViewDataset> {
    if path.is_dir() {
        load_dataset(&path.join(MANIFEST_FILE))
    } else {
        load_dataset(path)
    }
}

/// Write `dataset` into `dir` (created if needed); returns the manifest path.
/// The mask file is omitted when every slot is observed.
pub fn write_dataset(dir: &Path, dataset: &MultiViewDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.n_views());
    for (v, name) in dataset.names().iter().enumerate() {
        let file = format!("view{v}.csv");
        write_matrix(&dir.join(&file), dataset.view(v))?;
        entries.push(ViewEntry {
            name: name.clone(),
            file,
            dim: dataset.view_dim(v),
        });
    }
    let mask_file = if dataset.missing_count() > 0 {
        write_matrix(&dir.join("mask.csv"), dataset.mask())?;
        Some("mask.csv".to_string())
    } else {
        None
    };
    let labels_file = match dataset.labels() {
        Some(l) => {
            write_labels(&dir.join("labels.csv"), l)?;
            Some("labels.csv".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        views: entries,
        mask_file,
        labels_file,
        n_samples: dataset.n_samples(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&path, &(json + "\n"))?;
    Ok(path)
}
