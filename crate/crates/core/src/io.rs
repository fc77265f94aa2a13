//! File formats: ROI time-series CSV, the `.cmx` binary matrix container and
//! the dataset manifest JSON.
//!
//! `.cmx` layout, all little-endian: magic `CMX1`, `u32` ROI count N,
//! `u8` metric code (0 = correlation, 1 = dtw_distance, 2 = path_length),
//! then N·N IEEE-754 f64 values in row-major order. The container is
//! bit-exact: `load_matrix(save_matrix(m))` reproduces `m` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ConnectivityMatrix, ConnectivityMetric, Dataset, LabeledInstance, RoiTimeSeries};

const CMX_MAGIC: &[u8; 4] = b"CMX1";

/// Parse a ROI time-series CSV: header row of ROI identifiers, one row per
/// timepoint, decimal-point floats. Column order follows the header.
pub fn load_timeseries(path: &Path) -> Result<RoiTimeSeries> {
    let file = File::open(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let n = reader
        .headers()
        .map_err(|e| Error::format(path, format!("header: {e}")))?
        .len();
    if n < 2 {
        return Err(Error::format(path, format!("need at least 2 ROI columns, found {n}")));
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut t = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, format!("row {}: {e}", row_idx + 1)))?;
        if record.len() != n {
            return Err(Error::format(
                path,
                format!("row {}: has {} fields, header has {n}", row_idx + 1, record.len()),
            ));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("row {}, column {}: invalid number '{field}'", row_idx + 1, col_idx + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("row {}, column {}: non-finite value '{field}'", row_idx + 1, col_idx + 1),
                ));
            }
            rows.push(v);
        }
        t += 1;
    }
    if t < 2 {
        return Err(Error::format(path, format!("need at least 2 timepoint rows, found {t}")));
    }
    let values = Array2::from_shape_vec((t, n), rows)
        .map_err(|e| Error::format(path, format!("shape: {e}")))?;
    RoiTimeSeries::new(values).map_err(|e| Error::format(path, e.to_string()))
}

/// Write a ROI time-series CSV with generated headers `roi_0..roi_{N-1}`.
pub fn save_timeseries(ts: &RoiTimeSeries, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..ts.roi_count()).map(|i| format!("roi_{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in ts.values().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Write a connectivity matrix to the `.cmx` binary container.
pub fn save_matrix(matrix: &ConnectivityMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CMX_MAGIC)?;
    out.write_all(&(matrix.size() as u32).to_le_bytes())?;
    out.write_all(&[matrix.metric().code()])?;
    for v in matrix.values().iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a `.cmx` container, validating the header, payload size and the
/// matrix invariants (exact symmetry, diagonal convention, finiteness).
pub fn load_matrix(path: &Path) -> Result<ConnectivityMatrix> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "file shorter than header"))?;
    if &magic != CMX_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected \"CMX1\"")));
    }
    let mut n_bytes = [0u8; 4];
    file.read_exact(&mut n_bytes)
        .map_err(|_| Error::format(path, "file shorter than header"))?;
    let n = u32::from_le_bytes(n_bytes) as usize;
    let mut code = [0u8; 1];
    file.read_exact(&mut code)
        .map_err(|_| Error::format(path, "file shorter than header"))?;
    let metric = ConnectivityMetric::from_code(code[0])
        .ok_or_else(|| Error::format(path, format!("unknown metric code {}", code[0])))?;

    let expected = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::format(path, format!("ROI count {n} overflows payload size")))?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::format(
            path,
            format!("payload shorter than N*N*8 bytes: got {}, expected {expected}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            path,
            format!("payload longer than N*N*8 bytes: got {}, expected {expected}", payload.len()),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((n, n), values)
        .map_err(|e| Error::format(path, format!("shape: {e}")))?;
    ConnectivityMatrix::new(metric, values).map_err(|e| Error::format(path, e.to_string()))
}

/// CSV export of a matrix for inspection. The binary container remains the
/// authoritative round-trip format.
pub fn export_matrix_csv(matrix: &ConnectivityMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in matrix.values().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One instance entry of a dataset manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInstance {
    pub id: String,
    pub label: u8,
    pub subject_id: String,
    pub channel_files: Vec<String>,
}

/// Dataset manifest: declares the channel layout and lists per-instance
/// channel files (paths are resolved relative to the manifest's directory).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub roi_count: usize,
    pub channel_metrics: Vec<ConnectivityMetric>,
    pub instances: Vec<ManifestInstance>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, format!("manifest json: {e}")))
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Load a full dataset: read the manifest and every referenced `.cmx` file.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut instances = Vec::with_capacity(manifest.instances.len());
    for entry in &manifest.instances {
        if entry.channel_files.len() != manifest.channel_metrics.len() {
            return Err(Error::format(
                manifest_path,
                format!(
                    "instance '{}' lists {} channel files, manifest declares {} channels",
                    entry.id,
                    entry.channel_files.len(),
                    manifest.channel_metrics.len()
                ),
            ));
        }
        let mut channels = Vec::with_capacity(entry.channel_files.len());
        for file in &entry.channel_files {
            channels.push(load_matrix(&base.join(file))?);
        }
        instances.push(LabeledInstance::new(
            entry.id.clone(),
            entry.label,
            entry.subject_id.clone(),
            channels,
        )?);
    }
    Dataset::new(manifest.roi_count, manifest.channel_metrics, instances)
}

/// Persist a dataset as one `.cmx` per instance channel plus `manifest.json`.
/// Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(dataset.len());
    for inst in &dataset.instances {
        let mut files = Vec::with_capacity(inst.channels.len());
        for (ci, channel) in inst.channels.iter().enumerate() {
            let name = format!("{}_ch{}.cmx", inst.id, ci);
            save_matrix(channel, &dir.join(&name))?;
            files.push(name);
        }
        entries.push(ManifestInstance {
            id: inst.id.clone(),
            label: inst.label,
            subject_id: inst.subject_id.clone(),
            channel_files: files,
        });
    }
    let manifest = DatasetManifest {
        roi_count: dataset.roi_count,
        channel_metrics: dataset.channel_metrics.clone(),
        instances: entries,
    };
    let path = dir.join("manifest.json");
    save_manifest(&manifest, &path)?;
    Ok(path)
}
