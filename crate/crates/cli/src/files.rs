//! On-disk formats: CSV tables, the binary subspace container, histograms
//! and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use insub_core::ActiveSubspace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SAMPLES: &str = "samples.csv";
pub const EIGENVALUES: &str = "eigenvalues.csv";
pub const SUBSPACE: &str = "subspace.bin";
pub const CONVERGENCE: &str = "convergence.csv";
pub const SVT_ERROR: &str = "svt_error.csv";
pub const DESIGN: &str = "design.csv";
pub const SAMPLER_STATS: &str = "sampler_stats.json";
pub const SURROGATE_MODEL: &str = "surrogate.rbf";
pub const ERROR_HIST: &str = "error_hist.csv";
pub const DENSITY_HIST: &str = "density_hist.csv";
pub const DENSITY_FULL: &str = "density_full.csv";
pub const DENSITY_SAMPLES: &str = "density_samples.csv";
pub const SURROGATE_SUMMARY: &str = "surrogate_summary.json";
pub const MANIFEST: &str = "manifest.json";

const SUBSPACE_MAGIC: &[u8; 8] = b"INSUBSS\0";
const SUBSPACE_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 50;

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV with one header row; every record ends with a newline.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a numeric CSV, returning the header and the rows. Empty cells
/// become NaN.
pub fn read_csv(path: &Path, stage: &'static str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if !path.exists() {
        return Err(CliError::MissingInput {
            path: path.to_path_buf(),
            stage,
        });
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>().map_err(|_| CliError::Invalid {
                        stage,
                        message: format!("{}: bad number `{cell}`", path.display()),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        _ => CliError::Invalid {
            stage: "io",
            message: format!("{}: {message}", path.display()),
        },
    }
}

pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Gradient samples: sites, values and gradients (`s_*, f, g_*`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub gradients: Vec<DVector<f64>>,
}

impl SampleTable {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.gradients)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let d = self.dim();
        let mut header = numbered("s", d);
        header.push("f".into());
        header.extend(numbered("g", d));
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .zip(&self.values)
            .zip(&self.gradients)
            .map(|((s, f), g)| {
                s.iter()
                    .chain(std::iter::once(f))
                    .chain(g.iter())
                    .map(|&x| fmt_float(x))
                    .collect()
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, rows) = read_csv(path, "detect")?;
        let d = header.iter().filter(|h| h.starts_with("s_")).count();
        if header.len() != 2 * d + 1 || rows.is_empty() {
            return Err(invalid("sample", path, "unexpected layout"));
        }
        Ok(Self {
            points: rows.iter().map(|r| DVector::from_column_slice(&r[..d])).collect(),
            values: rows.iter().map(|r| r[d]).collect(),
            gradients: rows.iter().map(|r| DVector::from_column_slice(&r[d + 1..])).collect(),
        })
    }
}

/// Design rows `y_*, s_*, g`.
pub fn write_design(path: &Path, reduced: &[DVector<f64>], lifted: &[DVector<f64>], values: &[f64]) -> Result<()> {
    let a = reduced.first().map_or(0, |y| y.len());
    let d = lifted.first().map_or(0, |s| s.len());
    let mut header = numbered("y", a);
    header.extend(numbered("s", d));
    header.push("g".into());
    let rows: Vec<Vec<String>> = reduced
        .iter()
        .zip(lifted)
        .zip(values)
        .map(|((y, s), g)| y.iter().chain(s.iter()).chain(std::iter::once(g)).map(|&x| fmt_float(x)).collect())
        .collect();
    write_csv(path, &header, &rows)
}

#[allow(clippy::type_complexity)]
pub fn read_design(path: &Path) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<f64>)> {
    let (header, rows) = read_csv(path, "sample")?;
    let a = header.iter().filter(|h| h.starts_with("y_")).count();
    let d = header.iter().filter(|h| h.starts_with("s_")).count();
    if header.len() != a + d + 1 || header.last().map(String::as_str) != Some("g") || rows.is_empty() {
        return Err(invalid("surrogate", path, "unexpected layout"));
    }
    Ok((
        rows.iter().map(|r| DVector::from_column_slice(&r[..a])).collect(),
        rows.iter().map(|r| DVector::from_column_slice(&r[a..a + d])).collect(),
        rows.iter().map(|r| r[a + d]).collect(),
    ))
}

fn invalid(stage: &'static str, path: &Path, what: &str) -> CliError {
    CliError::Invalid {
        stage,
        message: format!("{}: {what}", path.display()),
    }
}

/// Contents of `subspace.bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceFile {
    pub seed: u64,
    pub subspace: ActiveSubspace<f64>,
}

/// Little-endian layout: magic (8 bytes), version u32, d u64, a u64, seed u64,
/// eigenvalues (d f64), V_a (d·a f64, column-major), V_b (d·(d−a) f64).
pub fn write_subspace(path: &Path, file: &SubspaceFile) -> Result<()> {
    let sub = &file.subspace;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(SUBSPACE_MAGIC);
    bytes.extend_from_slice(&SUBSPACE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(sub.dim() as u64).to_le_bytes());
    bytes.extend_from_slice(&(sub.active_dim() as u64).to_le_bytes());
    bytes.extend_from_slice(&file.seed.to_le_bytes());
    for x in sub.eigenvalues().iter().chain(sub.basis_a().iter()).chain(sub.basis_b().iter()) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_subspace(path: &Path) -> Result<SubspaceFile> {
    if !path.exists() {
        return Err(CliError::MissingInput {
            path: path.to_path_buf(),
            stage: "detect",
        });
    }
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    let bad = |what: &str| invalid("detect", path, what);
    if bytes.len() < 36 || &bytes[..8] != SUBSPACE_MAGIC {
        return Err(bad("not a subspace file"));
    }
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != SUBSPACE_VERSION {
        return Err(bad("unsupported version"));
    }
    let (d, a, seed) = (u64_at(12) as usize, u64_at(20) as usize, u64_at(28));
    let expected = 36 + 8 * (d + d * d);
    if bytes.len() != expected || a == 0 || a > d {
        return Err(bad("inconsistent size"));
    }
    let floats: Vec<f64> = bytes[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let eigenvalues = DVector::from_column_slice(&floats[..d]);
    let basis = DMatrix::from_column_slice(d, d, &floats[d..]);
    let subspace = ActiveSubspace::from_parts(basis, eigenvalues, a).map_err(|e| bad(&e.to_string()))?;
    Ok(SubspaceFile { seed, subspace })
}

/// `HISTOGRAM_BINS` uniform bins over `[min, max]` of the finite values; a
/// degenerate range is widened to unit width.
pub fn histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for v in finite {
        let bin = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + width * i as f64, if i + 1 == HISTOGRAM_BINS { hi } else { lo + width * (i + 1) as f64 }, c))
        .collect()
}

pub fn write_histogram(path: &Path, values: &[f64]) -> Result<()> {
    let header = ["bin_left", "bin_right", "count"].map(String::from);
    let rows: Vec<Vec<String>> = histogram(values)
        .into_iter()
        .map(|(l, r, c)| vec![fmt_float(l), fmt_float(r), c.to_string()])
        .collect();
    write_csv(path, &header, &rows)
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler_stats: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svt_params: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<Vec<String>>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Manifest {
        fs::read_to_string(dir.join(MANIFEST))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    /// Re-inventories every file below `dir` (manifests excluded) and writes
    /// `manifest.json`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        let mut paths = Vec::new();
        collect_files(dir, dir, &mut paths)?;
        paths.sort();
        self.files = paths
            .into_iter()
            .map(|rel| {
                let full = dir.join(&rel);
                Ok(FileEntry {
                    bytes: fs::metadata(&full).map_err(|e| CliError::io(&full, e))?.len(),
                    sha256: sha256_file(&full)?,
                    path: rel.to_string_lossy().replace('\\', "/"),
                })
            })
            .collect::<Result<_>>()?;
        write_json(&dir.join(MANIFEST), &self)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST) {
            out.push(path.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}
