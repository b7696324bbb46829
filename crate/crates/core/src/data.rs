//! Dataset ingestion and result persistence.
//!
//! * IDX containers (the MNIST format), optionally gzip-compressed.
//! * Synthetic isotropic Gaussian blobs.
//! * Result CSVs with a fixed schema and JSON-lines event logs.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};
use crate::harness::{Event, RunResult};
use crate::rng::rng_from;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Column header of the result CSV.
pub const RESULTS_HEADER: [&str; 10] = [
    "strategy",
    "denoise",
    "epsilon",
    "repetition",
    "iteration",
    "acquired",
    "accuracy",
    "sigma",
    "beta",
    "seconds",
];

/// Features with labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("dataset features contain NaN"));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_len(file: &str, bytes: &[u8], expected: usize) -> Result<(), IdxError> {
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            file: file.to_owned(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(file: &str, bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    check_len(file, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(IdxError::BadMagic {
            file: file.to_owned(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image file (`n × rows × cols` unsigned bytes).
pub fn parse_idx_images(file: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), IdxError> {
    check_magic(file, bytes, IDX_IMAGES_MAGIC)?;
    check_len(file, bytes, 16)?;
    let n = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let expected = 16 + n * rows * cols;
    check_len(file, bytes, expected)?;
    Ok((n, rows * cols, bytes[16..expected].to_vec()))
}

/// Parses an IDX label file (`n` unsigned bytes).
pub fn parse_idx_labels(file: &str, bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(file, bytes, IDX_LABELS_MAGIC)?;
    check_len(file, bytes, 8)?;
    let n = be_u32(bytes, 4) as usize;
    check_len(file, bytes, 8 + n)?;
    Ok(bytes[8..8 + n].to_vec())
}

/// Loads an IDX image/label pair; pixels are scaled to `[0, 1]`.
/// Gzip-compressed files are detected by their header.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_maybe_gz(images_path)?;
    let lbl_bytes = read_maybe_gz(labels_path)?;
    let (n, d, pixels) = parse_idx_images(&images_path.display().to_string(), &img_bytes)?;
    let labels = parse_idx_labels(&labels_path.display().to_string(), &lbl_bytes)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.len(),
        }
        .into());
    }
    let features = Array2::from_shape_vec((n, d), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("shape checked");
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(features, labels, num_classes)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let result = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes).and_then(|_| enc.finish().map(|_| ()))
    } else {
        let mut file = file;
        file.write_all(bytes)
    };
    result.map_err(|e| Error::io(path, e))
}

/// Writes an IDX image file; gzip-compressed when the path ends in `.gz`.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::domain("pixel buffer is not a whole number of images"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend(((pixels.len() / per) as u32).to_be_bytes());
    out.extend((rows as u32).to_be_bytes());
    out.extend((cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    write_maybe_gz(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    write_maybe_gz(path, &out)
}

/// `num_classes` unit-variance Gaussian clusters in `dim` dimensions whose
/// centers are pairwise at least `separation` apart. Centers sit on a
/// randomly rotated regular polygon in the first two coordinates (on a line
/// when `dim == 1`); samples are ordered by class.
pub fn make_blobs(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || n_per_class == 0 || dim == 0 {
        return Err(Error::domain("blobs need K >= 2, n_per_class >= 1 and dim >= 1"));
    }
    if !(separation > 0.0) {
        return Err(Error::domain("blob separation must be positive"));
    }
    let mut rng = rng_from(seed, &[0xb10b]);
    let mut centers = Array2::<f64>::zeros((num_classes, dim));
    if dim == 1 {
        for k in 0..num_classes {
            centers[[k, 0]] = k as f64 * separation;
        }
    } else {
        let angle = std::f64::consts::PI / num_classes as f64;
        let radius = separation / (2.0 * angle.sin());
        let phase = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        for k in 0..num_classes {
            let a = phase + 2.0 * angle * k as f64;
            centers[[k, 0]] = radius * a.cos();
            centers[[k, 1]] = radius * a.sin();
        }
    }
    let n = num_classes * n_per_class;
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for k in 0..num_classes {
        for i in 0..n_per_class {
            let r = k * n_per_class + i;
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                features[[r, j]] = centers[[k, j]] + z;
            }
            labels.push(k);
        }
    }
    Dataset::new(features, labels, num_classes)
}

/// Formats `x` with at most six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("valid float");
    format!("{rounded}")
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub denoise: bool,
    pub epsilon: f64,
    pub repetition: usize,
    pub iteration: usize,
    pub acquired: usize,
    pub accuracy: f64,
    pub sigma: f64,
    pub beta: f64,
    pub seconds: f64,
}

fn result_fields(result: &RunResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for rep in &result.repetitions {
        for rec in &rep.records {
            rows.push(vec![
                result.strategy.to_string(),
                result.denoise.to_string(),
                fmt_sig6(result.epsilon),
                rep.repetition.to_string(),
                rec.iteration.to_string(),
                rec.acquired.to_string(),
                fmt_sig6(rec.accuracy),
                fmt_sig6(rec.sigma),
                fmt_sig6(rec.beta),
                fmt_sig6(rec.seconds),
            ]);
        }
    }
    rows
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// One row per (repetition, iteration) with the fixed [`RESULTS_HEADER`].
pub fn write_results(result: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RESULTS_HEADER).map_err(csv_err(path))?;
    for row in result_fields(result) {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A labelled group of curves for a combined CSV.
#[derive(Debug, Clone)]
pub struct CurveGroup<'a> {
    pub variant: &'a str,
    pub epochs: usize,
    pub result: &'a RunResult,
}

/// Writes several runs into one CSV: `variant,epochs` followed by the
/// standard columns.
pub fn write_combined_results(groups: &[CurveGroup<'_>], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["variant", "epochs"];
    header.extend(RESULTS_HEADER);
    w.write_record(&header).map_err(csv_err(path))?;
    for g in groups {
        for row in result_fields(g.result) {
            let mut full = vec![g.variant.to_owned(), g.epochs.to_string()];
            full.extend(row);
            w.write_record(&full).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(Error::domain(format!(
            "{}: unexpected header {:?}",
            path.display(),
            headers
        )));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(csv_err(path))
}

/// One JSON object per line.
pub fn write_events(events: &[Event], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ev in events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
