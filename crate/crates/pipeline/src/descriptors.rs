//! Per-vertex descriptor matrices on disk and their standardization.
//!
//! Text files hold one whitespace-separated row per vertex. Binary files
//! start with the tag `ACNNDSC\0`, a `u32` version and the `u64` row and
//! column counts, followed by row-major little-endian `f64` values.

use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use acnn::binio::{Decoder, Encoder};

use crate::error::user;

const MAGIC: &[u8; 8] = b"ACNNDSC\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut enc = Encoder::new(MAGIC, VERSION);
    enc.u64(m.nrows() as u64);
    enc.u64(m.ncols() as u64);
    for r in 0..m.nrows() {
        enc.f64s(m.row(r).iter().copied());
    }
    enc.finish()
}

pub fn decode_matrix(bytes: &[u8]) -> acnn::Result<DMatrix<f64>> {
    let mut dec = Decoder::new(bytes, MAGIC, VERSION)?;
    let rows = dec.usize()?;
    let cols = dec.usize()?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| acnn::Error::Format("matrix size overflow".into()))?;
    let values = dec.f64s(len)?;
    dec.finish()?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> acnn::Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| acnn::Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(acnn::Error::Parse {
                    line: i + 1,
                    msg: format!("{} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

/// Reads either format, telling them apart by the binary tag.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    let m = if bytes.starts_with(MAGIC) {
        decode_matrix(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| user(format!("{} is neither text nor a descriptor file", path.display())))?;
        parse_matrix(&text)
    }
    .with_context(|| format!("reading {}", path.display()))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(user(format!("{} contains non-finite values", path.display())));
    }
    Ok(m)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Text => std::fs::write(path, format_matrix(m)),
        MatrixFormat::Binary => std::fs::write(path, encode_matrix(m)),
    }
    .with_context(|| format!("writing {}", path.display()))
}

/// Column means and standard deviations over the training descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Statistics over the stacked rows of all `matrices`. Constant columns
    /// get unit deviation.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a DMatrix<f64>> + Clone) -> Result<Self> {
        let cols = matrices
            .clone()
            .into_iter()
            .next()
            .map(DMatrix::ncols)
            .ok_or_else(|| user("no descriptors to standardize"))?;
        let mut count = 0usize;
        let mut sum = vec![0.0; cols];
        for m in matrices.clone() {
            if m.ncols() != cols {
                return Err(user(format!("descriptor widths differ: {} and {cols}", m.ncols())));
            }
            count += m.nrows();
            for (c, s) in sum.iter_mut().enumerate() {
                *s += m.column(c).sum();
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; cols];
        for m in matrices {
            for (c, s) in sq.iter_mut().enumerate() {
                *s += m.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let std = sq
            .iter()
            .map(|s| (s / count as f64).sqrt())
            .map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.ncols() != self.mean.len() {
            return Err(user(format!(
                "descriptors have {} columns, the standardization {}",
                m.ncols(),
                self.mean.len()
            )));
        }
        let mut out = m.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[c]);
            col /= self.std[c];
        }
        Ok(out)
    }
}
