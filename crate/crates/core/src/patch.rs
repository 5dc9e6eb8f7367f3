//! Heat-kernel patch operators and intrinsic convolution.
//!
//! For every vertex `x`, orientation `l` and diffusion time `t_j` the patch
//! operator holds the mass-weighted, normalized anisotropic heat kernel
//! `w(xi) = h(x, xi) s_xi / sum_xi h(x, xi) s_xi`. Applied to a feature field
//! it yields an `L x T` polar-like "patch" of values around `x`.
//!
//! Patch tensors are stored as matrices with one row per vertex and column
//! `(l * T + j) * P + p` for orientation `l`, scale `j` and feature `p`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::laplacian::decode_triplets;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use crate::spectral::HeatKernelSet;

pub const DEFAULT_SPARSIFY_EPS: f64 = 1e-4;

/// Truncated kernels whose most negative entry exceeds this fraction of the
/// row maximum are reported.
const NEGATIVE_KERNEL_WARNING: f64 = 1e-3;

const ROW_CHUNK: usize = 256;

/// Column of `(l, j, p)` in a patch tensor.
#[inline]
pub fn patch_column(l: usize, j: usize, p: usize, scales: usize, features: usize) -> usize {
    (l * scales + j) * features + p
}

/// Row-stochastic weights for every `(vertex, orientation, scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchOperatorSet<T: Real> {
    n: usize,
    orientations: usize,
    scales: usize,
    /// One `n x n` block per `(l, j)` at index `l * scales + j`; row `x` of a
    /// block is `w_{x, l, j}`.
    blocks: Vec<CsrMatrix<T>>,
}

impl<T: Real> PatchOperatorSet<T> {
    pub fn from_blocks(orientations: usize, scales: usize, blocks: Vec<CsrMatrix<T>>) -> Result<Self> {
        if orientations == 0 || scales == 0 || blocks.len() != orientations * scales {
            return Err(Error::Dimension(format!(
                "{} blocks for {orientations} orientations x {scales} scales",
                blocks.len()
            )));
        }
        let n = blocks[0].nrows();
        if blocks.iter().any(|b| b.nrows() != n || b.ncols() != n) {
            return Err(Error::Dimension("patch blocks must all be n x n".into()));
        }
        Ok(Self {
            n,
            orientations,
            scales,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn bins(&self) -> usize {
        self.orientations * self.scales
    }

    pub fn block(&self, l: usize, j: usize) -> &CsrMatrix<T> {
        &self.blocks[l * self.scales + j]
    }

    pub fn blocks(&self) -> &[CsrMatrix<T>] {
        &self.blocks
    }

    /// Dense weight vector `w_{x, l, j}`.
    pub fn weights(&self, x: usize, l: usize, j: usize) -> DVector<T> {
        let (cols, vals) = self.block(l, j).row(x);
        let mut w = DVector::zeros(self.n);
        for (&c, &v) in cols.iter().zip(vals) {
            w[c] = v;
        }
        w
    }
}

/// Normalized patch weights from a kernel row; `None` if nothing positive survives.
fn patch_row<T: Real>(kernel: impl Iterator<Item = T>, mass: &DVector<T>, eps: T) -> (Option<(Vec<usize>, Vec<T>)>, bool) {
    let weighted: Vec<T> = kernel.zip(mass.iter()).map(|(h, &s)| h * s).collect();
    let max = weighted.iter().fold(T::zero(), |a, &b| a.max(b));
    let min = weighted.iter().fold(T::zero(), |a, &b| a.min(b));
    let suspicious = min < -max * T::lit(NEGATIVE_KERNEL_WARNING);
    if !(max > T::zero()) {
        return (None, suspicious);
    }
    let cutoff = eps * max;
    let (mut cols, mut vals) = (Vec::new(), Vec::new());
    for (c, &w) in weighted.iter().enumerate() {
        // negatives are clamped to zero, which the cutoff also drops
        if w > T::zero() && w >= cutoff {
            cols.push(c);
            vals.push(w);
        }
    }
    let total = vals.iter().fold(T::zero(), |a, &b| a + b);
    for v in &mut vals {
        *v /= total;
    }
    (Some((cols, vals)), suspicious)
}

/// Builds all `L x T` patch blocks; `sparsify_eps` in `[0, 1e-3]` drops weights
/// below that fraction of their row maximum.
pub fn build_patch_operators<T: Real>(
    kernels: &HeatKernelSet<T>,
    mass: &DVector<T>,
    sparsify_eps: T,
) -> Result<PatchOperatorSet<T>> {
    if !(sparsify_eps >= T::zero() && sparsify_eps <= T::lit(1e-3)) {
        return Err(Error::InvalidArgument(format!(
            "sparsification threshold {sparsify_eps} outside [0, 1e-3]"
        )));
    }
    let n = kernels.n();
    if mass.len() != n {
        return Err(Error::Dimension(format!("mass of length {} for {n} vertices", mass.len())));
    }
    let scales = kernels.scales.len();
    let mut blocks = Vec::with_capacity(kernels.orientations() * scales);
    for (l, basis) in kernels.bases.iter().enumerate() {
        for (j, &t) in kernels.scales.iter().enumerate() {
            let decay = basis.lambda.map(|lam| (-t * lam).exp());
            let mut scaled = basis.phi.clone();
            for (mut col, d) in scaled.column_iter_mut().zip(decay.iter()) {
                col *= *d;
            }
            let chunks: Vec<Vec<(Option<(Vec<usize>, Vec<T>)>, bool)>> = (0..n)
                .step_by(ROW_CHUNK)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|start| {
                    let len = ROW_CHUNK.min(n - start);
                    // rows start..start+len of Phi e^{-t Lambda} Phi^T
                    let kernel = scaled.rows(start, len) * basis.phi.transpose();
                    (0..len)
                        .map(|r| patch_row(kernel.row(r).iter().copied(), mass, sparsify_eps))
                        .collect()
                })
                .collect();
            let mut rows = Vec::with_capacity(n);
            let mut suspicious = 0usize;
            for (x, (row, warn)) in chunks.into_iter().flatten().enumerate() {
                suspicious += warn as usize;
                match row {
                    Some(r) => rows.push(r),
                    None => {
                        return Err(Error::EmptyPatch {
                            vertex: x,
                            orientation: l,
                            scale: j,
                        })
                    }
                }
            }
            if suspicious > 0 {
                log::warn!(
                    "truncated heat kernel (orientation {l}, t = {t}) has negative lobes beyond {NEGATIVE_KERNEL_WARNING} of the peak at {suspicious} vertices"
                );
            }
            blocks.push(CsrMatrix::from_rows(n, rows));
        }
    }
    PatchOperatorSet::from_blocks(kernels.orientations(), scales, blocks)
}

/// Patch tensor for every vertex: `n x (L T P)`.
pub fn apply_patch_operator<T: Real>(ops: &PatchOperatorSet<T>, f: &DMatrix<T>) -> Result<DMatrix<T>> {
    let rows: Vec<usize> = (0..ops.n).collect();
    apply_patch_operator_rows(ops, f, &rows)
}

/// Patch tensor restricted to the listed vertices: `rows.len() x (L T P)`.
pub fn apply_patch_operator_rows<T: Real>(
    ops: &PatchOperatorSet<T>,
    f: &DMatrix<T>,
    rows: &[usize],
) -> Result<DMatrix<T>> {
    if f.nrows() != ops.n {
        return Err(Error::Dimension(format!(
            "feature field has {} rows, patch operator expects {}",
            f.nrows(),
            ops.n
        )));
    }
    if let Some(&bad) = rows.iter().find(|&&x| x >= ops.n) {
        return Err(Error::Dimension(format!("vertex {bad} out of range")));
    }
    let p = f.ncols();
    let width = ops.bins() * p;
    let computed: Vec<Vec<T>> = rows
        .par_iter()
        .map(|&x| {
            let mut out = vec![T::zero(); width];
            for (b, block) in ops.blocks.iter().enumerate() {
                let (cols, vals) = block.row(x);
                let dst = &mut out[b * p..(b + 1) * p];
                for (&c, &w) in cols.iter().zip(vals) {
                    for (q, slot) in dst.iter_mut().enumerate() {
                        *slot += w * f[(c, q)];
                    }
                }
            }
            out
        })
        .collect();
    Ok(DMatrix::from_fn(rows.len(), width, |r, c| computed[r][c]))
}

/// Adjoint of [`apply_patch_operator_rows`]: maps a gradient with respect to
/// the patch tensor back onto the `n x P` feature field.
pub fn apply_patch_operator_transpose<T: Real>(
    ops: &PatchOperatorSet<T>,
    grad: &DMatrix<T>,
    rows: &[usize],
    features: usize,
) -> Result<DMatrix<T>> {
    if grad.nrows() != rows.len() || grad.ncols() != ops.bins() * features {
        return Err(Error::Dimension(format!(
            "patch gradient is {}x{}, expected {}x{}",
            grad.nrows(),
            grad.ncols(),
            rows.len(),
            ops.bins() * features
        )));
    }
    let mut out = DMatrix::zeros(ops.n, features);
    for (r, &x) in rows.iter().enumerate() {
        for (b, block) in ops.blocks.iter().enumerate() {
            let (cols, vals) = block.row(x);
            for (&c, &w) in cols.iter().zip(vals) {
                for q in 0..features {
                    out[(c, q)] += w * grad[(r, b * features + q)];
                }
            }
        }
    }
    Ok(out)
}

/// Learnable filters `a[q, p, l, j]`, stored as a `Q x (L T P)` matrix in
/// patch-column order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T: Real> {
    pub outputs: usize,
    pub inputs: usize,
    pub orientations: usize,
    pub scales: usize,
    pub coeffs: DMatrix<T>,
}

impl<T: Real> FilterBank<T> {
    pub fn zeros(outputs: usize, inputs: usize, orientations: usize, scales: usize) -> Self {
        Self {
            outputs,
            inputs,
            orientations,
            scales,
            coeffs: DMatrix::zeros(outputs, orientations * scales * inputs),
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))` with `fan_in = P L T` and
    /// `fan_out = Q`.
    pub fn glorot(outputs: usize, inputs: usize, orientations: usize, scales: usize, rng: &mut impl Rng) -> Self {
        let fan_in = inputs * orientations * scales;
        let limit = (6.0 / (fan_in + outputs) as f64).sqrt();
        let mut bank = Self::zeros(outputs, inputs, orientations, scales);
        for v in bank.coeffs.iter_mut() {
            *v = T::lit(rng.random_range(-limit..limit));
        }
        bank
    }

    fn column(&self, p: usize, l: usize, j: usize) -> usize {
        patch_column(l, j, p, self.scales, self.inputs)
    }

    pub fn get(&self, q: usize, p: usize, l: usize, j: usize) -> T {
        self.coeffs[(q, self.column(p, l, j))]
    }

    pub fn set(&mut self, q: usize, p: usize, l: usize, j: usize, value: T) {
        let c = self.column(p, l, j);
        self.coeffs[(q, c)] = value;
    }

    /// Coefficients in `(q, p, l, j)` row-major order.
    pub fn to_qplt(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for q in 0..self.outputs {
            for p in 0..self.inputs {
                for l in 0..self.orientations {
                    for j in 0..self.scales {
                        out.push(self.get(q, p, l, j));
                    }
                }
            }
        }
        out
    }

    pub fn from_qplt(outputs: usize, inputs: usize, orientations: usize, scales: usize, values: &[T]) -> Result<Self> {
        let mut bank = Self::zeros(outputs, inputs, orientations, scales);
        if values.len() != bank.coeffs.len() {
            return Err(Error::Dimension(format!(
                "{} filter coefficients for a {outputs}x{inputs}x{orientations}x{scales} bank",
                values.len()
            )));
        }
        let mut it = values.iter();
        for q in 0..outputs {
            for p in 0..inputs {
                for l in 0..orientations {
                    for j in 0..scales {
                        bank.set(q, p, l, j, *it.next().unwrap());
                    }
                }
            }
        }
        Ok(bank)
    }
}

/// `out(x, q) = sum_{p, l, j} a[q, p, l, j] patches(x, l, j, p)`.
pub fn intrinsic_convolution<T: Real>(patches: &DMatrix<T>, bank: &FilterBank<T>) -> Result<DMatrix<T>> {
    if patches.ncols() != bank.coeffs.ncols() {
        return Err(Error::Dimension(format!(
            "patch tensor has {} columns, filter bank expects {}",
            patches.ncols(),
            bank.coeffs.ncols()
        )));
    }
    Ok(patches * bank.coeffs.transpose())
}

const PATCH_MAGIC: &[u8; 8] = b"ACNNPAT\0";
const PATCH_VERSION: u32 = 1;

/// Header `(n, L, T)`, then per `(l, j)` block its entry count and
/// `(row, col, value)` triplets as little-endian `f64`.
pub fn encode_patch_operators<T: Real>(ops: &PatchOperatorSet<T>) -> Vec<u8> {
    let mut enc = Encoder::new(PATCH_MAGIC, PATCH_VERSION);
    enc.u64(ops.n as u64);
    enc.u64(ops.orientations as u64);
    enc.u64(ops.scales as u64);
    for block in &ops.blocks {
        enc.u64(block.nnz() as u64);
        for (i, j, v) in block.triplets() {
            enc.f64s([i as f64, j as f64, v.as_f64()]);
        }
    }
    enc.finish()
}

pub fn decode_patch_operators<T: Real>(bytes: &[u8]) -> Result<PatchOperatorSet<T>> {
    let mut dec = Decoder::new(bytes, PATCH_MAGIC, PATCH_VERSION)?;
    let n = dec.usize()?;
    let orientations = dec.usize()?;
    let scales = dec.usize()?;
    let count = orientations
        .checked_mul(scales)
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let mut blocks = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nnz = dec.usize()?;
        let raw = dec.f64s(nnz.checked_mul(3).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        blocks.push(CsrMatrix::from_triplets(n, n, &decode_triplets::<T>(&raw, n)?));
    }
    dec.finish()?;
    PatchOperatorSet::from_blocks(orientations, scales, blocks)
}
