//! Laplacian eigenbases, heat operators and kernels, and spectral descriptors.

mod eigen;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::laplacian::{stiffness_matrix, AnisoOperator, AnisoParams};
use crate::mesh::{EdgeTopology, TriMesh, TriangleFrame};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

pub use eigen::{generalized_eig, generalized_eig_with, EigenOptions};

/// Default number of eigenpairs: all of them on small meshes, capped at 300.
pub fn default_basis_size(n: usize) -> usize {
    n.min(300)
}

/// `count` diffusion times geometrically spaced in `[0.005, 0.1]`.
pub fn default_scales(count: usize) -> Vec<f64> {
    geometric_grid(0.005, 0.1, count)
}

pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// The first `k` eigenpairs of `-W phi = lambda S phi`, `S`-orthonormal, with
/// eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis<T: Real> {
    /// `n x k`, one eigenfunction per column.
    pub phi: DMatrix<T>,
    pub lambda: DVector<T>,
    /// Lumped mass diagonal the basis is orthonormal with respect to.
    pub mass: DVector<T>,
    pub params: AnisoParams<T>,
}

impl<T: Real> SpectralBasis<T> {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k(&self) -> usize {
        self.phi.ncols()
    }

    /// The first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            phi: self.phi.columns(0, k).into_owned(),
            lambda: self.lambda.rows(0, k).into_owned(),
            mass: self.mass.clone(),
            params: self.params,
        }
    }

    /// `||W Phi + S Phi diag(Lambda)||_max`.
    pub fn residual(&self, stiffness: &CsrMatrix<T>) -> T {
        let mut r = stiffness.mul_dense(&self.phi);
        for (c, &l) in self.lambda.iter().enumerate() {
            for i in 0..self.n() {
                r[(i, c)] += self.mass[i] * self.phi[(i, c)] * l;
            }
        }
        r.amax()
    }

    /// `||Phi^T S Phi - I||_max`.
    pub fn orthonormality_error(&self) -> T {
        let weighted = DMatrix::from_fn(self.n(), self.k(), |i, c| self.mass[i] * self.phi[(i, c)]);
        let gram = self.phi.transpose() * weighted;
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }

    /// Mass-weighted Fourier coefficients `Phi^T S f`.
    pub fn coefficients(&self, f: &DVector<T>) -> DVector<T> {
        self.phi.tr_mul(&f.component_mul(&self.mass))
    }

    fn decay(&self, t: T) -> DVector<T> {
        self.lambda.map(|l| (-t * l).exp())
    }
}

/// `Phi e^{-t Lambda} Phi^T S f`.
pub fn heat_operator_apply<T: Real>(basis: &SpectralBasis<T>, t: T, f: &DVector<T>) -> Result<DVector<T>> {
    if f.len() != basis.n() {
        return Err(Error::Dimension(format!(
            "function of length {} on {} vertices",
            f.len(),
            basis.n()
        )));
    }
    let coeffs = basis.coefficients(f).component_mul(&basis.decay(t));
    Ok(&basis.phi * coeffs)
}

/// Pointwise kernel values `h_t(x, .) = sum_k e^{-t lambda_k} phi_k(x) phi_k(.)`.
///
/// Each term is evaluated as `d_k (phi_k(x) phi_k(y))`, so `row(x)[y]` and
/// `row(y)[x]` agree bit for bit.
pub fn heat_kernel_row<T: Real>(basis: &SpectralBasis<T>, t: T, x: usize) -> DVector<T> {
    let decay = basis.decay(t);
    let mut row = DVector::zeros(basis.n());
    for (k, d) in decay.iter().enumerate() {
        let at_x = basis.phi[(x, k)];
        for (out, &v) in row.iter_mut().zip(basis.phi.column(k).iter()) {
            *out += *d * (at_x * v);
        }
    }
    row
}

/// The full `n x n` kernel matrix `Phi e^{-t Lambda} Phi^T`.
pub fn heat_kernel_matrix<T: Real>(basis: &SpectralBasis<T>, t: T) -> DMatrix<T> {
    let decay = basis.decay(t);
    let mut scaled = basis.phi.clone();
    for (mut col, d) in scaled.column_iter_mut().zip(decay.iter()) {
        col *= *d;
    }
    &scaled * basis.phi.transpose()
}

/// Heat kernel signature: column `j` is `h_{t_j}(x, x)`.
pub fn hks<T: Real>(basis: &SpectralBasis<T>, times: &[T]) -> DMatrix<T> {
    let squared = basis.phi.map(|v| v * v);
    let mut out = DMatrix::zeros(basis.n(), times.len());
    for (j, &t) in times.iter().enumerate() {
        out.set_column(j, &(&squared * basis.decay(t)));
    }
    out
}

/// `count` times geometrically spaced in `[4 ln 10 / lambda_max, 4 ln 10 / lambda_1]`
/// with `lambda_1` the first nonzero eigenvalue.
pub fn hks_time_grid<T: Real>(basis: &SpectralBasis<T>, count: usize) -> Vec<f64> {
    let lambda_max = basis.lambda.iter().fold(T::zero(), |a, &b| a.max(b)).as_f64();
    let floor = lambda_max * WKS_ZERO_EIGENVALUE;
    let first = basis
        .lambda
        .iter()
        .map(|l| l.as_f64())
        .find(|&l| l > floor)
        .unwrap_or(lambda_max);
    if !(lambda_max > 0.0) {
        return vec![1.0; count];
    }
    let c = 4.0 * std::f64::consts::LN_10;
    geometric_grid(c / lambda_max, c / first, count)
}

/// Eigenvalues below this fraction of the largest are treated as zero by WKS.
const WKS_ZERO_EIGENVALUE: f64 = 1e-8;

/// Wave kernel signature with log-normal band-pass filters centred at the
/// given log-energies; each column is normalized by its total filter weight.
pub fn wks<T: Real>(basis: &SpectralBasis<T>, log_energies: &[T], variance: T) -> DMatrix<T> {
    let lambda_max = basis.lambda.iter().fold(T::zero(), |a, &b| a.max(b));
    let floor = lambda_max * T::lit(WKS_ZERO_EIGENVALUE);
    let log_lambda: Vec<Option<T>> = basis
        .lambda
        .iter()
        .map(|&l| (l > floor).then(|| l.ln()))
        .collect();
    let squared = basis.phi.map(|v| v * v);
    let two_var = T::lit(2.0) * variance * variance;
    let mut out = DMatrix::zeros(basis.n(), log_energies.len());
    for (j, &e) in log_energies.iter().enumerate() {
        let weights = DVector::from_iterator(
            basis.k(),
            log_lambda.iter().map(|ll| match ll {
                Some(ll) => (-(e - *ll) * (e - *ll) / two_var).exp(),
                None => T::zero(),
            }),
        );
        let total = weights.sum();
        if total > T::zero() {
            out.set_column(j, &((&squared * weights) / total));
        }
    }
    out
}

/// Evenly spaced log-energies across the nonzero spectrum and the matching
/// filter width.
pub fn wks_energy_grid<T: Real>(basis: &SpectralBasis<T>, count: usize) -> (Vec<T>, T) {
    let lambda_max = basis.lambda.iter().fold(T::zero(), |a, &b| a.max(b));
    let floor = lambda_max * T::lit(WKS_ZERO_EIGENVALUE);
    let positive: Vec<T> = basis.lambda.iter().copied().filter(|&l| l > floor).collect();
    if positive.is_empty() || count == 0 {
        return (Vec::new(), T::one());
    }
    let lo = positive[0].ln();
    let hi = positive[positive.len() - 1].ln();
    let span = (hi - lo).max(T::lit(1e-6));
    let sigma = span * T::lit(2.0) / T::count(count.max(1));
    let (a, b) = (lo + sigma * T::lit(2.0), hi - sigma * T::lit(2.0));
    let (a, b) = if a < b { (a, b) } else { (lo, hi) };
    let energies = (0..count)
        .map(|i| {
            if count == 1 {
                (a + b) * T::lit(0.5)
            } else {
                a + (b - a) * T::count(i) / T::count(count - 1)
            }
        })
        .collect();
    (energies, sigma)
}

/// Eigenbases for `L` orientations of one anisotropy level plus the diffusion
/// times at which kernels are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelSet<T: Real> {
    pub bases: Vec<SpectralBasis<T>>,
    pub scales: Vec<T>,
}

impl<T: Real> HeatKernelSet<T> {
    pub fn new(bases: Vec<SpectralBasis<T>>, scales: Vec<T>) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one orientation required".into()))?;
        if bases.iter().any(|b| b.n() != first.n() || b.k() != first.k() || b.params.alpha() != first.params.alpha()) {
            return Err(Error::Dimension("bases disagree in n, k or alpha".into()));
        }
        validate_scales(&scales)?;
        Ok(Self { bases, scales })
    }

    pub fn orientations(&self) -> usize {
        self.bases.len()
    }

    pub fn n(&self) -> usize {
        self.bases[0].n()
    }
}

fn validate_scales<T: Real>(scales: &[T]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("no diffusion times given".into()));
    }
    if scales.iter().any(|&t| !(t > T::zero()) || !t.is_finite()) || scales.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "diffusion times must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Assembles the operators at `theta_l = l pi / L` (in parallel).
pub fn build_operators<T: Real>(
    mesh: &TriMesh<T>,
    topology: &EdgeTopology,
    frames: &[TriangleFrame<T>],
    alpha: T,
    orientations: usize,
) -> Result<Vec<AnisoOperator<T>>> {
    if orientations == 0 {
        return Err(Error::InvalidArgument("at least one orientation required".into()));
    }
    (0..orientations)
        .into_par_iter()
        .map(|l| {
            let params = AnisoParams::orientation(alpha, l, orientations)?;
            stiffness_matrix(mesh, topology, frames, params)
        })
        .collect()
}

/// Assembles and eigendecomposes all `L` orientations.
pub fn build_heat_kernel_set<T: Real>(
    mesh: &TriMesh<T>,
    topology: &EdgeTopology,
    frames: &[TriangleFrame<T>],
    alpha: T,
    orientations: usize,
    scales: &[T],
    k: usize,
    options: &EigenOptions,
) -> Result<HeatKernelSet<T>> {
    validate_scales(scales)?;
    let operators = build_operators(mesh, topology, frames, alpha, orientations)?;
    let bases = operators
        .par_iter()
        .map(|op| generalized_eig_with(op, k, options))
        .collect::<Result<Vec<_>>>()?;
    HeatKernelSet::new(bases, scales.to_vec())
}

const BASIS_MAGIC: &[u8; 8] = b"ACNNBAS\0";
const BASIS_VERSION: u32 = 1;

/// Header `(n, k, alpha, theta, mesh hash)`, then `Lambda`, then `Phi`
/// column-major, all little-endian `f64`. The mass diagonal is not stored.
pub fn encode_basis<T: Real>(basis: &SpectralBasis<T>, mesh_hash: &[u8; 32]) -> Vec<u8> {
    let mut enc = Encoder::new(BASIS_MAGIC, BASIS_VERSION);
    enc.u64(basis.n() as u64);
    enc.u64(basis.k() as u64);
    enc.f64(basis.params.alpha().as_f64());
    enc.f64(basis.params.theta().as_f64());
    enc.bytes(mesh_hash);
    enc.f64s(basis.lambda.iter().map(|v| v.as_f64()));
    enc.f64s(basis.phi.iter().map(|v| v.as_f64()));
    enc.finish()
}

/// Decodes a cached basis, rejecting it if it was computed for another mesh.
pub fn decode_basis<T: Real>(bytes: &[u8], mesh_hash: &[u8; 32], mass: &DVector<T>) -> Result<SpectralBasis<T>> {
    let mut dec = Decoder::new(bytes, BASIS_MAGIC, BASIS_VERSION)?;
    let n = dec.usize()?;
    let k = dec.usize()?;
    let alpha = dec.f64()?;
    let theta = dec.f64()?;
    if dec.bytes(32)? != mesh_hash {
        return Err(Error::Format("basis was computed for a different mesh".into()));
    }
    if n != mass.len() || k > n {
        return Err(Error::Format(format!("basis shape {n}x{k} does not fit the mesh")));
    }
    let lambda = DVector::from_iterator(k, dec.f64s(k)?.into_iter().map(T::lit));
    let phi = DMatrix::from_iterator(n, k, dec.f64s(n * k)?.into_iter().map(T::lit));
    dec.finish()?;
    Ok(SpectralBasis {
        phi,
        lambda,
        mass: mass.clone(),
        params: AnisoParams::new(T::lit(alpha), T::lit(theta))?,
    })
}
