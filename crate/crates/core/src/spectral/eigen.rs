//! Generalized eigensolvers for the pencil `(-W, S)` with diagonal `S`.
//!
//! Both routes work with the symmetric reduction `B = S^-1/2 (-W) S^-1/2`,
//! whose orthonormal eigenvectors map back to `S`-orthonormal ones. Small
//! problems use a dense symmetric eigensolver; larger ones use Lanczos with
//! full reorthogonalization on the shift-inverted operator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SpectralBasis;
use crate::error::{Error, Result};
use crate::laplacian::AnisoOperator;
use crate::linalg::SkylineCholesky;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Problems with at most this many vertices use the dense solver.
    pub dense_limit: usize,
    /// Maximum admissible `||W Phi + S Phi Lambda||_max`, relative to
    /// `max(1, |W|_max)`.
    pub residual_tolerance: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            dense_limit: 1200,
            residual_tolerance: 1e-6,
        }
    }
}

/// The `k` smallest eigenpairs of `-W phi = lambda S phi` with default options.
pub fn generalized_eig<T: Real>(op: &AnisoOperator<T>, k: usize) -> Result<SpectralBasis<T>> {
    generalized_eig_with(op, k, &EigenOptions::default())
}

pub fn generalized_eig_with<T: Real>(
    op: &AnisoOperator<T>,
    k: usize,
    options: &EigenOptions,
) -> Result<SpectralBasis<T>> {
    let n = op.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}-vertex operator"
        )));
    }
    let inv_sqrt_mass = op.mass.map(|s| T::one() / s.sqrt());
    let (lambda, vectors) = if n <= options.dense_limit {
        dense_eig(&op.stiffness, &inv_sqrt_mass, k)
    } else {
        lanczos_eig(op, &inv_sqrt_mass, k, options)?
    };

    let mut phi = vectors;
    for (mut col, _) in phi.column_iter_mut().zip(0..k) {
        for (v, w) in col.iter_mut().zip(inv_sqrt_mass.iter()) {
            *v *= *w;
        }
        // Entry of largest magnitude made positive; ties go to the lowest index.
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < T::zero() {
            col.neg_mut();
        }
    }
    let basis = SpectralBasis {
        phi,
        lambda,
        mass: op.mass.clone(),
        params: op.params,
    };
    let residual = basis.residual(&op.stiffness);
    let scale = op
        .stiffness
        .triplets()
        .fold(T::one(), |acc, (_, _, v)| acc.max(v.abs()));
    if !(residual <= T::lit(options.residual_tolerance) * scale) {
        return Err(Error::NoConvergence {
            residual: residual.as_f64(),
        });
    }
    Ok(basis)
}

/// Symmetric reduction `B = D (-W) D` with `D = diag(inv_sqrt_mass)`.
fn reduced_dense<T: Real>(stiffness: &CsrMatrix<T>, inv_sqrt_mass: &DVector<T>) -> DMatrix<T> {
    let n = stiffness.nrows();
    let mut b = DMatrix::zeros(n, n);
    for (i, j, v) in stiffness.triplets() {
        b[(i, j)] = -v * inv_sqrt_mass[i] * inv_sqrt_mass[j];
    }
    (&b + b.transpose()) * T::lit(0.5)
}

fn ascending_order<T: Real>(values: &DVector<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn dense_eig<T: Real>(
    stiffness: &CsrMatrix<T>,
    inv_sqrt_mass: &DVector<T>,
    k: usize,
) -> (DVector<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(reduced_dense(stiffness, inv_sqrt_mass));
    let order = ascending_order(&eig.eigenvalues);
    let lambda = DVector::from_iterator(k, order.iter().take(k).map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .take(k)
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (lambda, vectors)
}

fn lanczos_eig<T: Real>(
    op: &AnisoOperator<T>,
    inv_sqrt_mass: &DVector<T>,
    k: usize,
    options: &EigenOptions,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = op.n();
    let sqrt_mass = op.mass.map(|s| s.sqrt());
    let reduced = |x: &DVector<T>| -> DVector<T> {
        let scaled = x.component_mul(inv_sqrt_mass);
        -op.stiffness.mul_vec(&scaled).component_mul(inv_sqrt_mass)
    };

    // Shift well below the first nonzero eigenvalue but far from round-off.
    let mean_diag = (0..n)
        .map(|i| -op.stiffness.get(i, i) / op.mass[i])
        .fold(T::zero(), |a, b| a + b)
        / T::count(n);
    let shift = mean_diag * T::lit(1e-6);
    let mut triplets: Vec<(usize, usize, T)> = op.stiffness.triplets().map(|(i, j, v)| (i, j, -v)).collect();
    triplets.extend((0..n).map(|i| (i, i, shift * op.mass[i])));
    let factor = SkylineCholesky::factor(&CsrMatrix::from_triplets(n, n, &triplets), T::zero())?;
    // (B + shift)^-1 x = S^1/2 (-W + shift S)^-1 S^1/2 x
    let inverse = |x: &DVector<T>| factor.solve(&x.component_mul(&sqrt_mass)).component_mul(&sqrt_mass);

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_705);
    let mut dim = n.min((2 * k + 20).max(k + 40));
    let tolerance = T::lit(options.residual_tolerance);
    loop {
        let mut basis: Vec<DVector<T>> = Vec::with_capacity(dim);
        let mut alphas = Vec::with_capacity(dim);
        let mut betas: Vec<T> = Vec::with_capacity(dim);
        let mut q = DVector::from_fn(n, |_, _| T::lit(rng.random_range(-1.0..1.0)));
        q /= q.norm();
        while basis.len() < dim {
            basis.push(q.clone());
            let mut w = inverse(&q);
            let alpha = q.dot(&w);
            alphas.push(alpha);
            // Full reorthogonalization, applied twice.
            for _ in 0..2 {
                for v in &basis {
                    let c = v.dot(&w);
                    w.axpy(-c, v, T::one());
                }
            }
            if basis.len() == dim {
                break;
            }
            let beta = w.norm();
            if beta > T::lit(1e-10) * alpha.abs().max(T::lit(1e-300)) {
                betas.push(beta);
                q = w / beta;
            } else {
                // Invariant subspace found: continue from a fresh direction.
                betas.push(T::zero());
                let mut fresh = DVector::from_fn(n, |_, _| T::lit(rng.random_range(-1.0..1.0)));
                for _ in 0..2 {
                    for v in &basis {
                        let c = v.dot(&fresh);
                        fresh.axpy(-c, v, T::one());
                    }
                }
                q = &fresh / fresh.norm();
            }
        }

        let m = basis.len();
        let tridiagonal = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                T::zero()
            }
        });
        let eig = SymmetricEigen::new(tridiagonal);
        // Largest Ritz values of the inverse are the smallest eigenvalues.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let krylov = DMatrix::from_columns(&basis);
        let mut pairs: Vec<(T, DVector<T>)> = order
            .iter()
            .take(k)
            .map(|&i| {
                let mut y = &krylov * eig.eigenvectors.column(i);
                y /= y.norm();
                let lambda = y.dot(&reduced(&y));
                (lambda, y)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

        let worst = pairs
            .iter()
            .map(|(l, y)| {
                let r = reduced(y) - y * *l;
                (r.component_mul(&sqrt_mass)).amax()
            })
            .fold(T::zero(), |a, b| a.max(b));
        if worst <= tolerance * T::lit(1e-2) || dim == n {
            let lambda = DVector::from_iterator(k, pairs.iter().map(|p| p.0));
            let vectors = DMatrix::from_columns(&pairs.into_iter().map(|p| p.1).collect::<Vec<_>>());
            return Ok((lambda, vectors));
        }
        log::debug!("lanczos: dimension {dim} left residual {worst}, enlarging");
        dim = n.min(dim * 2);
    }
}
