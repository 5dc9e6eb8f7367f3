//! Banded (skyline) Cholesky factorization with reverse Cuthill-McKee ordering.
//!
//! Mesh Laplacians are very sparse and, once reordered, have a narrow
//! profile, so a skyline factor is enough for shift-invert solves.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee ordering of the matrix graph. `order[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| (degree[j], j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor `L` of `P (A + shift I) P^T` stored row-wise from the
/// first structurally nonzero column.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T: Real> {
    order: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SkylineCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>, shift: T) -> Result<Self> {
        let n = a.nrows();
        let order = reverse_cuthill_mckee(a);
        let mut position = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in order.iter().enumerate() {
            for &j in a.row(old).0 {
                let pj = position[j];
                if pj < new {
                    first[new] = first[new].min(pj);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut values = vec![T::zero(); start[n]];
        for (new, &old) in order.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let pj = position[j];
                if pj <= new {
                    values[start[new] + pj - first[new]] += v;
                }
            }
            values[start[new] + new - first[new]] += shift;
        }

        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut sum = values[start[i] + j - first[i]];
                for k in lo..j {
                    sum -= values[start[i] + k - first[i]] * values[start[j] + k - first[j]];
                }
                if j == i {
                    if !(sum > T::zero()) {
                        return Err(Error::InvalidArgument(format!(
                            "matrix is not positive definite (pivot {sum} at row {i})"
                        )));
                    }
                    values[start[i] + i - first[i]] = sum.sqrt();
                } else {
                    values[start[i] + j - first[i]] = sum / values[start[j] + j - first[j]];
                }
            }
        }
        Ok(Self {
            order,
            first,
            start,
            values,
        })
    }

    fn at(&self, i: usize, j: usize) -> T {
        self.values[self.start[i] + j - self.first[i]]
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.order.len();
        let mut y: Vec<T> = self.order.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let mut sum = y[i];
            for k in self.first[i]..i {
                sum -= self.at(i, k) * y[k];
            }
            y[i] = sum / self.at(i, i);
        }
        for i in (0..n).rev() {
            y[i] /= self.at(i, i);
            let yi = y[i];
            for k in self.first[i]..i {
                let l = self.at(i, k);
                y[k] -= l * yi;
            }
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Stored entries of the factor; a measure of fill.
    pub fn profile_size(&self) -> usize {
        self.values.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::cotangent_stiffness;
    use crate::mesh::{build_edge_topology, generate};

    #[test]
    fn solves_shifted_laplacian() {
        let mesh = generate::bumpy_torus::<f64>(16, 10, 0.3, 4).normalized();
        let w = cotangent_stiffness(&mesh, &build_edge_topology(&mesh)).unwrap();
        let neg = w.map_values(|v| -v);
        let chol = SkylineCholesky::factor(&neg, 0.5).unwrap();
        let b = DVector::from_fn(mesh.n(), |i, _| ((i * 7 % 13) as f64) - 6.0);
        let x = chol.solve(&b);
        let residual = neg.mul_vec(&x) + &x * 0.5 - &b;
        assert!(residual.amax() < 1e-10, "{}", residual.amax());
        assert!(chol.profile_size() < mesh.n() * mesh.n() / 2);
    }

    #[test]
    fn rejects_indefinite_matrices() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(SkylineCholesky::factor(&a, 0.0).is_err());
    }
}
