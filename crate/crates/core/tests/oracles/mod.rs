//! Slow, independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the numerical paths it checks.
#![allow(dead_code)]

use acnn::mesh::{TriMesh, TriangleFrame};
use nalgebra::{DMatrix, Matrix3, Vector3};

fn skew(n: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -n.z, n.y, n.z, 0.0, -n.x, -n.y, n.x, 0.0)
}

/// Dense stiffness from a per-face linear FEM with conductivity
/// `D = J H J^T`, `J` the quarter turn about the face normal and
/// `H = I + (alpha - 1) v v^T` with `v = cos(theta) u_max + sin(theta) u_min`.
/// Returned with the sign convention of `W` (positive off-diagonals).
pub fn dense_fem_stiffness(mesh: &TriMesh<f64>, frames: &[TriangleFrame<f64>], alpha: f64, theta: f64) -> DMatrix<f64> {
    let n = mesh.n();
    let mut k = DMatrix::zeros(n, n);
    for (f, face) in mesh.faces().iter().enumerate() {
        let x: Vec<Vector3<f64>> = face.iter().map(|&i| mesh.vertex(i)).collect();
        let cross = (x[1] - x[0]).cross(&(x[2] - x[0]));
        let area = 0.5 * cross.norm();
        let normal = cross / cross.norm();
        let v = frames[f].u_max * theta.cos() + frames[f].u_min * theta.sin();
        let h = Matrix3::identity() + v * v.transpose() * (alpha - 1.0);
        let j = skew(&normal);
        let d = j * h * j.transpose();
        let grads: Vec<Vector3<f64>> = (0..3)
            .map(|a| normal.cross(&(x[(a + 2) % 3] - x[(a + 1) % 3])) / (2.0 * area))
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                k[(face[a], face[b])] += area * (grads[a].transpose() * d * grads[b])[(0, 0)];
            }
        }
    }
    -k
}

/// Classical cotangent weights `(cot a + cot b) / 2` assembled densely.
pub fn dense_cotangent(mesh: &TriMesh<f64>) -> DMatrix<f64> {
    let n = mesh.n();
    let mut w = DMatrix::zeros(n, n);
    for face in mesh.faces() {
        for c in 0..3 {
            let (i, j, k) = (face[(c + 1) % 3], face[(c + 2) % 3], face[c]);
            let a = mesh.vertex(i) - mesh.vertex(k);
            let b = mesh.vertex(j) - mesh.vertex(k);
            let cot = a.dot(&b) / a.cross(&b).norm();
            w[(i, j)] += 0.5 * cot;
            w[(j, i)] += 0.5 * cot;
            w[(i, i)] -= 0.5 * cot;
            w[(j, j)] -= 0.5 * cot;
        }
    }
    w
}

/// Barycentric lumped mass.
pub fn dense_mass(mesh: &TriMesh<f64>) -> Vec<f64> {
    let mut s = vec![0.0; mesh.n()];
    for face in mesh.faces() {
        let x: Vec<Vector3<f64>> = face.iter().map(|&i| mesh.vertex(i)).collect();
        let area = 0.5 * (x[1] - x[0]).cross(&(x[2] - x[0])).norm();
        for &i in face {
            s[i] += area / 3.0;
        }
    }
    s
}

/// Cyclic Jacobi eigensolver for a symmetric matrix; eigenvalues ascending,
/// eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm: f64 = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(squarings);
    let n = m.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &a / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// All-pairs shortest paths.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        d[(i, i)] = 0.0;
    }
    for &(i, j, w) in edges {
        d[(i, j)] = d[(i, j)].min(w);
        d[(j, i)] = d[(j, i)].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[(i, k)];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let through = dik + d[(k, j)];
                if through < d[(i, j)] {
                    d[(i, j)] = through;
                }
            }
        }
    }
    d
}

/// Unique undirected mesh edges with Euclidean lengths.
pub fn mesh_edges(mesh: &TriMesh<f64>) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for face in mesh.faces() {
        for c in 0..3 {
            let (a, b) = (face[c], face[(c + 1) % 3]);
            let (i, j) = (a.min(b), a.max(b));
            edges.push((i, j));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
        .into_iter()
        .map(|(i, j)| (i, j, (mesh.vertex(i) - mesh.vertex(j)).norm()))
        .collect()
}

/// Patch weights at `x` straight from the definition: kernel times mass,
/// negatives clamped, normalized to unit sum.
pub fn brute_patch_weights(phi: &DMatrix<f64>, lambda: &[f64], mass: &[f64], t: f64, x: usize) -> Vec<f64> {
    let n = phi.nrows();
    let mut w = vec![0.0; n];
    for (xi, slot) in w.iter_mut().enumerate() {
        let mut h = 0.0;
        for (k, lam) in lambda.iter().enumerate() {
            h += (-t * lam).exp() * phi[(x, k)] * phi[(xi, k)];
        }
        *slot = (h * mass[xi]).max(0.0);
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Central differences of `f` with respect to every entry of `params`.
pub fn central_differences(params: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let plus = f(&p);
            p[i] = orig - eps;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Least squares by the normal equations.
pub fn normal_equations(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    ata.try_inverse().expect("normal matrix is singular") * atb
}
