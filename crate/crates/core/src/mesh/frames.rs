//! Principal-curvature frames per triangle.
//!
//! A shape operator is fitted at every vertex by least squares from the
//! variation of area-weighted vertex normals along incident edges. The three
//! vertex tensors of a face are averaged, projected onto the face plane and
//! diagonalized there.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::TriMesh;
use crate::scalar::Real;

/// Relative principal-curvature gap below which a face counts as umbilic.
///
/// The estimator leaves a gap of a few percent on uniformly curved surfaces
/// (about 6% at worst on an icosphere), so the threshold sits above that.
pub const UMBILIC_TOLERANCE: f64 = 0.1;

/// Orthonormal frame `(u_max, u_min, normal)` attached to one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleFrame<T: Real> {
    pub u_max: Vector3<T>,
    pub u_min: Vector3<T>,
    pub normal: Vector3<T>,
    pub kappa_max: T,
    pub kappa_min: T,
    /// Principal directions were undefined; `u_max` is the first edge direction.
    pub umbilic: bool,
}

impl<T: Real> TriangleFrame<T> {
    /// Frame built from an in-plane unit direction and the face normal.
    pub fn from_direction(u_max: Vector3<T>, normal: Vector3<T>) -> Self {
        Self {
            u_max,
            u_min: normal.cross(&u_max),
            normal,
            kappa_max: T::zero(),
            kappa_min: T::zero(),
            umbilic: false,
        }
    }

    /// The matrix with columns `(u_max, u_min, normal)`.
    pub fn basis(&self) -> Matrix3<T> {
        Matrix3::from_columns(&[self.u_max, self.u_min, self.normal])
    }
}

/// Area-weighted unit vertex normals.
pub fn vertex_normals<T: Real>(mesh: &TriMesh<T>) -> Vec<Vector3<T>> {
    let mut normals = vec![Vector3::zeros(); mesh.n()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let weighted = mesh.face_cross(f);
        for &v in face {
            normals[v] += weighted;
        }
    }
    normals.into_iter().map(|n| n.normalize()).collect()
}

/// Unit vector orthogonal to `n`, deterministic in `n`.
fn any_tangent<T: Real>(n: &Vector3<T>) -> Vector3<T> {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    (axis - n * n.dot(&axis)).normalize()
}

/// Least-squares 3x3 curvature tensors, one per vertex, acting on tangent vectors.
pub fn vertex_curvature_tensors<T: Real>(mesh: &TriMesh<T>) -> Vec<Matrix3<T>> {
    let normals = vertex_normals(mesh);
    let neighbors = mesh.vertex_neighbors();
    (0..mesh.n())
        .map(|i| {
            let n = normals[i];
            let t1 = any_tangent(&n);
            let t2 = n.cross(&t1);
            // Unknowns (a, b, c) of the symmetric operator [[a, b], [b, c]]
            // mapping tangent edge vectors to tangent normal differences.
            let mut ata = Matrix3::<T>::zeros();
            let mut atb = Vector3::<T>::zeros();
            for &j in &neighbors[i] {
                let e = mesh.vertex(j) - mesh.vertex(i);
                let dn = normals[j] - n;
                let (ex, ey) = (e.dot(&t1), e.dot(&t2));
                let (dx, dy) = (dn.dot(&t1), dn.dot(&t2));
                let rows = [
                    (Vector3::new(ex, ey, T::zero()), dx),
                    (Vector3::new(T::zero(), ex, ey), dy),
                ];
                for (row, rhs) in rows {
                    ata += row * row.transpose();
                    atb += row * rhs;
                }
            }
            let coeffs = ata.lu().solve(&atb).filter(|c| c.iter().all(|v| v.is_finite()));
            match coeffs {
                Some(c) => {
                    let s = Matrix2::new(c[0], c[1], c[1], c[2]);
                    let basis = nalgebra::Matrix3x2::from_columns(&[t1, t2]);
                    basis * s * basis.transpose()
                }
                None => Matrix3::zeros(),
            }
        })
        .collect()
}

/// One principal-curvature frame per face, using [`UMBILIC_TOLERANCE`].
pub fn compute_triangle_frames<T: Real>(mesh: &TriMesh<T>) -> Vec<TriangleFrame<T>> {
    compute_triangle_frames_with_tolerance(mesh, UMBILIC_TOLERANCE)
}

/// Faces whose curvature gap is below `umbilic_tolerance * max(|k_max|, |k_min|, 1)`
/// fall back to their first edge direction.
pub fn compute_triangle_frames_with_tolerance<T: Real>(
    mesh: &TriMesh<T>,
    umbilic_tolerance: f64,
) -> Vec<TriangleFrame<T>> {
    let tensors = vertex_curvature_tensors(mesh);
    let third = T::lit(1.0 / 3.0);
    let tol = T::lit(umbilic_tolerance);
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(f, &[a, b, c])| {
            let normal = mesh.face_normal(f);
            let e1 = (mesh.vertex(b) - mesh.vertex(a)).normalize();
            let e2 = normal.cross(&e1);
            let tensor = (tensors[a] + tensors[b] + tensors[c]) * third;
            let m11 = e1.dot(&(tensor * e1));
            let m22 = e2.dot(&(tensor * e2));
            let m12 = (e1.dot(&(tensor * e2)) + e2.dot(&(tensor * e1))) * T::lit(0.5);

            let mean = (m11 + m22) * T::lit(0.5);
            let half_diff = (m11 - m22) * T::lit(0.5);
            let radius = (half_diff * half_diff + m12 * m12).sqrt();
            let (kappa_max, kappa_min) = (mean + radius, mean - radius);
            let scale = kappa_max.abs().max(kappa_min.abs()).max(T::one());
            let umbilic = !(kappa_max - kappa_min >= tol * scale);

            let u_max = if umbilic {
                e1
            } else {
                // Eigenvector of the larger eigenvalue; the angle lies in
                // (-pi/2, pi/2], so its dot with e1 is nonnegative.
                let phi = (m12 + m12).atan2(m11 - m22) * T::lit(0.5);
                let dir = Vector2::new(phi.cos(), phi.sin());
                (e1 * dir.x + e2 * dir.y).normalize()
            };
            TriangleFrame {
                u_max,
                u_min: normal.cross(&u_max),
                normal,
                kappa_max,
                kappa_min,
                umbilic,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::mesh::generate;

    fn check_orthonormal(frames: &[TriangleFrame<f64>]) {
        for fr in frames {
            let b = fr.basis();
            assert!((b.transpose() * b - Matrix3::identity()).amax() <= 1e-8);
            assert!((b.determinant() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn flat_grid_is_umbilic_everywhere() {
        let mesh = generate::grid::<f64>(8, 6, 1.0, 0.8).normalized();
        let frames = compute_triangle_frames(&mesh);
        check_orthonormal(&frames);
        for (f, fr) in frames.iter().enumerate() {
            assert!(fr.umbilic);
            assert!((fr.normal - Vector3::z()).norm() < 1e-12);
            let [a, b, _] = mesh.faces()[f];
            let e1 = (mesh.vertex(b) - mesh.vertex(a)).normalize();
            assert!((fr.u_max - e1).norm() < 1e-12);
        }
    }

    #[test]
    fn cylinder_max_direction_is_circumferential() {
        let (radius, around, along) = (1.0, 48, 12);
        let mesh = generate::cylinder::<f64>(radius, 3.0, around, along);
        let frames = compute_triangle_frames(&mesh);
        check_orthonormal(&frames);
        let cos10 = 10f64.to_radians().cos();
        let mut checked = 0;
        for (f, fr) in frames.iter().enumerate() {
            let face = mesh.faces()[f];
            let centroid = face.iter().map(|&v| mesh.vertex(v)).sum::<Vector3<f64>>() / 3.0;
            // interior faces only: stay away from the two boundary rings
            if centroid.z < 0.5 || centroid.z > 2.5 {
                continue;
            }
            let circumferential = Vector3::new(-centroid.y, centroid.x, 0.0).normalize();
            assert!(!fr.umbilic);
            assert!(fr.u_max.dot(&circumferential).abs() >= cos10, "face {f}");
            assert!((fr.kappa_max - 1.0 / radius).abs() < 0.1);
            assert!(fr.kappa_min.abs() < 0.1);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn icosphere_is_nearly_everywhere_umbilic() {
        let mesh = generate::icosphere::<f64>(3).normalized();
        let frames = compute_triangle_frames(&mesh);
        check_orthonormal(&frames);
        let umbilic = frames.iter().filter(|f| f.umbilic).count();
        assert!(umbilic as f64 >= 0.95 * frames.len() as f64, "{umbilic}/{}", frames.len());
        // analytic sphere of unit area: both curvatures 1/r = sqrt(4 pi)
        let k = (4.0 * PI).sqrt();
        for f in &frames {
            assert!((f.kappa_max - k).abs() < 0.1 * k && (f.kappa_min - k).abs() < 0.1 * k);
        }
    }

    #[test]
    fn frames_are_orthonormal_on_irregular_meshes() {
        check_orthonormal(&compute_triangle_frames(&generate::height_field::<f64>(9, 7, 0.4, 5)));
        check_orthonormal(&compute_triangle_frames(&generate::bumpy_torus::<f64>(20, 12, 0.2, 9)));
    }
}
