//! Mass and anisotropic stiffness matrices.
//!
//! The stiffness weight of edge `(i, j)` sums, over its incident triangles,
//! half the shear-weighted inner product of the two edge directions leaving
//! the opposite vertex, divided by the sine of the (Euclidean) angle there.
//! With `alpha = 1` the shear matrix is the identity and this is the classical
//! cotangent weight.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3, Vector3};

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::mesh::{EdgeTopology, TriMesh, TriangleFrame};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Opposite angles with a smaller sine are rejected as degenerate.
pub const MIN_SINE: f64 = 1e-12;

/// Anisotropy level and orientation of the conductivity tensor.
///
/// `theta` is kept in `[0, pi)`: rotating the frame by `pi` maps the shear
/// matrix onto itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoParams<T: Real> {
    alpha: T,
    theta: T,
}

impl<T: Real> AnisoParams<T> {
    pub fn new(alpha: T, theta: T) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anisotropy must be positive and finite, got {alpha}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite angle {theta}")));
        }
        let pi = T::pi();
        let mut theta = theta - (theta / pi).floor() * pi;
        if theta >= pi {
            theta -= pi;
        }
        Ok(Self { alpha, theta })
    }

    pub fn isotropic() -> Self {
        Self {
            alpha: T::one(),
            theta: T::zero(),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// The `l`-th of `count` orientations evenly covering `[0, pi)`.
    pub fn orientation(alpha: T, l: usize, count: usize) -> Result<Self> {
        Self::new(alpha, T::lit(PI * l as f64 / count as f64))
    }
}

/// Mass and stiffness matrices for one `(alpha, theta)`.
///
/// `stiffness` has nonnegative-on-average off-diagonal weights and rows
/// summing to zero, so `-stiffness` together with `mass` is a positive
/// semidefinite pencil.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisoOperator<T: Real> {
    pub stiffness: CsrMatrix<T>,
    pub mass: DVector<T>,
    pub params: AnisoParams<T>,
}

impl<T: Real> AnisoOperator<T> {
    pub fn n(&self) -> usize {
        self.mass.len()
    }
}

/// Lumped mass: one third of the incident triangle areas per vertex.
pub fn mass_matrix<T: Real>(mesh: &TriMesh<T>) -> DVector<T> {
    let mut mass = DVector::zeros(mesh.n());
    let third = T::lit(1.0 / 3.0);
    for (f, face) in mesh.faces().iter().enumerate() {
        let share = mesh.face_area(f) * third;
        for &v in face {
            mass[v] += share;
        }
    }
    mass
}

/// The directed shear matrix `R U diag(alpha, 1, 1) U^T R^T`.
///
/// Rotating `u_max` by `theta` about the normal gives the stretched axis `v`,
/// so the matrix equals `I + (alpha - 1) v v^T`.
pub fn shear_matrix<T: Real>(frame: &TriangleFrame<T>, params: &AnisoParams<T>) -> Matrix3<T> {
    let axis = stretch_axis(frame, params);
    Matrix3::identity() + axis * axis.transpose() * (params.alpha - T::one())
}

fn stretch_axis<T: Real>(frame: &TriangleFrame<T>, params: &AnisoParams<T>) -> Vector3<T> {
    let (s, c) = params.theta.sin_cos();
    frame.u_max * c + frame.u_min * s
}

/// `e1^T H_theta e2` for the frame's shear matrix.
pub fn shear_inner_product<T: Real>(
    frame: &TriangleFrame<T>,
    params: &AnisoParams<T>,
    e1: &Vector3<T>,
    e2: &Vector3<T>,
) -> T {
    let axis = stretch_axis(frame, params);
    e1.dot(e2) + (params.alpha - T::one()) * axis.dot(e1) * axis.dot(e2)
}

/// Half the weighted cotangent-like term of edge `(a, b)` seen from the
/// opposite vertex `o` of face `face`.
fn half_weight<T: Real>(
    mesh: &TriMesh<T>,
    face: usize,
    a: usize,
    b: usize,
    o: usize,
    inner: impl Fn(&Vector3<T>, &Vector3<T>) -> T,
) -> Result<T> {
    let origin = mesh.vertex(o);
    let to_a = (mesh.vertex(a) - origin).normalize();
    let to_b = (mesh.vertex(b) - origin).normalize();
    let sine = to_a.cross(&to_b).norm();
    if !(sine >= T::lit(MIN_SINE)) {
        return Err(Error::DegenerateFace {
            face,
            reason: format!("angle at vertex {o} has sine {sine}"),
        });
    }
    Ok(inner(&to_b, &to_a) / sine * T::lit(0.5))
}

fn assemble<T: Real>(
    mesh: &TriMesh<T>,
    topology: &EdgeTopology,
    weight: impl Fn(usize, usize, usize, usize) -> Result<T>,
) -> Result<CsrMatrix<T>> {
    let n = mesh.n();
    let mut triplets = Vec::with_capacity(2 * topology.edge_count());
    let mut diagonal = vec![T::zero(); n];
    let mut push = |i: usize, j: usize, w: T| {
        triplets.push((i, j, w));
        triplets.push((j, i, w));
        diagonal[i] -= w;
        diagonal[j] -= w;
    };
    for e in &topology.interior {
        let w = weight(e.face_k, e.i, e.j, e.k)? + weight(e.face_h, e.i, e.j, e.h)?;
        push(e.i, e.j, w);
    }
    for e in &topology.boundary {
        push(e.i, e.j, weight(e.face, e.i, e.j, e.k)?);
    }
    triplets.extend(diagonal.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Anisotropic stiffness matrix packaged with the mass matrix.
pub fn stiffness_matrix<T: Real>(
    mesh: &TriMesh<T>,
    topology: &EdgeTopology,
    frames: &[TriangleFrame<T>],
    params: AnisoParams<T>,
) -> Result<AnisoOperator<T>> {
    if frames.len() != mesh.faces().len() {
        return Err(Error::Dimension(format!(
            "{} frames for {} faces",
            frames.len(),
            mesh.faces().len()
        )));
    }
    let stiffness = assemble(mesh, topology, |face, a, b, o| {
        let frame = &frames[face];
        half_weight(mesh, face, a, b, o, |x, y| {
            shear_inner_product(frame, &params, x, y)
        })
    })?;
    Ok(AnisoOperator {
        stiffness,
        mass: mass_matrix(mesh),
        params,
    })
}

/// Classical cotangent stiffness matrix.
pub fn cotangent_stiffness<T: Real>(mesh: &TriMesh<T>, topology: &EdgeTopology) -> Result<CsrMatrix<T>> {
    assemble(mesh, topology, |face, a, b, o| {
        half_weight(mesh, face, a, b, o, |x, y| x.dot(y))
    })
}

const OPERATOR_MAGIC: &[u8; 8] = b"ACNNWOP\0";
const OPERATOR_VERSION: u32 = 1;

/// Serializes an operator: header `(n, alpha, theta)`, the stiffness triplets
/// `(row, col, value)` as little-endian `f64`, then the mass diagonal.
pub fn encode_operator<T: Real>(op: &AnisoOperator<T>) -> Vec<u8> {
    let mut enc = Encoder::new(OPERATOR_MAGIC, OPERATOR_VERSION);
    enc.u64(op.n() as u64);
    enc.f64(op.params.alpha.as_f64());
    enc.f64(op.params.theta.as_f64());
    enc.u64(op.stiffness.nnz() as u64);
    for (i, j, v) in op.stiffness.triplets() {
        enc.f64s([i as f64, j as f64, v.as_f64()]);
    }
    enc.f64s(op.mass.iter().map(|v| v.as_f64()));
    enc.finish()
}

pub fn decode_operator<T: Real>(bytes: &[u8]) -> Result<AnisoOperator<T>> {
    let mut dec = Decoder::new(bytes, OPERATOR_MAGIC, OPERATOR_VERSION)?;
    let n = dec.usize()?;
    let alpha = dec.f64()?;
    let theta = dec.f64()?;
    let nnz = dec.usize()?;
    let raw = dec.f64s(nnz.checked_mul(3).ok_or_else(|| Error::Format("size overflow".into()))?)?;
    let triplets = decode_triplets(&raw, n)?;
    let mass = DVector::from_iterator(n, dec.f64s(n)?.into_iter().map(T::lit));
    dec.finish()?;
    Ok(AnisoOperator {
        stiffness: CsrMatrix::from_triplets(n, n, &triplets),
        mass,
        params: AnisoParams::new(T::lit(alpha), T::lit(theta))?,
    })
}

pub(crate) fn decode_triplets<T: Real>(raw: &[f64], n: usize) -> Result<Vec<(usize, usize, T)>> {
    raw.chunks_exact(3)
        .map(|t| {
            let (r, c) = (t[0], t[1]);
            let valid = |x: f64| x >= 0.0 && x.fract() == 0.0 && x < n as f64;
            if valid(r) && valid(c) {
                Ok((r as usize, c as usize, T::lit(t[2])))
            } else {
                Err(Error::Format(format!("triplet index ({r}, {c}) out of range")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_edge_topology, compute_triangle_frames, generate};

    fn frame() -> TriangleFrame<f64> {
        TriangleFrame::from_direction(Vector3::x(), Vector3::z())
    }

    #[test]
    fn equilateral_mass() {
        let mesh = TriMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for s in mass_matrix(&mesh).iter() {
            assert!((s - 3f64.sqrt() / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shear_product_examples() {
        let fr = frame();
        let iso = AnisoParams::new(1.0, 0.3).unwrap();
        let a = Vector3::new(0.6, 0.8, 0.0);
        let b = Vector3::new(-0.28, 0.96, 0.0);
        assert!((shear_inner_product(&fr, &iso, &a, &b) - a.dot(&b)).abs() < 1e-15);

        let p = AnisoParams::new(100.0, 0.0).unwrap();
        assert!((shear_inner_product(&fr, &p, &fr.u_max, &fr.u_max) - 100.0).abs() < 1e-12);
        let p = AnisoParams::new(100.0, PI / 2.0).unwrap();
        assert!((shear_inner_product(&fr, &p, &fr.u_min, &fr.u_min) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn shear_matrix_matches_explicit_rotation() {
        let fr = TriangleFrame::from_direction(
            Vector3::new(1.0, 1.0, 0.0).normalize(),
            Vector3::new(-1.0, 1.0, 1.0).cross(&Vector3::new(1.0, 1.0, 0.0)).normalize(),
        );
        let theta = 0.7;
        let p = AnisoParams::new(7.0, theta).unwrap();
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(fr.normal), theta);
        let u = fr.basis();
        let h = rot.matrix() * u * Matrix3::from_diagonal(&Vector3::new(7.0, 1.0, 1.0)) * u.transpose() * rot.matrix().transpose();
        assert!((shear_matrix(&fr, &p) - h).amax() < 1e-12);
    }

    #[test]
    fn strip_weights() {
        let mesh = generate::equilateral_strip::<f64>();
        let topo = build_edge_topology(&mesh);
        let frames = compute_triangle_frames(&mesh);
        let op = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::isotropic()).unwrap();
        let cot60 = 1.0 / 3f64.sqrt();
        assert!((op.stiffness.get(0, 1) - cot60).abs() < 1e-12);
        assert!((op.stiffness.get(0, 2) - cot60 / 2.0).abs() < 1e-12);
        assert!((op.stiffness.get(1, 3) - cot60 / 2.0).abs() < 1e-12);
        for i in 0..4 {
            let (_, vals) = op.stiffness.row(i);
            assert!(vals.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn theta_is_reduced_modulo_pi() {
        let p = AnisoParams::new(2.0, 3.0 * PI + 0.25).unwrap();
        assert!((p.theta() - 0.25).abs() < 1e-12);
        let p = AnisoParams::new(2.0, -0.25).unwrap();
        assert!((p.theta() - (PI - 0.25)).abs() < 1e-12);
        assert!(AnisoParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn flat_strip_is_finite_for_every_angle() {
        let mesh = generate::grid::<f64>(6, 3, 1.0, 0.4).normalized();
        let topo = build_edge_topology(&mesh);
        let frames = compute_triangle_frames(&mesh);
        for step in 0..360 {
            let p = AnisoParams::new(100.0, step as f64 * PI / 180.0).unwrap();
            let op = stiffness_matrix(&mesh, &topo, &frames, p).unwrap();
            assert!(op.stiffness.triplets().all(|(_, _, v)| v.is_finite()));
        }
    }

    #[test]
    fn operator_encoding_round_trips() {
        let mesh = generate::height_field::<f64>(5, 4, 0.2, 2).normalized();
        let topo = build_edge_topology(&mesh);
        let frames = compute_triangle_frames(&mesh);
        let op = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(10.0, 0.4).unwrap()).unwrap();
        let back: AnisoOperator<f64> = decode_operator(&encode_operator(&op)).unwrap();
        assert_eq!(back, op);
        let mut bytes = encode_operator(&op);
        bytes.truncate(bytes.len() - 3);
        assert!(decode_operator::<f64>(&bytes).is_err());
    }
}
