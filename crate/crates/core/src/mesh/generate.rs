//! Procedural meshes used by tests, benchmarks and the bundled synthetic pair.
//!
//! None of these are normalized; call [`TriMesh::normalized`] where unit area
//! matters.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::scalar::Real;

fn v3<T: Real>(x: f64, y: f64, z: f64) -> Vector3<T> {
    Vector3::new(T::lit(x), T::lit(y), T::lit(z))
}

fn build<T: Real>(vertices: Vec<Vector3<T>>, faces: Vec<[usize; 3]>) -> TriMesh<T> {
    TriMesh::new(vertices, faces).expect("generator produced an invalid mesh")
}

/// Two unit equilateral triangles sharing the edge (0, 1).
pub fn equilateral_strip<T: Real>() -> TriMesh<T> {
    let h = 3f64.sqrt() / 2.0;
    build(
        vec![v3(0.0, 0.0, 0.0), v3(1.0, 0.0, 0.0), v3(0.5, h, 0.0), v3(0.5, -h, 0.0)],
        vec![[0, 1, 2], [1, 0, 3]],
    )
}

pub fn tetrahedron<T: Real>() -> TriMesh<T> {
    build(
        vec![
            v3(1.0, 1.0, 1.0),
            v3(1.0, -1.0, -1.0),
            v3(-1.0, 1.0, -1.0),
            v3(-1.0, -1.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
}

/// Regular icosahedron inscribed in the unit sphere, outward-oriented.
pub fn icosahedron<T: Real>() -> TriMesh<T> {
    let (vertices, faces) = icosahedron_raw();
    build(
        vertices.iter().map(|v| v3(v[0], v[1], v[2])).collect(),
        faces,
    )
}

fn icosahedron_raw() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let norm = (1.0 + t * t).sqrt();
    let vertices = raw.iter().map(|p| [p[0] / norm, p[1] / norm, p[2] / norm]).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

/// Unit icosphere with `subdivisions` rounds of midpoint refinement
/// (12, 42, 162, 642, 2562, ... vertices).
pub fn icosphere<T: Real>(subdivisions: usize) -> TriMesh<T> {
    let (mut vertices, mut faces) = icosahedron_raw();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut mid = |p: usize, q: usize| {
                *midpoint.entry((p.min(q), p.max(q))).or_insert_with(|| {
                    let m = [
                        vertices[p][0] + vertices[q][0],
                        vertices[p][1] + vertices[q][1],
                        vertices[p][2] + vertices[q][2],
                    ];
                    let len = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    vertices.push([m[0] / len, m[1] / len, m[2] / len]);
                    vertices.len() - 1
                })
            };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(
        vertices.iter().map(|v| v3(v[0], v[1], v[2])).collect(),
        faces,
    )
}

fn quad_faces(nx: usize, ny: usize, wrap_x: bool, wrap_y: bool) -> Vec<[usize; 3]> {
    let cols = if wrap_x { nx } else { nx - 1 };
    let rows = if wrap_y { ny } else { ny - 1 };
    let idx = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let mut faces = Vec::with_capacity(2 * cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            } else {
                faces.push([v00, v10, v01]);
                faces.push([v10, v11, v01]);
            }
        }
    }
    faces
}

/// Regular `nx` x `ny` vertex grid in the plane z = 0, normal +z.
pub fn grid<T: Real>(nx: usize, ny: usize, width: f64, height: f64) -> TriMesh<T> {
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(v3(
                width * i as f64 / (nx - 1) as f64,
                height * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    build(vertices, quad_faces(nx, ny, false, false))
}

/// Randomly jittered open height field over the unit square with a smooth
/// random relief of the given amplitude.
pub fn height_field<T: Real>(nx: usize, ny: usize, amplitude: f64, seed: u64) -> TriMesh<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.3..1.0),
            ]
        })
        .collect();
    let (hx, hy) = (1.0 / (nx - 1) as f64, 1.0 / (ny - 1) as f64);
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let interior = i > 0 && j > 0 && i + 1 < nx && j + 1 < ny;
            let (jx, jy) = if interior {
                (rng.random_range(-0.25..0.25) * hx, rng.random_range(-0.25..0.25) * hy)
            } else {
                (0.0, 0.0)
            };
            let (x, y) = (i as f64 * hx + jx, j as f64 * hy + jy);
            let z: f64 = waves
                .iter()
                .map(|w| w[3] * (w[0] * x * PI + w[1] * y * PI + w[2]).sin())
                .sum();
            vertices.push(v3(x, y, amplitude * z / waves.len() as f64));
        }
    }
    build(vertices, quad_faces(nx, ny, false, false))
}

/// Open cylinder of the given radius around the z axis, outward-oriented.
pub fn cylinder<T: Real>(radius: f64, height: f64, around: usize, along: usize) -> TriMesh<T> {
    let mut vertices = Vec::with_capacity(around * (along + 1));
    for k in 0..=along {
        let z = height * k as f64 / along as f64;
        for i in 0..around {
            let phi = 2.0 * PI * i as f64 / around as f64;
            vertices.push(v3(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    build(vertices, quad_faces(around, along + 1, true, false))
}

/// Torus with major radius 1 and minor radius 0.4 whose tube radius is
/// modulated by a few random Gaussian bumps, which removes its symmetries.
pub fn bumpy_torus<T: Real>(around: usize, tube: usize, amplitude: f64, seed: u64) -> TriMesh<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            [
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.35..0.8),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let wrapped = |d: f64| {
        let d = d.rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    };
    let (major, minor) = (1.0, 0.4);
    let mut vertices = Vec::with_capacity(around * tube);
    for j in 0..tube {
        let v = 2.0 * PI * j as f64 / tube as f64;
        for i in 0..around {
            let u = 2.0 * PI * i as f64 / around as f64;
            let relief: f64 = bumps
                .iter()
                .map(|b| {
                    let (du, dv) = (wrapped(u - b[0]), wrapped(v - b[1]));
                    b[3] * (-(du * du + dv * dv) / (2.0 * b[2] * b[2])).exp()
                })
                .sum();
            let r = minor * (1.0 + amplitude * relief);
            let ring = major + r * v.cos();
            vertices.push(v3(ring * u.cos(), ring * u.sin(), r * v.sin()));
        }
    }
    build(vertices, quad_faces(around, tube, true, true))
}

/// A reference shape, a near-isometric deformation of it with shuffled vertex
/// order, and the ground truth mapping query vertices to reference vertices.
#[derive(Debug, Clone)]
pub struct SyntheticPair<T: Real> {
    pub reference: TriMesh<T>,
    pub query: TriMesh<T>,
    /// `ground_truth[x]` is the reference vertex corresponding to query vertex `x`.
    pub ground_truth: Vec<usize>,
}

/// Bumpy 25 x 20 torus (500 vertices) and a smoothly perturbed, vertex-shuffled copy.
pub fn synthetic_pair<T: Real>(seed: u64) -> SyntheticPair<T> {
    let reference = bumpy_torus::<T>(25, 20, 0.35, seed).normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a1e);
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    let strength = 0.015;
    let deformed: Vec<Vector3<T>> = reference
        .vertices()
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
            v3(
                x + strength * (3.0 * y + phases[0]).sin(),
                y + strength * (3.0 * z + phases[1]).sin(),
                z + strength * (3.0 * x + phases[2]).sin(),
            )
        })
        .collect();
    let deformed = TriMesh::new(deformed, reference.faces().to_vec())
        .expect("small deformation keeps the mesh valid");

    let mut perm: Vec<usize> = (0..reference.n()).collect();
    perm.shuffle(&mut rng);
    let query = deformed
        .permuted(&perm)
        .expect("permutation of a valid mesh")
        .normalized();
    let mut ground_truth = vec![0; reference.n()];
    for (r, &q) in perm.iter().enumerate() {
        ground_truth[q] = r;
    }
    SyntheticPair {
        reference,
        query,
        ground_truth,
    }
}
