//! Triangle meshes: validation, unit-area normalization, edge topology and
//! per-face curvature frames.

mod frames;
pub mod generate;
mod io;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use frames::{
    compute_triangle_frames, compute_triangle_frames_with_tolerance, vertex_curvature_tensors,
    vertex_normals, TriangleFrame, UMBILIC_TOLERANCE,
};
pub use io::{load_mesh, load_mesh_as, parse_obj, parse_off, save_off, MeshFormat};

/// Smallest admissible face area relative to the total surface area.
pub const MIN_RELATIVE_FACE_AREA: f64 = 1e-12;

/// A validated, consistently oriented, edge-manifold triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T: Real> {
    vertices: Vec<Vector3<T>>,
    faces: Vec<[usize; 3]>,
}

impl<T: Real> TriMesh<T> {
    /// Validates the connectivity and geometry. The mesh is not rescaled.
    pub fn new(vertices: Vec<Vector3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if faces.is_empty() {
            return Err(Error::InvalidArgument("mesh has no faces".into()));
        }
        let mut used = vec![false; n];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= n {
                    return Err(Error::InvalidArgument(format!(
                        "face {f} references vertex {v} but the mesh has {n} vertices"
                    )));
                }
                used[v] = true;
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::DegenerateFace {
                    face: f,
                    reason: format!("repeated vertex index in {face:?}"),
                });
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::IsolatedVertex(v));
        }

        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut undirected: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for face in &faces {
            for c in 0..3 {
                let (a, b) = (face[c], face[(c + 1) % 3]);
                *directed.entry((a, b)).or_default() += 1;
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let non_manifold: Vec<_> = undirected
            .iter()
            .filter(|(_, &count)| count > 2)
            .map(|(&e, _)| e)
            .collect();
        if !non_manifold.is_empty() {
            return Err(Error::NonManifold(non_manifold));
        }
        let flipped: Vec<_> = directed
            .iter()
            .filter(|(_, &count)| count > 1)
            .map(|(&e, _)| e)
            .collect();
        if !flipped.is_empty() {
            return Err(Error::Orientation(flipped));
        }

        let mesh = Self { vertices, faces };
        let total = mesh.total_area();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "total surface area {total} is not positive"
            )));
        }
        let min_area = total * T::lit(MIN_RELATIVE_FACE_AREA);
        for f in 0..mesh.faces.len() {
            let area = mesh.face_area(f);
            if !(area > min_area) {
                return Err(Error::DegenerateFace {
                    face: f,
                    reason: format!("area {area} below {min_area}"),
                });
            }
        }
        Ok(mesh)
    }

    /// Uniformly rescales the mesh so its total surface area is one.
    pub fn normalized(mut self) -> Self {
        let scale = T::one() / self.total_area().sqrt();
        for v in &mut self.vertices {
            *v *= scale;
        }
        self
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vector3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex(&self, i: usize) -> Vector3<T> {
        self.vertices[i]
    }

    /// Unnormalized face normal, with length twice the face area.
    pub fn face_cross(&self, f: usize) -> Vector3<T> {
        let [a, b, c] = self.faces[f];
        (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]))
    }

    pub fn face_area(&self, f: usize) -> T {
        self.face_cross(f).norm() * T::lit(0.5)
    }

    pub fn face_normal(&self, f: usize) -> Vector3<T> {
        self.face_cross(f).normalize()
    }

    pub fn total_area(&self) -> T {
        (0..self.faces.len()).fold(T::zero(), |acc, f| acc + self.face_area(f))
    }

    /// Sorted, duplicate-free vertex neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for face in &self.faces {
            for c in 0..3 {
                let (a, b) = (face[c], face[(c + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Permutes vertex indices: vertex `i` of `self` becomes vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {} vertices",
                perm.len(),
                self.n()
            )));
        }
        let mut vertices = vec![Vector3::zeros(); self.n()];
        for (i, &p) in perm.iter().enumerate() {
            vertices[p] = self.vertices[i];
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [perm[f[0]], perm[f[1]], perm[f[2]]])
            .collect();
        Self::new(vertices, faces)
    }

    /// SHA-256 over the coordinates (as `f64`) and the face list.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        hasher.update((self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                hasher.update(c.as_f64().to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

/// Edge `(i, j)`, `i < j`, shared by faces `ijk` and `ijh`.
///
/// `k` lies opposite the edge in the face traversing `i -> j`, `h` in the face
/// traversing `j -> i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InteriorEdge {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub h: usize,
    pub face_k: usize,
    pub face_h: usize,
}

/// Edge `(i, j)`, `i < j`, on the boundary with opposite vertex `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundaryEdge {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub face: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTopology {
    pub interior: Vec<InteriorEdge>,
    pub boundary: Vec<BoundaryEdge>,
}

impl EdgeTopology {
    pub fn edge_count(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }
}

/// Classifies every undirected edge, sorted by `(i, j)`.
pub fn build_edge_topology<T: Real>(mesh: &TriMesh<T>) -> EdgeTopology {
    // (min, max) -> [(opposite, face, forward)]
    let mut incident: BTreeMap<(usize, usize), Vec<(usize, usize, bool)>> = BTreeMap::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        for c in 0..3 {
            let (a, b, opp) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
            incident
                .entry((a.min(b), a.max(b)))
                .or_default()
                .push((opp, f, a < b));
        }
    }
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for ((i, j), sides) in incident {
        match sides.as_slice() {
            [(k, face, _)] => boundary.push(BoundaryEdge {
                i,
                j,
                k: *k,
                face: *face,
            }),
            [s0, s1] => {
                let (fwd, bwd) = if s0.2 { (s0, s1) } else { (s1, s0) };
                interior.push(InteriorEdge {
                    i,
                    j,
                    k: fwd.0,
                    h: bwd.0,
                    face_k: fwd.1,
                    face_h: bwd.1,
                });
            }
            _ => unreachable!("validated meshes are edge-manifold"),
        }
    }
    EdgeTopology { interior, boundary }
}

#[cfg(test)]
mod tests {
    use super::generate;
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn single_triangle_has_three_boundary_edges() {
        let mesh = TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 2]])
            .unwrap();
        let topo = build_edge_topology(&mesh);
        assert_eq!(topo.interior.len(), 0);
        assert_eq!(topo.boundary.len(), 3);
    }

    #[test]
    fn two_triangles_share_one_interior_edge() {
        let mesh = generate::equilateral_strip::<f64>();
        let topo = build_edge_topology(&mesh);
        assert_eq!(topo.interior.len(), 1);
        assert_eq!(topo.boundary.len(), 4);
        let e = topo.interior[0];
        for (opp, face) in [(e.k, e.face_k), (e.h, e.face_h)] {
            let f = mesh.faces()[face];
            assert!(f.contains(&e.i) && f.contains(&e.j) && f.contains(&opp));
        }
    }

    #[test]
    fn tetrahedron_is_closed() {
        let topo = build_edge_topology(&generate::tetrahedron::<f64>());
        assert_eq!(topo.interior.len(), 6);
        assert!(topo.boundary.is_empty());
    }

    #[test]
    fn topology_ignores_face_order() {
        let mesh = generate::height_field::<f64>(6, 5, 0.1, 3);
        let mut faces = mesh.faces().to_vec();
        faces.reverse();
        faces.rotate_left(7);
        let shuffled = TriMesh::new(mesh.vertices().to_vec(), faces).unwrap();
        let strip = |t: EdgeTopology| {
            (
                t.interior.iter().map(|e| (e.i, e.j, e.k, e.h)).collect::<Vec<_>>(),
                t.boundary.iter().map(|e| (e.i, e.j, e.k)).collect::<Vec<_>>(),
            )
        };
        assert_eq!(
            strip(build_edge_topology(&mesh)),
            strip(build_edge_topology(&shuffled))
        );
    }

    #[test]
    fn normalization_gives_unit_area() {
        let mesh = generate::icosphere::<f64>(2).normalized();
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_isolated_vertices_and_flipped_faces() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(5., 5., 5.)];
        assert!(matches!(
            TriMesh::new(verts.clone(), vec![[0, 1, 2]]),
            Err(Error::IsolatedVertex(3))
        ));
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(1., 1., 0.)];
        assert!(matches!(
            TriMesh::new(verts, vec![[0, 1, 2], [1, 2, 3]]),
            Err(Error::Orientation(_))
        ));
    }

    #[test]
    fn rejects_zero_area_faces() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.), v(0., 1., 0.)];
        assert!(matches!(
            TriMesh::new(verts, vec![[0, 1, 3], [0, 2, 1]]),
            Err(Error::DegenerateFace { face: 1, .. })
        ));
    }
}
