//! From soft correspondences to point maps, functional-map refinement and
//! geodesic error evaluation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::spectral::SpectralBasis;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_REFINEMENT_SIZE: usize = 30;
pub const DIAMETER_SOURCES: usize = 30;
const MAX_CONDITION: f64 = 1e12;

/// Hard correspondence `x -> assignment[x]` with the probability it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap<T: Real> {
    pub assignment: Vec<usize>,
    pub confidence: Vec<T>,
}

impl<T: Real> PointMap<T> {
    /// A map with unit confidence everywhere.
    pub fn certain(assignment: Vec<usize>) -> Self {
        let confidence = vec![T::one(); assignment.len()];
        Self {
            assignment,
            confidence,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Row-wise argmax of an `n x m` soft correspondence; ties go to the lowest index.
pub fn hard_assignment<T: Real>(soft: &DMatrix<T>) -> PointMap<T> {
    let (assignment, confidence) = soft
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            (best, row[best])
        })
        .unzip();
    PointMap {
        assignment,
        confidence,
    }
}

/// Result of [`refine_functional_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement<T: Real> {
    /// `k x k` matrix `C` with `Phi_I C ~ Psi_I`.
    pub functional_map: DMatrix<T>,
    pub map: PointMap<T>,
    /// Number of confident vertices used in the fit.
    pub selected: usize,
}

/// Fits a functional map to the confident part of `map` and re-matches every
/// query vertex to the nearest reference vertex in the `k`-dimensional
/// spectral embedding. Refined points keep their original confidence.
pub fn refine_functional_map<T: Real>(
    map: &PointMap<T>,
    query: &SpectralBasis<T>,
    reference: &SpectralBasis<T>,
    threshold: T,
    k: usize,
) -> Result<Refinement<T>> {
    if map.len() != query.n() {
        return Err(Error::Dimension(format!(
            "map covers {} vertices, query basis {}",
            map.len(),
            query.n()
        )));
    }
    if k == 0 || k > query.k() || k > reference.k() {
        return Err(Error::InvalidArgument(format!(
            "refinement size {k} exceeds the available bases ({} and {})",
            query.k(),
            reference.k()
        )));
    }
    let m = reference.n();
    if let Some(&bad) = map.assignment.iter().find(|&&y| y >= m) {
        return Err(Error::Dimension(format!("map target {bad} outside {m} reference vertices")));
    }
    let selected: Vec<usize> = (0..map.len()).filter(|&x| map.confidence[x] > threshold).collect();
    if selected.len() <= k {
        return Err(Error::Underdetermined {
            selected: selected.len(),
            k,
        });
    }
    let a = DMatrix::from_fn(selected.len(), k, |r, c| {
        let x = selected[r];
        query.mass[x].sqrt() * query.phi[(x, c)]
    });
    let b = DMatrix::from_fn(selected.len(), k, |r, c| {
        let x = selected[r];
        query.mass[x].sqrt() * reference.phi[(map.assignment[x], c)]
    });
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let condition = if min > T::zero() { (max / min).as_f64() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let c = svd
        .solve(&b, T::zero())
        .map_err(|_| Error::RankDeficient { condition })?;

    let mapped = query.phi.columns(0, k) * &c;
    let psi = reference.phi.columns(0, k).into_owned();
    let assignment: Vec<usize> = (0..map.len())
        .into_par_iter()
        .map(|x| {
            let mut best = 0;
            let mut best_dist = T::lit(f64::INFINITY);
            for y in 0..m {
                let mut d = T::zero();
                for c in 0..k {
                    let diff = mapped[(x, c)] - psi[(y, c)];
                    d += diff * diff;
                }
                if d < best_dist {
                    best_dist = d;
                    best = y;
                }
            }
            best
        })
        .collect();
    Ok(Refinement {
        functional_map: c,
        map: PointMap {
            assignment,
            confidence: map.confidence.clone(),
        },
        selected: selected.len(),
    })
}

/// Edge graph of a mesh with Euclidean edge lengths.
#[derive(Debug, Clone)]
pub struct EdgeGraph<T: Real> {
    adjacency: Vec<Vec<(usize, T)>>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> EdgeGraph<T> {
    pub fn from_mesh(mesh: &TriMesh<T>) -> Self {
        let adjacency = mesh
            .vertex_neighbors()
            .into_iter()
            .enumerate()
            .map(|(i, nbrs)| {
                nbrs.into_iter()
                    .map(|j| (j, (mesh.vertex(i) - mesh.vertex(j)).norm()))
                    .collect()
            })
            .collect();
        Self { adjacency }
    }

    /// Undirected graph from `(i, j, length)` edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        Self { adjacency }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Dijkstra distances from `source`; unreachable vertices are infinite.
    pub fn distances(&self, source: usize) -> Vec<T> {
        let mut dist = vec![T::lit(f64::INFINITY); self.n()];
        let mut done = vec![false; self.n()];
        dist[source] = T::zero();
        let mut heap = BinaryHeap::from([Entry(0.0, source)]);
        while let Some(Entry(_, v)) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            for &(u, w) in &self.adjacency[v] {
                let candidate = dist[v] + w;
                if candidate < dist[u] {
                    dist[u] = candidate;
                    heap.push(Entry(candidate.as_f64(), u));
                }
            }
        }
        dist
    }

    /// Largest finite distance found from `sources` farthest-point-sampled
    /// sources, starting at vertex 0.
    pub fn diameter(&self, sources: usize) -> T {
        if self.n() == 0 {
            return T::zero();
        }
        let mut nearest = vec![T::lit(f64::INFINITY); self.n()];
        let mut diameter = T::zero();
        let mut source = 0;
        for _ in 0..sources.max(1) {
            let d = self.distances(source);
            for (slot, &v) in nearest.iter_mut().zip(&d) {
                if v.as_f64().is_finite() {
                    diameter = diameter.max(v);
                }
                *slot = slot.min(v);
            }
            let next = (0..self.n())
                .filter(|&i| nearest[i].as_f64().is_finite())
                .max_by(|&a, &b| nearest[a].partial_cmp(&nearest[b]).unwrap_or(Ordering::Equal).then(b.cmp(&a)));
            match next {
                Some(v) if nearest[v] > T::zero() => source = v,
                _ => break,
            }
        }
        diameter
    }
}

/// Geodesic error `d(pred[x], truth[x])` on the reference graph. With a
/// symmetry map the error is the smaller of the distances to the true match
/// and to its symmetric image.
pub fn geodesic_errors<T: Real>(
    graph: &EdgeGraph<T>,
    pred: &[usize],
    truth: &[usize],
    symmetry: Option<&[usize]>,
) -> Result<Vec<T>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} ground-truth matches",
            pred.len(),
            truth.len()
        )));
    }
    let m = graph.n();
    if let Some(&bad) = pred.iter().chain(truth).find(|&&y| y >= m) {
        return Err(Error::Dimension(format!("vertex {bad} outside {m} reference vertices")));
    }
    if let Some(sym) = symmetry {
        if sym.len() != m || sym.iter().any(|&y| y >= m) {
            return Err(Error::Dimension("symmetry map must permute the reference vertices".into()));
        }
    }
    let mut targets: Vec<usize> = truth.to_vec();
    if let Some(sym) = symmetry {
        targets.extend(truth.iter().map(|&y| sym[y]));
    }
    targets.sort_unstable();
    targets.dedup();
    let fields: Vec<(usize, Vec<T>)> = targets.par_iter().map(|&y| (y, graph.distances(y))).collect();
    let lookup = |y: usize| -> &Vec<T> { &fields[fields.binary_search_by_key(&y, |f| f.0).unwrap()].1 };
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let direct = lookup(y)[p];
            match symmetry {
                Some(sym) => direct.min(lookup(sym[y])[p]),
                None => direct,
            }
        })
        .collect())
}

/// Fraction of errors at most `r * diameter` for each radius `r`.
pub fn princeton_curve<T: Real>(errors: &[T], radii: &[T], diameter: T) -> Result<Vec<T>> {
    if radii.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("radii must be ascending".into()));
    }
    if !(diameter > T::zero()) {
        return Err(Error::InvalidArgument(format!("diameter {diameter} must be positive")));
    }
    if errors.is_empty() {
        return Err(Error::Dimension("no errors to evaluate".into()));
    }
    let mut sorted: Vec<T> = errors.iter().map(|&e| e / diameter).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Greater));
    let total = T::count(sorted.len());
    Ok(radii
        .iter()
        .map(|&r| T::count(sorted.partition_point(|&e| e <= r)) / total)
        .collect())
}

/// `count` radii evenly spaced in `[0, max]`.
pub fn default_radii(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

/// One 0-based reference index per line.
pub fn parse_map(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("expected a vertex index, found `{}`", l.trim()),
            })
        })
        .collect()
}

pub fn format_map(map: &[usize]) -> String {
    let mut out = String::with_capacity(map.len() * 6);
    for y in map {
        writeln!(out, "{y}").unwrap();
    }
    out
}

pub fn format_curve<T: Real>(radii: &[T], fractions: &[T]) -> String {
    let mut out = String::from("radius,fraction\n");
    for (r, f) in radii.iter().zip(fractions) {
        writeln!(out, "{:?},{:?}", r.as_f64(), f.as_f64()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::{cotangent_stiffness, mass_matrix, AnisoOperator, AnisoParams};
    use crate::mesh::{build_edge_topology, generate};
    use crate::spectral::generalized_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(mesh: &TriMesh<f64>, k: usize) -> SpectralBasis<f64> {
        let op = AnisoOperator {
            stiffness: cotangent_stiffness(mesh, &build_edge_topology(mesh)).unwrap(),
            mass: mass_matrix(mesh),
            params: AnisoParams::isotropic(),
        };
        generalized_eig(&op, k).unwrap()
    }

    #[test]
    fn hard_assignment_examples() {
        let map = hard_assignment(&DMatrix::<f64>::identity(4, 4));
        assert_eq!(map.assignment, vec![0, 1, 2, 3]);
        assert_eq!(map.confidence, vec![1.0; 4]);
        let uniform = hard_assignment(&DMatrix::<f64>::from_element(3, 10, 0.1));
        assert_eq!(uniform.assignment, vec![0; 3]);
        assert_eq!(uniform.confidence, vec![0.1; 3]);
    }

    #[test]
    fn hard_assignment_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let soft = DMatrix::from_fn(50, 17, |_, _| rng.random_range(0.0..1.0f64));
        let map = hard_assignment(&soft);
        for x in 0..50 {
            let mut best = 0;
            for y in 1..17 {
                if soft[(x, y)] > soft[(x, best)] {
                    best = y;
                }
            }
            assert_eq!(map.assignment[x], best);
        }
        let squashed = hard_assignment(&soft.map(|v| (3.0 * v).exp()));
        assert_eq!(squashed.assignment, map.assignment);
    }

    #[test]
    fn identity_refinement() {
        let mesh = generate::bumpy_torus::<f64>(16, 10, 0.3, 2).normalized();
        let b = basis(&mesh, 25);
        let map = PointMap::certain((0..mesh.n()).collect());
        let refined = refine_functional_map(&map, &b, &b, 0.1, 20).unwrap();
        assert!((refined.functional_map - DMatrix::identity(20, 20)).amax() < 1e-6);
        assert_eq!(refined.map.assignment, map.assignment);
    }

    #[test]
    fn refinement_needs_confident_points() {
        let mesh = generate::icosphere::<f64>(2).normalized();
        let b = basis(&mesh, 12);
        let map = PointMap {
            assignment: (0..mesh.n()).collect(),
            confidence: vec![0.9; mesh.n()],
        };
        match refine_functional_map(&map, &b, &b, 1.0, 10) {
            Err(Error::Underdetermined { selected: 0, k: 10 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dijkstra_basics() {
        let graph = EdgeGraph::<f64>::from_edges(4, &[(0, 1, 0.5), (1, 2, 0.25), (0, 2, 1.0)]);
        let d = graph.distances(0);
        assert_eq!(d[1], 0.5);
        assert_eq!(d[2], 0.75);
        assert!(d[3].is_infinite());
        assert_eq!(graph.diameter(5), 0.75);
    }

    #[test]
    fn curve_examples() {
        let radii = default_radii(0.2, 21);
        let perfect = princeton_curve(&[0.0f64; 10], &radii, 2.0).unwrap();
        assert!(perfect.iter().all(|&f| f == 1.0));
        let step = princeton_curve(&[0.1f64; 10], &radii, 2.0).unwrap();
        for (r, f) in radii.iter().zip(&step) {
            assert_eq!(*f, if *r >= 0.05 - 1e-15 { 1.0 } else { 0.0 }, "r = {r}");
        }
        assert!(princeton_curve(&[0.0f64], &[0.2, 0.1], 1.0).is_err());
    }

    #[test]
    fn map_text_round_trip() {
        let map = vec![3, 0, 17, 2];
        assert_eq!(parse_map(&format_map(&map)).unwrap(), map);
        assert!(matches!(parse_map("1\nx\n"), Err(Error::Parse { line: 2, .. })));
    }
}
