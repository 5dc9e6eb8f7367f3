mod oracles;

use std::f64::consts::PI;

use acnn::laplacian::{cotangent_stiffness, mass_matrix, stiffness_matrix, AnisoParams};
use acnn::mesh::{build_edge_topology, compute_triangle_frames, generate, TriMesh};
use nalgebra::DMatrix;

fn test_meshes() -> Vec<(&'static str, TriMesh<f64>)> {
    vec![
        ("height field", generate::height_field(15, 14, 0.4, 11).normalized()),
        ("bumpy torus", generate::bumpy_torus(15, 12, 0.3, 5).normalized()),
        ("icosphere", generate::icosphere(2).normalized()),
        ("cylinder", generate::cylinder(0.5, 1.5, 16, 9).normalized()),
    ]
}

#[test]
fn isotropic_operator_is_the_cotangent_laplacian() {
    let mesh = generate::height_field::<f64>(25, 20, 0.5, 7).normalized();
    assert_eq!(mesh.n(), 500);
    let topo = build_edge_topology(&mesh);
    let frames = compute_triangle_frames(&mesh);
    let cot = cotangent_stiffness(&mesh, &topo).unwrap().to_dense();
    assert!((&cot - oracles::dense_cotangent(&mesh)).amax() < 1e-10);
    for l in 0..8 {
        let theta = l as f64 * PI / 8.0 + 0.1;
        let op = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(1.0, theta).unwrap()).unwrap();
        assert!((op.stiffness.to_dense() - &cot).amax() < 1e-10, "theta = {theta}");
    }
}

#[test]
fn sparse_assembly_matches_dense_fem() {
    for (name, mesh) in test_meshes() {
        assert!(mesh.n() <= 300, "{name}: {}", mesh.n());
        let topo = build_edge_topology(&mesh);
        let frames = compute_triangle_frames(&mesh);
        for alpha in [1.0, 10.0, 100.0] {
            for theta in [0.0, 0.7, 2.0] {
                let op = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(alpha, theta).unwrap()).unwrap();
                let oracle = oracles::dense_fem_stiffness(&mesh, &frames, alpha, theta);
                let err = (op.stiffness.to_dense() - &oracle).amax();
                assert!(err < 1e-10, "{name} alpha={alpha} theta={theta}: {err}");
            }
        }
    }
}

#[test]
fn mass_matches_barycentric_areas() {
    for (name, mesh) in test_meshes() {
        let s = mass_matrix(&mesh);
        for (a, b) in s.iter().zip(oracles::dense_mass(&mesh)) {
            assert!((a - b).abs() < 1e-15, "{name}");
        }
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn stiffness_is_symmetric_with_zero_row_sums_and_psd() {
    let mesh = generate::bumpy_torus::<f64>(14, 10, 0.3, 8).normalized();
    let topo = build_edge_topology(&mesh);
    let frames = compute_triangle_frames(&mesh);
    for theta in [0.0, 1.0, 2.5] {
        let op = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(100.0, theta).unwrap()).unwrap();
        let w = op.stiffness.to_dense();
        assert_eq!(op.stiffness.asymmetry(), 0.0);
        let scale = w.amax();
        for row in w.row_iter() {
            assert!(row.sum().abs() < 1e-12 * scale);
        }
        let neg = -&w;
        let (values, _) = oracles::jacobi_eigen(&neg);
        assert!(values[0] >= -1e-8 * scale, "{}", values[0]);
    }
}

#[test]
fn orientation_is_pi_periodic() {
    let mesh = generate::height_field::<f64>(12, 12, 0.5, 3).normalized();
    let topo = build_edge_topology(&mesh);
    let frames = compute_triangle_frames(&mesh);
    for theta in [0.0, 0.4, 1.3] {
        let a = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(30.0, theta).unwrap()).unwrap();
        let b = stiffness_matrix(&mesh, &topo, &frames, AnisoParams::new(30.0, theta + PI).unwrap()).unwrap();
        let diff: DMatrix<f64> = a.stiffness.to_dense() - b.stiffness.to_dense();
        assert!(diff.amax() < 1e-10 * a.stiffness.to_dense().amax());
    }
}
