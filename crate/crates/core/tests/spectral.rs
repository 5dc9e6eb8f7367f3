mod oracles;

use acnn::laplacian::{cotangent_stiffness, mass_matrix, stiffness_matrix, AnisoOperator, AnisoParams};
use acnn::mesh::{build_edge_topology, compute_triangle_frames, generate, TriMesh};
use acnn::spectral::{
    default_basis_size, generalized_eig, generalized_eig_with, heat_kernel_matrix, heat_operator_apply, EigenOptions,
};
use nalgebra::{DMatrix, DVector};

fn aniso(mesh: &TriMesh<f64>, alpha: f64, theta: f64) -> AnisoOperator<f64> {
    let topo = build_edge_topology(mesh);
    let frames = compute_triangle_frames(mesh);
    stiffness_matrix(mesh, &topo, &frames, AnisoParams::new(alpha, theta).unwrap()).unwrap()
}

fn isotropic(mesh: &TriMesh<f64>) -> AnisoOperator<f64> {
    AnisoOperator {
        stiffness: cotangent_stiffness(mesh, &build_edge_topology(mesh)).unwrap(),
        mass: mass_matrix(mesh),
        params: AnisoParams::isotropic(),
    }
}

fn reduced(op: &AnisoOperator<f64>) -> DMatrix<f64> {
    let w = op.stiffness.to_dense();
    DMatrix::from_fn(op.n(), op.n(), |i, j| -w[(i, j)] / (op.mass[i] * op.mass[j]).sqrt())
}

#[test]
fn full_spectrum_matches_jacobi() {
    let mesh = generate::bumpy_torus::<f64>(12, 10, 0.3, 4).normalized();
    let op = aniso(&mesh, 10.0, 0.6);
    let n = mesh.n();
    let basis = generalized_eig(&op, n).unwrap();
    let (values, _) = oracles::jacobi_eigen(&reduced(&op));
    let scale = values[n - 1];
    for (a, b) in basis.lambda.iter().zip(&values) {
        assert!((a - b).abs() < 1e-9 * scale, "{a} vs {b}");
    }
    assert!(basis.residual(&op.stiffness) < 1e-8);
    assert!(basis.orthonormality_error() < 1e-8);
}

#[test]
fn lanczos_agrees_with_dense() {
    let mesh = generate::bumpy_torus::<f64>(25, 20, 0.3, 1).normalized();
    let op = aniso(&mesh, 100.0, 0.3);
    let k = 40;
    let dense = generalized_eig(&op, k).unwrap();
    let sparse = generalized_eig_with(
        &op,
        k,
        &EigenOptions {
            dense_limit: 10,
            ..EigenOptions::default()
        },
    )
    .unwrap();
    for (a, b) in dense.lambda.iter().zip(sparse.lambda.iter()) {
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
    assert!(sparse.residual(&op.stiffness) < 1e-6);
    assert!(sparse.orthonormality_error() < 1e-8);
}

#[test]
fn default_size_bases_are_accurate_on_all_meshes() {
    let meshes = [
        generate::height_field::<f64>(20, 20, 0.4, 2).normalized(),
        generate::bumpy_torus::<f64>(30, 20, 0.3, 6).normalized(),
        generate::icosphere::<f64>(3).normalized(),
        generate::bumpy_torus::<f64>(60, 40, 0.3, 6).normalized(),
    ];
    for mesh in &meshes {
        let op = aniso(mesh, 100.0, 1.1);
        let k = default_basis_size(mesh.n());
        let basis = generalized_eig(&op, k).unwrap();
        let scale = op.stiffness.triplets().fold(1.0f64, |a, (_, _, v)| a.max(v.abs()));
        assert!(basis.residual(&op.stiffness) <= 1e-6 * scale);
        assert!(basis.orthonormality_error() <= 1e-8);
    }
}

#[test]
fn icosphere_multiplicities() {
    let mesh = generate::icosphere::<f64>(4).normalized();
    assert_eq!(mesh.n(), 2562);
    let basis = generalized_eig(&isotropic(&mesh), 12).unwrap();
    let l = &basis.lambda;
    assert!(l[0].abs() < 1e-8);
    let first = (l[1] + l[2] + l[3]) / 3.0;
    let second = (4..9).map(|i| l[i]).sum::<f64>() / 5.0;
    for i in 1..4 {
        assert!((l[i] - first).abs() < 1e-3 * first);
    }
    for i in 4..9 {
        assert!((l[i] - second).abs() < 1e-2 * second);
    }
    assert!(l[9] > 1.5 * second);
    let ratio = second / first;
    assert!((ratio - 3.0).abs() < 0.06, "{ratio}");
}

#[test]
fn heat_kernel_matches_matrix_exponential() {
    let mesh = generate::bumpy_torus::<f64>(10, 8, 0.3, 9).normalized();
    let op = aniso(&mesh, 10.0, 0.2);
    let n = mesh.n();
    let basis = generalized_eig(&op, n).unwrap();
    let w = op.stiffness.to_dense();
    let generator = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / op.mass[i]);
    for t in [0.005, 0.05] {
        let oracle = oracles::expm(&(&generator * t));
        let kernel = heat_kernel_matrix(&basis, t);
        let heat = DMatrix::from_fn(n, n, |i, j| kernel[(i, j)] * op.mass[j]);
        assert!((heat - oracle).amax() < 1e-9, "t = {t}");
    }
}

#[test]
fn semigroup_and_conservation() {
    let mesh = generate::bumpy_torus::<f64>(20, 14, 0.3, 3).normalized();
    let op = aniso(&mesh, 100.0, 2.0);
    let basis = generalized_eig(&op, 120).unwrap();
    let f = DVector::from_fn(mesh.n(), |i, _| (i as f64 * 0.37).sin());
    // project into the truncated span first
    let f = &basis.phi * basis.coefficients(&f);
    let (t, s) = (0.01, 0.03);
    let two_steps = heat_operator_apply(&basis, t, &heat_operator_apply(&basis, s, &f).unwrap()).unwrap();
    let one_step = heat_operator_apply(&basis, t + s, &f).unwrap();
    assert!((two_steps - one_step).amax() < 1e-9);
    let ones = DVector::from_element(mesh.n(), 1.0);
    let heated = heat_operator_apply(&basis, 0.1, &ones).unwrap();
    assert!((heated - ones).amax() < 1e-9);
}
