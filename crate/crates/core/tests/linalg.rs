use fracctl::assembly::{fractional_stiffness, mass_matrix, KernelParams, QuadConfig};
use fracctl::linalg::{cg_solve, CgOptions, Preconditioner, SparseSymMatrix};
use fracctl::mesh::{build_mesh, Domain};
use proptest::prelude::*;

fn opts(tol: f64, preconditioner: Preconditioner) -> CgOptions {
    CgOptions { tol, max_iter: 10_000, preconditioner }
}

#[test]
fn identity_converges_in_one_iteration() {
    let n = 7;
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    let a = SparseSymMatrix::from_dense(n, &eye);
    let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
    let (x, rep) = cg_solve(&a, &b, None, &opts(1e-14, Preconditioner::None)).unwrap();
    assert_eq!(rep.iterations, 1);
    assert_eq!(x, b);
}

#[test]
fn two_by_two_system() {
    let a = SparseSymMatrix::from_dense(2, &[4.0, 1.0, 1.0, 3.0]);
    let (x, rep) = cg_solve(&a, &[1.0, 2.0], None, &opts(1e-14, Preconditioner::None)).unwrap();
    assert!(rep.converged);
    assert!((x[0] - 1.0 / 11.0).abs() < 1e-15 && (x[1] - 7.0 / 11.0).abs() < 1e-15);
}

#[test]
fn zero_rhs_needs_no_iterations() {
    let a = SparseSymMatrix::from_dense(2, &[4.0, 1.0, 1.0, 3.0]);
    let (x, rep) = cg_solve(&a, &[0.0, 0.0], None, &CgOptions::default()).unwrap();
    assert_eq!(rep.iterations, 0);
    assert_eq!(x, vec![0.0, 0.0]);
}

#[test]
fn nan_input_is_rejected() {
    let a = SparseSymMatrix::from_dense(2, &[4.0, 1.0, 1.0, 3.0]);
    assert!(cg_solve(&a, &[f64::NAN, 0.0], None, &CgOptions::default()).is_err());
}

#[test]
fn jacobi_does_not_slow_down_time_step_systems() {
    let qc = QuadConfig::default();
    let meshes = [
        build_mesh(Domain::interval(-1.0, 1.0), 1.0 / 16.0, 1.0).unwrap(),
        build_mesh(Domain::interval(-1.0, 1.0), 1.0 / 32.0, 2.0).unwrap(),
        build_mesh(Domain::disc(1.0), 0.25, 1.0).unwrap(),
    ];
    for mesh in &meshes {
        for s in [0.25, 0.75] {
            let k = fractional_stiffness(mesh, &KernelParams::new(mesh.dim(), s).unwrap(), &qc).unwrap();
            let m = mass_matrix(mesh);
            for tau in [1e-3, 1e-1, 1.0] {
                let a = m.linear_combination(1.0, &k, tau);
                let b: Vec<f64> = (0..a.dim()).map(|i| 1.0 + (i % 5) as f64).collect();
                let (_, plain) = cg_solve(&a, &b, None, &opts(1e-10, Preconditioner::None)).unwrap();
                let (_, jac) = cg_solve(&a, &b, None, &opts(1e-10, Preconditioner::Jacobi)).unwrap();
                assert!(plain.converged && jac.converged);
                assert!(
                    jac.iterations as f64 <= 1.1 * plain.iterations as f64,
                    "dim {} s {s} tau {tau}: jacobi {} vs plain {}",
                    mesh.dim(),
                    jac.iterations,
                    plain.iterations
                );
            }
        }
    }
}

fn spd_from(entries: &[f64], d: usize) -> SparseSymMatrix {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d).map(|k| entries[k * d + i] * entries[k * d + j]).sum::<f64>() / d as f64;
        }
        a[i * d + i] += 1.0;
    }
    SparseSymMatrix::from_dense(d, &a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_converges_within_dimension(d in 1usize..=50, seed in proptest::collection::vec(-1.0f64..1.0, 2500), pre in proptest::bool::ANY) {
        let a = spd_from(&seed[..d * d], d);
        let b: Vec<f64> = seed[..d].iter().map(|v| v + 0.1).collect();
        let pc = if pre { Preconditioner::Jacobi } else { Preconditioner::None };
        let (x, rep) = cg_solve(&a, &b, None, &opts(1e-12, pc)).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= d);
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(rn <= 1e-12 * bn * 1.0001);
    }

    #[test]
    fn dense_round_trip_and_matvec(d in 1usize..12, vals in proptest::collection::vec(-2.0f64..2.0, 144), x in proptest::collection::vec(-1.0f64..1.0, 12)) {
        let mut dense = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = if (i + j) % 3 == 0 { 0.0 } else { vals[i * 12 + j] };
                dense[i * d + j] = v;
                dense[j * d + i] = v;
            }
        }
        let a = SparseSymMatrix::from_dense(d, &dense);
        prop_assert_eq!(a.to_dense(), dense.clone());
        prop_assert_eq!(a.asymmetry(), 0.0);
        let y = a.matvec(&x[..d]);
        for i in 0..d {
            let want: f64 = (0..d).map(|j| dense[i * d + j] * x[j]).sum();
            prop_assert!((y[i] - want).abs() < 1e-13);
        }
    }
}
