use fracctl::assembly::{fractional_stiffness, load_vector, mass_matrix, KernelParams, QuadConfig};
use fracctl::linalg::{CgOptions, SparseSymMatrix};
use fracctl::mesh::{build_mesh, Domain, Mesh};
use fracctl::optimize::ControlField;
use fracctl::timestepping::{
    l2_project_initial, solve_adjoint_backward, solve_state_forward, time_averaged_load, ControlMap, Propagator,
    TimeGrid, Trajectory,
};
use fracctl::verify::{random_control, random_stability, seeded_rng, stability_ratios, SmoothRandomField};
use fracctl::Error;
use proptest::prelude::*;
use rand::Rng;

const STRICT: CgOptions = CgOptions { tol: 1e-13, max_iter: 10_000, preconditioner: fracctl::linalg::Preconditioner::Jacobi };

struct Setup {
    mesh: Mesh,
    k: SparseSymMatrix,
    m: SparseSymMatrix,
    grid: TimeGrid,
}

fn setup(cells: usize, s: f64, steps: usize) -> Setup {
    let mesh = build_mesh(Domain::interval(-1.0, 1.0), 2.0 / cells as f64, 1.0).unwrap();
    let k = fractional_stiffness(&mesh, &KernelParams::new(1, s).unwrap(), &QuadConfig::default()).unwrap();
    let m = mass_matrix(&mesh);
    Setup { mesh, k, m, grid: TimeGrid::new(1.0, steps).unwrap() }
}

fn random_traj(grid: TimeGrid, n: usize, per_step: bool, rng: &mut impl Rng) -> Trajectory {
    let len = if per_step { grid.steps() } else { grid.steps() + 1 };
    let data = (0..len).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    if per_step {
        Trajectory::per_step(grid, data).unwrap()
    } else {
        Trajectory::nodal(grid, data).unwrap()
    }
}

#[test]
fn zero_data_gives_zero_state() {
    let st = setup(16, 0.5, 8);
    let n = st.mesh.n_dofs();
    let f = Trajectory::zeros_per_step(st.grid, n);
    let z = ControlField::for_mesh(&st.mesh, st.grid);
    let u = solve_state_forward(&st.k, &st.m, &st.mesh, &f, Some(&z), &vec![0.0; n], &st.grid, &STRICT).unwrap();
    assert_eq!(u.first_index(), 0);
    assert_eq!(u.last_index(), 8);
    assert!(u.iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
}

#[test]
fn scalar_adjoint_runs_the_recursion_backwards() {
    let (lambda, tau) = (3.0, 0.25);
    let k = SparseSymMatrix::from_dense(1, &[lambda]);
    let m = SparseSymMatrix::from_dense(1, &[1.0]);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let u = Trajectory::nodal(grid, vec![vec![0.0]; 5]).unwrap();
    let mut d = vec![vec![0.0]; 4];
    d[3] = vec![-1.0];
    let ud = Trajectory::per_step(grid, d).unwrap();
    let p = solve_adjoint_backward(&k, &m, &u, &ud, &grid, &STRICT).unwrap();
    assert_eq!(p.at(4)[0], 0.0);
    for kk in 0..4 {
        let want = tau / (1.0 + tau * lambda).powi(4 - kk as i32);
        assert!((p.at(kk)[0] - want).abs() < 1e-14, "{kk}: {} vs {want}", p.at(kk)[0]);
    }
}

#[test]
fn tracking_the_state_itself_gives_zero_adjoint() {
    let st = setup(16, 0.4, 8);
    let mut rng = seeded_rng(3);
    let n = st.mesh.n_dofs();
    let f = random_traj(st.grid, n, true, &mut rng);
    let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u = solve_state_forward(&st.k, &st.m, &st.mesh, &f, None, &u0, &st.grid, &STRICT).unwrap();
    let loads = (1..=8).map(|k| st.m.matvec(u.at(k))).collect();
    let ud = Trajectory::per_step(st.grid, loads).unwrap();
    let p = solve_adjoint_backward(&st.k, &st.m, &u, &ud, &st.grid, &STRICT).unwrap();
    assert!(p.iter().all(|(_, v)| v.iter().all(|&x| x.abs() < 1e-14)));
}

#[test]
fn forward_solve_is_affine() {
    let st = setup(24, 0.6, 6);
    let mut rng = seeded_rng(11);
    let n = st.mesh.n_dofs();
    let template = ControlField::for_mesh(&st.mesh, st.grid);
    let run = |u0: &[f64], f: &Trajectory, z: &ControlField| {
        solve_state_forward(&st.k, &st.m, &st.mesh, f, Some(z), u0, &st.grid, &STRICT).unwrap()
    };
    let (f1, f2) = (random_traj(st.grid, n, true, &mut rng), random_traj(st.grid, n, true, &mut rng));
    let (z1, z2) = (random_control(&template, &mut rng, -1.0, 1.0), random_control(&template, &mut rng, -1.0, 1.0));
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sum = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + q).collect::<Vec<f64>>();
    let f12 = Trajectory::per_step(st.grid, (1..=6).map(|k| sum(f1.at(k), f2.at(k))).collect()).unwrap();
    let u1 = run(&a, &f1, &z1);
    let u2 = run(&b, &f2, &z2);
    let u12 = run(&sum(&a, &b), &f12, &z1.add_scaled(1.0, &z2));
    for k in 0..=6 {
        for i in 0..n {
            assert!((u12.at(k)[i] - u1.at(k)[i] - u2.at(k)[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn averaged_loads() {
    let mesh = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let g = time_averaged_load(&mesh, &|_, x| x[0] * x[0], &grid, 4).unwrap();
    let reference = load_vector(&mesh, |x| x[0] * x[0], 4).unwrap();
    for k in 1..=4 {
        assert_eq!(g.at(k), &reference[..]);
    }
    let one = TimeGrid::new(0.5, 1).unwrap();
    let lin = time_averaged_load(&mesh, &|t, _| t, &one, 4).unwrap();
    let half = load_vector(&mesh, |_| 0.25, 4).unwrap();
    for (a, b) in lin.at(1).iter().zip(&half) {
        assert!((a - b).abs() < 1e-15);
    }
    let unit = TimeGrid::new(1.0, 1).unwrap();
    let quad = time_averaged_load(&mesh, &|t, _| t * t, &unit, 4).unwrap();
    let third = load_vector(&mesh, |_| 1.0 / 3.0, 4).unwrap();
    for (a, b) in quad.at(1).iter().zip(&third) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn dense_solve(a: &SparseSymMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.to_dense();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
        for j in 0..n {
            m.swap(c * n + j, p * n + j);
        }
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for j in c..n {
                m[r * n + j] -= f * m[c * n + j];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|j| m[c * n + j] * x[j]).sum();
        x[c] = (x[c] - s) / m[c * n + c];
    }
    x
}

#[test]
fn initial_projection() {
    let mesh = build_mesh(Domain::interval(-1.0, 1.0), 0.125, 1.0).unwrap();
    let m = mass_matrix(&mesh);
    let zero = l2_project_initial(&mesh, &m, &|_| 0.0, 5, &STRICT).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
    let u0 = |x: &[f64]| (1.0 - x[0] * x[0]).max(0.0).sqrt();
    let got = l2_project_initial(&mesh, &m, &u0, 5, &STRICT).unwrap();
    let want = dense_solve(&m, &load_vector(&mesh, u0, 5).unwrap());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn solver_failure_names_the_step() {
    let st = setup(32, 0.5, 4);
    let n = st.mesh.n_dofs();
    let f = Trajectory::per_step(st.grid, vec![vec![1.0; n]; 4]).unwrap();
    let opts = CgOptions { tol: 1e-14, max_iter: 1, ..CgOptions::default() };
    match solve_state_forward(&st.k, &st.m, &st.mesh, &f, None, &vec![0.0; n], &st.grid, &opts) {
        Err(Error::TimeStep { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected a time step failure, got {other:?}"),
    }
}

#[test]
fn energy_ratio_is_bounded_under_refinement() {
    let qc = QuadConfig::default();
    let mut rng = seeded_rng(42);
    let field = SmoothRandomField::new(&mut rng, 4);
    for s in [0.25, 0.75] {
        let mut ratios = Vec::new();
        for cells in [32usize, 64, 128] {
            let h = 2.0 / cells as f64;
            let mesh = build_mesh(Domain::interval(-1.0, 1.0), h, 1.0).unwrap();
            for steps in [1usize, cells / 2, 4 * cells] {
                let r = random_stability(s, &mesh, steps, &field, &qc).unwrap().ratio;
                assert!(r <= 1.0 + 1e-12, "s {s} cells {cells} steps {steps}: {r}");
                ratios.push(r);
            }
        }
        let first = ratios[0];
        assert!(ratios.iter().all(|&r| r <= 1.1 * first.max(1.0)), "{ratios:?}");
    }
}

#[test]
fn extremal_data_attain_the_energy_bound() {
    let qc = QuadConfig::default();
    let mut rng = seeded_rng(5);
    let field = SmoothRandomField::new(&mut rng, 3);
    for (cells, steps) in [(16usize, 1usize), (32, 3), (64, 40)] {
        let mesh = build_mesh(Domain::interval(-1.0, 1.0), 2.0 / cells as f64, 1.0).unwrap();
        let (random, extremal) = stability_ratios(0.4, &mesh, steps, &field, &qc).unwrap();
        assert!((extremal.ratio - 1.0).abs() < 1e-10, "{extremal:?}");
        assert!(random.ratio < extremal.ratio);
    }
}

#[test]
fn control_loads_integrate_piecewise_constants() {
    let mesh = build_mesh(Domain::disc(1.0), 0.5, 1.0).unwrap();
    let map = ControlMap::new(&mesh);
    let z = vec![1.0; mesh.n_cells()];
    let loads = map.apply(&z);
    let ones = load_vector(&mesh, |_| 1.0, 3).unwrap();
    for (a, b) in loads.iter().zip(&ones) {
        assert!((a - b).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn duality_identity_holds(seed in 0u64..10_000, s in 0.1f64..0.9, steps in 2usize..12) {
        let st = setup(20, s, steps);
        let mut rng = seeded_rng(seed);
        let n = st.mesh.n_dofs();
        let prop = Propagator::new(&st.k, &st.m, st.grid, STRICT);
        let map = ControlMap::new(&st.mesh);
        let z = random_control(&ControlField::for_mesh(&st.mesh, st.grid), &mut rng, -1.0, 1.0);
        let w = random_traj(st.grid, n, false, &mut rng);
        let d = random_traj(st.grid, n, true, &mut rng);
        let bz = map.loads(&z);
        let uz = prop.forward(&vec![0.0; n], None, Some(&bz)).unwrap();
        let p = prop.backward(&w, &d).unwrap();
        let tau = st.grid.tau();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let lhs: f64 = (0..steps).map(|k| tau * dot(bz.at(k + 1), p.at(k))).sum();
        let rhs: f64 = (0..steps)
            .map(|k| {
                let mw = st.m.matvec(w.at(k + 1));
                let src: Vec<f64> = mw.iter().zip(d.at(k + 1)).map(|(a, b)| a - b).collect();
                tau * dot(uz.at(k + 1), &src)
            })
            .sum();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn time_grid_nodes(t in 0.1f64..10.0, steps in 1usize..200) {
        let g = TimeGrid::new(t, steps).unwrap();
        prop_assert_eq!(g.t(0), 0.0);
        prop_assert_eq!(g.t(steps), t);
        prop_assert!((g.tau() * steps as f64 - t).abs() < 1e-12 * t);
    }
}
