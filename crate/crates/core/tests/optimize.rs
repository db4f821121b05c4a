use std::sync::Arc;

use fracctl::assembly::QuadConfig;
use fracctl::linalg::{CgOptions, Preconditioner};
use fracctl::mesh::{build_mesh, Domain, Mesh};
use fracctl::optimize::{
    box_project, optimality_residual, project_control, BfgsOptions, Bounds, ControlField, DiscreteProblem, ProblemSpec,
};
use fracctl::oracle::standard_problem_1d;
use fracctl::timestepping::{LoadRule, TimeGrid, Trajectory};
use fracctl::verify::{gradient_check, random_control, seeded_rng};
use proptest::prelude::*;

const STRICT: CgOptions = CgOptions { tol: 1e-13, max_iter: 20_000, preconditioner: Preconditioner::Jacobi };

fn interval(cells: usize) -> Mesh {
    build_mesh(Domain::interval(-1.0, 1.0), 2.0 / cells as f64, 1.0).unwrap()
}

fn spec_with(s: f64, mu: f64, bounds: Bounds, f: f64, u_d: f64, u0: f64) -> ProblemSpec {
    ProblemSpec {
        s,
        mu,
        bounds,
        t_final: 1.0,
        f: Arc::new(move |_, _| f),
        u_d: Arc::new(move |_, _| u_d),
        u0: Arc::new(move |_| u0),
        domain: Domain::interval(-1.0, 1.0),
        u_d_rule: LoadRule::Endpoint,
    }
}

fn manufactured(s: f64, cells: usize, steps: usize) -> DiscreteProblem {
    let (spec, _) = standard_problem_1d(s).unwrap();
    DiscreteProblem::assemble(&spec, &interval(cells), TimeGrid::new(1.0, steps).unwrap(), &QuadConfig::default(), STRICT)
        .unwrap()
}

#[test]
fn box_projection_examples() {
    assert_eq!(box_project(0.7, -0.5, 0.5), 0.5);
    assert_eq!(box_project(-0.7, -0.5, 0.5), -0.5);
    assert_eq!(box_project(0.2, -0.5, 0.5), 0.2);
    assert!(Bounds::new(1.0, 0.0).is_err());
    assert!(Bounds::new(f64::NAN, 0.0).is_err());
}

#[test]
fn projection_of_simple_functions() {
    let mesh = interval(8);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let c = project_control(&|_, _| 2.5, &mesh, &grid, 3).unwrap();
    assert!(c.values().iter().all(|&v| (v - 2.5).abs() < 1e-14));
    let h = 0.25;
    let lin = project_control(&|_, x| x[0], &mesh, &grid, 3).unwrap();
    let cell = (0..mesh.n_cells()).find(|&c| mesh.vertex(mesh.cell(c)[0])[0] == 0.0).unwrap();
    assert!((lin.get(2, cell) - h / 2.0).abs() < 1e-15);
}

#[test]
fn projection_is_orthogonal() {
    let mesh = build_mesh(Domain::disc(1.0), 0.4, 1.0).unwrap();
    let grid = TimeGrid::new(0.7, 3).unwrap();
    let w = |t: f64, x: &[f64]| x[0] * x[0] * t + x[1] - 2.0 * t * t;
    let pw = project_control(&w, &mesh, &grid, 4).unwrap();
    let mut rng = seeded_rng(5);
    let z = random_control(&pw, &mut rng, -1.0, 1.0);
    // (w, Z) by the same exact tensor rule, cell by cell
    let cells = fracctl::assembly::cell_quadrature(&mesh, 4).unwrap();
    let time = fracctl::quadrature::GaussRule::new(3).unwrap();
    let mut wz = 0.0;
    for k in 1..=3 {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        for (c, pts) in cells.iter().enumerate() {
            for p in pts {
                for (q, wq) in time.iter() {
                    wz += (t1 - t0) * wq * p.weight * w(t0 + (t1 - t0) * q, &p.x) * z.get(k, c);
                }
            }
        }
    }
    assert!((wz - pw.inner(&z)).abs() < 1e-10 * wz.abs().max(1.0));
}

#[test]
fn objective_with_zero_data() {
    let mesh = interval(16);
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let spec = spec_with(0.5, 0.1, Bounds::unbounded(), 0.0, 0.0, 0.0);
    let p = DiscreteProblem::assemble(&spec, &mesh, grid, &QuadConfig::default(), STRICT).unwrap();
    assert_eq!(p.objective(&p.zero_control()).unwrap(), 0.0);
    let c = 0.8;
    let z = p.zero_control().map(|_| c);
    let parts = p.objective_parts(&z).unwrap();
    assert!((parts.control - 0.5 * 0.1 * c * c * 2.0 * 1.0).abs() < 1e-10);
    let u = p.state(&z).unwrap();
    let tracking: f64 = (1..=8).map(|k| grid.tau() * p.mass().quadratic_form(u.at(k), u.at(k))).sum::<f64>() / 2.0;
    assert!((parts.tracking - tracking).abs() < 1e-12 * tracking);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = seeded_rng(9);
    for s in [0.25, 0.75] {
        let p = manufactured(s, 32, 16);
        for _ in 0..4 {
            let z = random_control(&p.zero_control(), &mut rng, -1.0, 1.0);
            let d = random_control(&p.zero_control(), &mut rng, -1.0, 1.0);
            let chk = gradient_check(&p, &z, &d, 1e-4).unwrap();
            assert!(chk.relative_error < 1e-6, "s {s}: {chk:?}");
        }
    }
}

#[test]
fn gradient_is_affine() {
    let p = manufactured(0.5, 24, 8);
    let mut rng = seeded_rng(21);
    let z1 = random_control(&p.zero_control(), &mut rng, -1.0, 1.0);
    let z2 = random_control(&p.zero_control(), &mut rng, -1.0, 1.0);
    let g = |z: &ControlField| p.gradient(z).unwrap();
    let combo = g(&z1.add_scaled(1.0, &z2)).add_scaled(-1.0, &g(&z1)).add_scaled(-1.0, &g(&z2)).add_scaled(1.0, &g(&p.zero_control()));
    assert!(combo.norm() < 1e-9, "{}", combo.norm());
}

#[test]
fn tracking_the_realized_state_leaves_only_the_control_term() {
    let mesh = interval(16);
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let base = spec_with(0.4, 0.3, Bounds::unbounded(), 1.0, 0.0, 0.0);
    let p0 = DiscreteProblem::assemble(&base, &mesh, grid, &QuadConfig::default(), STRICT).unwrap();
    let mut rng = seeded_rng(4);
    let z = random_control(&p0.zero_control(), &mut rng, -1.0, 1.0);
    let u: Trajectory = p0.state(&z).unwrap();
    let m2 = mesh.clone();
    let traj = u.clone();
    let tau = grid.tau();
    let mut spec = base.clone();
    spec.u_d = Arc::new(move |t, x| {
        let k = (t / tau).round() as usize;
        m2.evaluate(traj.at(k), x)
    });
    let p = DiscreteProblem::assemble(&spec, &mesh, grid, &QuadConfig::default(), STRICT).unwrap();
    let e = p.evaluate(&z).unwrap();
    assert!(e.objective.tracking.abs() < 1e-12, "{}", e.objective.tracking);
    let diff = e.gradient.add_scaled(-0.3, &z).norm();
    assert!(diff < 1e-10, "{diff}");
}

/// Solves `H z = -g0` by conjugate gradients in the `L²(Q)` inner product,
/// with `H v = ∇J(v) − ∇J(0)`.
fn kkt_oracle(p: &DiscreteProblem) -> ControlField {
    let zero = p.zero_control();
    let g0 = p.gradient(&zero).unwrap();
    let h = |v: &ControlField| p.gradient(v).unwrap().add_scaled(-1.0, &g0);
    let mut x = zero.clone();
    let mut r = g0.map(|v| -v);
    let mut d = r.clone();
    let mut rr = r.inner(&r);
    let r0 = rr.sqrt();
    for _ in 0..500 {
        if rr.sqrt() <= 1e-13 * r0 {
            break;
        }
        let hd = h(&d);
        let alpha = rr / d.inner(&hd);
        x = x.add_scaled(alpha, &d);
        r = r.add_scaled(-alpha, &hd);
        let rr_new = r.inner(&r);
        d = r.add_scaled(rr_new / rr, &d);
        rr = rr_new;
    }
    x
}

#[test]
fn unconstrained_solution_matches_kkt_system() {
    let (mut spec, _) = standard_problem_1d(0.5).unwrap();
    spec.bounds = Bounds::unbounded();
    let p = DiscreteProblem::assemble(&spec, &interval(16), TimeGrid::new(1.0, 8).unwrap(), &QuadConfig::default(), STRICT)
        .unwrap();
    let opts = BfgsOptions { tol: Some(1e-11), ..BfgsOptions::default() };
    let sol = p.solve(None, &opts).unwrap();
    assert!(sol.report.converged);
    let oracle = kkt_oracle(&p);
    let diff = sol.control.add_scaled(-1.0, &oracle).norm();
    assert!(diff < 1e-6 * (1.0 + oracle.norm()), "{diff}");
}

#[test]
fn saturated_box_returns_the_bound() {
    let spec = spec_with(0.5, 0.1, Bounds::new(-0.5, 0.5).unwrap(), 0.0, 1000.0, 0.0);
    let p = DiscreteProblem::assemble(&spec, &interval(16), TimeGrid::new(1.0, 8).unwrap(), &QuadConfig::default(), STRICT)
        .unwrap();
    let sol = p.solve(None, &BfgsOptions::default()).unwrap();
    assert!(sol.report.converged);
    assert!(sol.control.values().iter().all(|&v| v == 0.5), "{:?}", sol.control.values());
}

#[test]
fn two_starts_give_the_same_control() {
    let p = manufactured(0.5, 32, 16);
    let mut rng = seeded_rng(77);
    let opts = BfgsOptions::default();
    let a = p.solve(Some(&random_control(&p.zero_control(), &mut rng, -0.5, 0.5)), &opts).unwrap();
    let b = p.solve(Some(&random_control(&p.zero_control(), &mut rng, -0.5, 0.5)), &opts).unwrap();
    assert!(a.report.converged && b.report.converged);
    let diff = a.control.add_scaled(-1.0, &b.control).norm();
    assert!(diff <= 10.0 * a.report.tol.max(b.report.tol), "{diff}");
}

#[test]
fn solution_is_a_fixed_point_and_descent_is_monotone() {
    let p = manufactured(0.3, 32, 16);
    let opts = BfgsOptions::default();
    let sol = p.solve(None, &opts).unwrap();
    assert!(sol.report.converged);
    let e = p.evaluate(&sol.control).unwrap();
    let r = optimality_residual(&sol.control, &e.projected_adjoint, p.mu(), p.bounds());
    assert!(r <= sol.report.tol);
    assert!(sol.control.values().iter().all(|&v| p.bounds().contains(v)));
    for w in sol.report.history.windows(2) {
        assert!(w[1].0 <= w[0].0 + opts.objective_noise * (1.0 + w[0].0.abs()), "{:?}", w);
    }
    let fixed = e.projected_adjoint.map(|v| p.bounds().project(-v / p.mu()));
    assert_eq!(optimality_residual(&fixed, &e.projected_adjoint, p.mu(), p.bounds()), 0.0);
}

#[test]
fn exact_control_residual_vanishes_under_refinement() {
    let mut res = Vec::new();
    for cells in [16usize, 32, 64] {
        let (spec, exact) = standard_problem_1d(0.5).unwrap();
        let mesh = interval(cells);
        let grid = TimeGrid::new(1.0, cells / 2).unwrap();
        let p = DiscreteProblem::assemble(&spec, &mesh, grid, &QuadConfig::default(), STRICT).unwrap();
        let z = project_control(&|t, x| exact.z(t, x), &mesh, &grid, 5).unwrap();
        let e = p.evaluate(&z).unwrap();
        res.push(p.residual(&z, &e));
    }
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(vals in proptest::collection::vec(-3.0f64..3.0, 24), a in -1.0f64..0.0, w in 0.0f64..2.0) {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let measures: Arc<[f64]> = vec![0.25; 8].into();
        let z = ControlField::from_values(grid, measures, vals).unwrap();
        let b = Bounds::new(a, a + w).unwrap();
        let once = z.projected(&b);
        prop_assert_eq!(once.projected(&b), once.clone());
        prop_assert!(once.values().iter().all(|&v| b.contains(v)));
    }

    #[test]
    fn objective_dominates_control_cost(seed in 0u64..500) {
        let p = manufactured(0.5, 8, 4);
        let mut rng = seeded_rng(seed);
        let z = random_control(&p.zero_control(), &mut rng, -2.0, 2.0);
        let j = p.objective(&z).unwrap();
        prop_assert!(j >= 0.5 * p.mu() * z.inner(&z) - 1e-14);
    }
}
