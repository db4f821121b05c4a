//! Numerical self-checks: gradient consistency, discrete duality and energy stability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{fractional_stiffness, KernelParams, QuadConfig};
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, dot, CgOptions, Preconditioner, SparseSymMatrix};
use crate::mesh::{build_mesh, disc_from_rings, Domain, Mesh};
use crate::optimize::{ControlField, DiscreteProblem};
use crate::oracle::standard_problem_1d;
use crate::reference::reference_stiffness;
use crate::timestepping::{space_time_load, LoadRule, Propagator, TimeGrid, Trajectory};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Control with independent uniform values in `[lo, hi]`.
pub fn random_control(template: &ControlField, rng: &mut impl Rng, lo: f64, hi: f64) -> ControlField {
    let mut z = template.clone();
    for v in z.values_mut() {
        *v = rng.gen_range(lo..=hi);
    }
    z
}

/// Smooth random function `Σ a_j sin(ω_j·x + β_j t + c_j)`.
#[derive(Debug, Clone)]
pub struct SmoothRandomField {
    terms: Vec<([f64; 2], f64, f64, f64)>,
}

impl SmoothRandomField {
    pub fn new(rng: &mut impl Rng, terms: usize) -> Self {
        let terms = (0..terms)
            .map(|j| {
                let scale = 1.0 + j as f64;
                let omega = [rng.gen_range(-3.0..3.0) * scale, rng.gen_range(-3.0..3.0) * scale];
                (omega, rng.gen_range(-4.0..4.0), rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0) / scale)
            })
            .collect();
        SmoothRandomField { terms }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(w, b, c, a)| {
                let phase = w[0] * x[0] + x.get(1).map_or(0.0, |y| w[1] * y) + b * t + c;
                a * phase.sin()
            })
            .sum()
    }
}

/// Directional derivative by central differences against `(∇J, d)_{L²(Q)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub finite_difference: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

/// The reduced objective is quadratic, so central differences carry no truncation error.
pub fn gradient_check(problem: &DiscreteProblem, z: &ControlField, dir: &ControlField, eps: f64) -> Result<GradientCheck> {
    let jp = problem.objective(&z.add_scaled(eps, dir))?;
    let jm = problem.objective(&z.add_scaled(-eps, dir))?;
    let fd = (jp - jm) / (2.0 * eps);
    let analytic = problem.gradient(z)?.inner(dir);
    let relative_error = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(f64::MIN_POSITIVE);
    Ok(GradientCheck { finite_difference: fd, analytic, relative_error })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    /// `Σ_k τ (B Z^{k+1})ᵀ P^k`
    pub control_side: f64,
    /// `Σ_k τ (U_Z^{k+1})ᵀ (M W^{k+1} − D^{k+1})`
    pub state_side: f64,
    pub relative_error: f64,
}

/// Summation by parts between the control-to-state map and the adjoint.
///
/// `U_Z` solves the state equation with zero data and control `z`; `P` solves the
/// adjoint equation driven by an arbitrary trajectory `w` and loads `d`.
pub fn duality_check(problem: &DiscreteProblem, z: &ControlField, w: &Trajectory, d: &Trajectory) -> Result<DualityCheck> {
    let prop = problem.propagator();
    let grid = *problem.grid();
    let tau = grid.tau();
    let bz = problem.control_map().loads(z);
    let n = problem.mass().dim();
    let uz = prop.forward(&vec![0.0; n], None, Some(&bz))?;
    let p = prop.backward(w, d)?;
    let mut control_side = 0.0;
    let mut state_side = 0.0;
    for k in 0..grid.steps() {
        control_side += tau * dot(bz.at(k + 1), p.at(k));
        let mw = problem.mass().matvec(w.at(k + 1));
        let src: Vec<f64> = mw.iter().zip(d.at(k + 1)).map(|(a, b)| a - b).collect();
        state_side += tau * dot(uz.at(k + 1), &src);
    }
    let relative_error =
        (control_side - state_side).abs() / control_side.abs().max(state_side.abs()).max(f64::MIN_POSITIVE);
    Ok(DualityCheck { control_side, state_side, relative_error })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    /// `max_m (|U^m|² + Σ_{k≤m} τ|U^k|²_K) / (|U^0|² + Σ_k τ Fᵏᵀ K⁻¹ Fᵏ)`
    pub ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Discrete energy estimate of backward Euler; the ratio never exceeds one.
pub fn stability_check(
    stiffness: &SparseSymMatrix,
    prop: &Propagator,
    u0: &[f64],
    f: &Trajectory,
    opts: &CgOptions,
) -> Result<StabilityCheck> {
    let u = prop.forward(u0, Some(f), None)?;
    let grid = *prop.grid();
    let tau = grid.tau();
    let m = prop.mass();
    let mut rhs = m.quadratic_form(u0, u0);
    for k in 1..=grid.steps() {
        let fk = f.at(k);
        if fk.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (x, rep) = cg_solve(stiffness, fk, None, opts)?;
        if !rep.converged {
            return Err(Error::Solver(crate::error::SolveError::NotConverged {
                iterations: rep.iterations,
                residual: rep.relative_residual,
            }));
        }
        rhs += tau * dot(fk, &x);
    }
    let (mut dissipated, mut worst) = (0.0, 0.0f64);
    for k in 1..=grid.steps() {
        let uk = u.at(k);
        dissipated += tau * stiffness.quadratic_form(uk, uk);
        worst = worst.max(m.quadratic_form(uk, uk) + dissipated);
    }
    if !(rhs > 0.0) {
        return Err(Error::param("data", "stability check needs nonzero data"));
    }
    Ok(StabilityCheck { ratio: worst / rhs, lhs: worst, rhs })
}

/// Largest entrywise relative deviation of the assembled stiffness from the oracle.
pub fn oracle_deviation(mesh: &Mesh, s: f64, qc: &QuadConfig, tol: f64) -> Result<f64> {
    let kp = KernelParams::new(mesh.dim(), s)?;
    let k = fractional_stiffness(mesh, &kp, qc)?.to_dense();
    let r = reference_stiffness(mesh, &kp, tol)?;
    Ok(k.iter().zip(&r).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max))
}

/// Small meshes used for oracle comparisons: 8 cells on `(−1,1)`, 16 cells on the disc.
pub fn oracle_meshes() -> Result<(Mesh, Mesh)> {
    let line = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0)?;
    let disc = disc_from_rings([0.0, 0.0], &[0.5, 1.0], &[4, 8], 1.0, 0.5)?;
    Ok((line, disc))
}

pub const STRICT_CG: CgOptions = CgOptions { tol: 1e-13, max_iter: 20_000, preconditioner: Preconditioner::Jacobi };

/// Manufactured one-dimensional control problem on `cells` cells and `steps` time steps.
pub fn small_problem(s: f64, cells: usize, steps: usize, qc: &QuadConfig) -> Result<DiscreteProblem> {
    let (spec, _) = standard_problem_1d(s)?;
    let mesh = build_mesh(Domain::interval(-1.0, 1.0), 2.0 / cells as f64, 1.0)?;
    DiscreteProblem::assemble(&spec, &mesh, TimeGrid::new(1.0, steps)?, qc, STRICT_CG)
}

/// Worst relative error of `pairs` random gradient checks.
pub fn worst_gradient_error(problem: &DiscreteProblem, pairs: usize, eps: f64, rng: &mut impl Rng) -> Result<f64> {
    let template = problem.zero_control();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let z = random_control(&template, rng, -1.0, 1.0);
        let d = random_control(&template, rng, -1.0, 1.0);
        worst = worst.max(gradient_check(problem, &z, &d, eps)?.relative_error);
    }
    Ok(worst)
}

/// Duality check with random control, trajectory and loads.
pub fn random_duality(problem: &DiscreteProblem, rng: &mut impl Rng) -> Result<DualityCheck> {
    let grid = *problem.grid();
    let n = problem.mass().dim();
    let z = random_control(&problem.zero_control(), rng, -1.0, 1.0);
    let mut sample = |len: usize| (0..len).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let w = Trajectory::nodal(grid, sample(grid.steps() + 1))?;
    let d = Trajectory::per_step(grid, sample(grid.steps()))?;
    duality_check(problem, &z, &w, &d)
}

/// Energy ratio for smooth random data on a mesh of size `h` with `steps` time steps.
pub fn random_stability(
    s: f64,
    mesh: &Mesh,
    steps: usize,
    field: &SmoothRandomField,
    qc: &QuadConfig,
) -> Result<StabilityCheck> {
    Ok(stability_ratios(s, mesh, steps, field, qc)?.0)
}

/// Energy ratios for smooth random data and for the extremal data `F^k = K U^0`,
/// for which backward Euler keeps `U^k = U^0` and the estimate holds with equality.
pub fn stability_ratios(
    s: f64,
    mesh: &Mesh,
    steps: usize,
    field: &SmoothRandomField,
    qc: &QuadConfig,
) -> Result<(StabilityCheck, StabilityCheck)> {
    let kp = KernelParams::new(mesh.dim(), s)?;
    let k = fractional_stiffness(mesh, &kp, qc)?;
    let m = crate::assembly::mass_matrix(mesh);
    let grid = TimeGrid::new(1.0, steps)?;
    let f = space_time_load(mesh, &|t, x| field.eval(t, x), &grid, LoadRule::Endpoint, qc.gauss_order_load)?;
    let u0 = crate::timestepping::l2_project_initial(mesh, &m, &|x| field.eval(0.0, x), qc.gauss_order_load, &STRICT_CG)?;
    let prop = Propagator::new(&k, &m, grid, STRICT_CG);
    let random = stability_check(&k, &prop, &u0, &f, &STRICT_CG)?;
    let ku0 = k.matvec(&u0);
    let steady = Trajectory::per_step(grid, vec![ku0; steps])?;
    let extremal = stability_check(&k, &prop, &u0, &steady, &STRICT_CG)?;
    Ok((random, extremal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn bound(name: impl Into<String>, value: f64, limit: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: value <= limit,
            detail: format!("{value:.3e} (limit {limit:.0e})"),
        }
    }
}

/// Oracle equivalence, gradient, duality and stability checks at small sizes.
pub fn run_check_suite(seed: u64, qc: &QuadConfig) -> Result<Vec<CheckOutcome>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    let (line, disc) = oracle_meshes()?;
    for s in [0.25, 0.5, 0.75] {
        out.push(CheckOutcome::bound(format!("oracle 1D s={s}"), oracle_deviation(&line, s, qc, 1e-10)?, 1e-4));
    }
    out.push(CheckOutcome::bound("oracle 2D s=0.5", oracle_deviation(&disc, 0.5, qc, 1e-6)?, 1e-3));
    for s in [0.25, 0.75] {
        let p = small_problem(s, 64, 32, qc)?;
        out.push(CheckOutcome::bound(format!("gradient s={s}"), worst_gradient_error(&p, 10, 1e-4, &mut rng)?, 1e-6));
    }
    let p = small_problem(0.5, 32, 16, qc)?;
    out.push(CheckOutcome::bound("duality", random_duality(&p, &mut rng)?.relative_error, 1e-8));
    let field = SmoothRandomField::new(&mut rng, 4);
    let mesh = build_mesh(Domain::interval(-1.0, 1.0), 1.0 / 16.0, 1.0)?;
    let ratio = random_stability(0.5, &mesh, 2, &field, qc)?.ratio;
    out.push(CheckOutcome::bound("energy stability", ratio, 1.0 + 1e-10));
    Ok(out)
}
