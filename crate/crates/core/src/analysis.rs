//! Space-time error norms, experimental orders of convergence and convergence studies.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::assembly::cell_quadrature;
use crate::config::{ProblemKind, StudyConfig};
use crate::error::{Error, Result};
use crate::linalg::{CgOptions, Preconditioner};
use crate::mesh::{build_mesh, Domain, Mesh};
use crate::optimize::{BfgsOptions, Bounds, ControlField, ControlSolution, DiscreteProblem, ProblemSpec};
use crate::oracle::{build_manufactured, problem_two_spec, ExactPair, ExactTriple, TimeProfile};
use crate::quadrature::GaussRule;
use crate::timestepping::{TimeGrid, Trajectory};

/// Slack subtracted from the limiting regularity exponents.
pub const EPSILON: f64 = 0.01;

/// Time step exponent `γ = min(1, s + 1/2 − ε)`, used as `τ = h^γ`.
pub fn gamma_exponent(s: f64) -> f64 {
    (s + 0.5 - EPSILON).min(1.0)
}

/// `ϑ = min(s, 1/2 − ε)`.
pub fn theta_exponent(s: f64) -> f64 {
    s.min(0.5 - EPSILON)
}

/// Predicted `L²(Q)` rate of the control error.
pub fn predicted_control_rate(s: f64) -> f64 {
    gamma_exponent(s)
}

/// Predicted `L²(Q)` rate of the state error.
pub fn predicted_state_rate(s: f64) -> f64 {
    theta_exponent(s) + 0.5
}

const TIME_POINTS: usize = 4;

fn combine(norm_sq: f64, quad: f64, cross: f64) -> f64 {
    (norm_sq + quad - 2.0 * cross).max(0.0).sqrt()
}

/// `‖w − W‖_{L²(Q)}` where `W` takes the value `W^k` on `(t_{k−1}, t_k]`.
///
/// `w_norm_sq` is `∫∫ w²`; the remaining terms use Gauss rules in space and time.
/// Node-indexed trajectories use entries `1..=K`; entry `0` is ignored.
pub fn l2q_error_nodal(
    w: &dyn Fn(f64, &[f64]) -> f64,
    w_norm_sq: f64,
    u: &Trajectory,
    mesh: &Mesh,
    order: usize,
) -> Result<f64> {
    if u.dim() != mesh.n_dofs() {
        return Err(Error::Shape(format!("trajectory has {} dofs, mesh has {}", u.dim(), mesh.n_dofs())));
    }
    let cells = cell_quadrature(mesh, order)?;
    let time = GaussRule::new(TIME_POINTS)?;
    let grid = u.grid();
    let dim = mesh.dim();
    let (mut quad, mut cross) = (0.0, 0.0);
    for k in 1..=grid.steps() {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let tau = t1 - t0;
        let uk = u.at(k);
        for (c, pts) in cells.iter().enumerate() {
            let dofs: Vec<f64> = mesh.cell(c).iter().map(|&v| mesh.dof(v).map_or(0.0, |d| uk[d])).collect();
            for p in pts {
                let val: f64 = dofs.iter().zip(&p.lambda).map(|(a, l)| a * l).sum();
                if val == 0.0 {
                    continue;
                }
                quad += tau * p.weight * val * val;
                let wt: f64 = time.iter().map(|(q, wq)| wq * w(t0 + tau * q, &p.x[..dim])).sum();
                cross += tau * p.weight * val * wt;
            }
        }
    }
    Ok(combine(w_norm_sq, quad, cross))
}

/// `‖w − Z‖_{L²(Q)}` for a piecewise constant control.
pub fn l2q_error_control(
    w: &dyn Fn(f64, &[f64]) -> f64,
    w_norm_sq: f64,
    z: &ControlField,
    mesh: &Mesh,
    order: usize,
) -> Result<f64> {
    if z.n_cells() != mesh.n_cells() {
        return Err(Error::Shape(format!("control has {} cells, mesh has {}", z.n_cells(), mesh.n_cells())));
    }
    let cells = cell_quadrature(mesh, order)?;
    let time = GaussRule::new(TIME_POINTS)?;
    let grid = z.grid();
    let dim = mesh.dim();
    let (mut quad, mut cross) = (0.0, 0.0);
    for k in 1..=grid.steps() {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let tau = t1 - t0;
        for (c, pts) in cells.iter().enumerate() {
            let zc = z.get(k, c);
            if zc == 0.0 {
                continue;
            }
            let mut integral = 0.0;
            for p in pts {
                let wt: f64 = time.iter().map(|(q, wq)| wq * w(t0 + tau * q, &p.x[..dim])).sum();
                integral += p.weight * wt;
            }
            quad += tau * mesh.cell_measure(c) * zc * zc;
            cross += tau * zc * integral;
        }
    }
    Ok(combine(w_norm_sq, quad, cross))
}

/// Experimental order between two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eoc {
    Rate(f64),
    /// One of the errors vanished, so no rate is defined.
    BelowTolerance,
}

impl Eoc {
    pub fn rate(&self) -> Option<f64> {
        match self {
            Eoc::Rate(r) => Some(*r),
            Eoc::BelowTolerance => None,
        }
    }
}

impl fmt::Display for Eoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eoc::Rate(r) => write!(f, "{r:.4}"),
            Eoc::BelowTolerance => f.write_str("converged"),
        }
    }
}

/// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` for consecutive pairs.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<Eoc>> {
    if errors.len() != hs.len() {
        return Err(Error::Shape("errors and mesh sizes differ in length".into()));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) || hs.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::param("hs", "mesh sizes must be positive and strictly decreasing"));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] > 0.0 && e[1] > 0.0 {
                Eoc::Rate((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            } else {
                Eoc::BelowTolerance
            }
        })
        .collect())
}

/// Result of one level of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub s: f64,
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub n_dofs: usize,
    pub err_state_l2q: Option<f64>,
    pub err_state_energy: Option<f64>,
    pub err_control_l2q: Option<f64>,
    pub eoc_state: Option<Eoc>,
    pub eoc_control: Option<Eoc>,
    /// Optimality residual relative to `1 + ‖Z‖`.
    pub relative_residual: f64,
    pub optimizer_converged: bool,
    pub walltime_s: f64,
    pub failure: Option<String>,
}

impl ConvergenceRecord {
    fn failed(s: f64, level: usize, h: f64, msg: String) -> Self {
        ConvergenceRecord {
            s,
            level,
            h,
            tau: f64::NAN,
            n_dofs: 0,
            err_state_l2q: None,
            err_state_energy: None,
            err_control_l2q: None,
            eoc_state: None,
            eoc_control: None,
            relative_residual: f64::NAN,
            optimizer_converged: false,
            walltime_s: 0.0,
            failure: Some(msg),
        }
    }
}

/// All records of a study, ordered by `s` then level.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub records: Vec<ConvergenceRecord>,
}

impl StudyResult {
    pub fn for_s(&self, s: f64) -> impl Iterator<Item = &ConvergenceRecord> {
        self.records.iter().filter(move |r| r.s == s)
    }

    /// Rate on the finest successful pair for the given `s`.
    pub fn finest_eoc(&self, s: f64, control: bool) -> Option<Eoc> {
        self.for_s(s).filter_map(|r| if control { r.eoc_control } else { r.eoc_state }).last()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let rate = |v: Option<Eoc>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from(
            "s,level,h,tau,ndofs,err_state_l2q,err_state_energy,err_control_l2q,eoc_state,eoc_control,walltime_s\n",
        );
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:e},{:e},{},{},{},{},{},{},{:.3}\n",
                r.s,
                r.level,
                r.h,
                r.tau,
                r.n_dofs,
                opt(r.err_state_l2q),
                opt(r.err_state_energy),
                opt(r.err_control_l2q),
                rate(r.eoc_state),
                rate(r.eoc_control),
                r.walltime_s
            ));
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// One `x y` file per curve: `h` against each error, per `s`.
    pub fn write_plot_files(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut seen: Vec<f64> = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.s) {
                seen.push(r.s);
            }
        }
        type Getter = fn(&ConvergenceRecord) -> Option<f64>;
        let curves: [(&str, Getter); 3] = [
            ("state_l2q", |r| r.err_state_l2q),
            ("state_energy", |r| r.err_state_energy),
            ("control_l2q", |r| r.err_control_l2q),
        ];
        for s in seen {
            for (name, get) in curves {
                let pts: Vec<(f64, f64)> = self.for_s(s).filter_map(|r| get(r).map(|e| (r.h, e))).collect();
                if pts.is_empty() {
                    continue;
                }
                let path = dir.join(format!("{name}_s{s}.dat"));
                let body: String = pts.iter().map(|(h, e)| format!("{h:e} {e:e}\n")).collect();
                std::fs::write(&path, body)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mut seen: Vec<f64> = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.s) {
                seen.push(r.s);
            }
        }
        for s in seen {
            let show = |e: Option<Eoc>| e.map_or("n/a".to_string(), |e| e.to_string());
            out.push_str(&format!(
                "s = {s}: finest EOC state {} (predicted {:.2}), control {} (predicted {:.2})\n",
                show(self.finest_eoc(s, false)),
                predicted_state_rate(s),
                show(self.finest_eoc(s, true)),
                predicted_control_rate(s)
            ));
        }
        for r in self.records.iter().filter(|r| r.failure.is_some()) {
            out.push_str(&format!("s = {}, level {}: failed: {}\n", r.s, r.level, r.failure.as_deref().unwrap_or("")));
        }
        out
    }
}

/// Problem data for a configured problem, with the exact solution when one exists.
pub fn problem_for(cfg: &StudyConfig, s: f64) -> Result<(ProblemSpec, Option<ExactTriple>)> {
    let bounds = Bounds::new(cfg.a, cfg.b)?;
    let profile = || TimeProfile::trigonometric(cfg.t_final);
    let (mut spec, exact) = match cfg.problem {
        ProblemKind::Manufactured1d => {
            let p = ExactPair::one_d(0, 0, s)?;
            let (spec, t) = build_manufactured(s, cfg.mu, bounds, cfg.t_final, p, p, profile()?)?;
            (spec, Some(t))
        }
        ProblemKind::Manufactured2dI => {
            let u = ExactPair::two_d(0, 1, s)?;
            let v = ExactPair::two_d(0, 0, s)?;
            let (spec, t) = build_manufactured(s, cfg.mu, bounds, cfg.t_final, u, v, profile()?)?;
            (spec, Some(t))
        }
        ProblemKind::Problem2dII => (problem_two_spec(s, cfg.mu, bounds, cfg.t_final)?, None),
    };
    spec.u_d_rule = cfg.ud_rule;
    Ok((spec, exact))
}

/// Mesh of a configured level.
pub fn mesh_for(cfg: &StudyConfig, level: usize) -> Result<Mesh> {
    let domain = match cfg.dimension {
        1 => Domain::interval(-1.0, 1.0),
        _ => Domain::disc(1.0),
    };
    build_mesh(domain, cfg.level_h(level), cfg.kappa)
}

/// Time grid of a configured level: `cfg.steps` if set, else `τ ≤ h^γ`.
pub fn grid_for(cfg: &StudyConfig, s: f64, h: f64) -> Result<TimeGrid> {
    match cfg.steps {
        Some(k) => TimeGrid::new(cfg.t_final, k),
        None => TimeGrid::with_max_step(cfg.t_final, h.powf(gamma_exponent(s))),
    }
}

pub fn cg_options(cfg: &StudyConfig) -> CgOptions {
    CgOptions { tol: cfg.cg_tol, max_iter: cfg.cg_max_iter, preconditioner: Preconditioner::Jacobi }
}

pub fn bfgs_options(cfg: &StudyConfig) -> BfgsOptions {
    BfgsOptions { tol: cfg.opt_tol, max_iter: cfg.opt_max_iter, ..BfgsOptions::default() }
}

/// Discrete problem and its optimal control on one level.
#[derive(Debug, Clone)]
pub struct LevelRun {
    pub level: usize,
    pub h: f64,
    pub mesh: Mesh,
    pub problem: DiscreteProblem,
    pub solution: ControlSolution,
    pub walltime_s: f64,
}

/// Assembles and solves the control problem on one level.
pub fn solve_level(cfg: &StudyConfig, spec: &ProblemSpec, s: f64, level: usize) -> Result<LevelRun> {
    let start = Instant::now();
    let h = cfg.level_h(level);
    let mesh = mesh_for(cfg, level)?;
    let grid = grid_for(cfg, s, h)?;
    let problem = DiscreteProblem::assemble(spec, &mesh, grid, &cfg.quad, cg_options(cfg))?;
    let solution = problem.solve(None, &bfgs_options(cfg))?;
    Ok(LevelRun { level, h, mesh, problem, solution, walltime_s: start.elapsed().as_secs_f64() })
}

/// Coarse nodal trajectory evaluated on a fine mesh and time grid.
///
/// Spatially the coarse finite element function is evaluated at the fine vertices
/// (zero outside the coarse mesh); in time, fine step `k` takes the coarse value
/// of the step containing the midpoint of `(t_{k−1}, t_k]`.
pub fn transfer_nodal(coarse: &Trajectory, coarse_mesh: &Mesh, fine_mesh: &Mesh, fine_grid: &TimeGrid) -> Result<Trajectory> {
    let cg = coarse.grid();
    let spatial: Vec<Vec<f64>> = (0..=cg.steps())
        .map(|k| {
            (0..fine_mesh.n_dofs())
                .map(|d| coarse_mesh.evaluate(coarse.at(k.max(coarse.first_index())), fine_mesh.vertex(fine_mesh.dof_vertex(d))))
                .collect()
        })
        .collect();
    let data = (0..=fine_grid.steps())
        .map(|k| {
            let j = if k == 0 { 0 } else { coarse_step(cg, 0.5 * (fine_grid.t(k - 1) + fine_grid.t(k))) };
            spatial[j].clone()
        })
        .collect();
    Trajectory::nodal(*fine_grid, data)
}

fn coarse_step(grid: &TimeGrid, t: f64) -> usize {
    ((t / grid.tau()).ceil() as usize).clamp(1, grid.steps())
}

/// Coarse control sampled at the fine cell centroids and step midpoints.
pub fn transfer_control(coarse: &ControlField, coarse_mesh: &Mesh, fine_mesh: &Mesh, fine_grid: &TimeGrid) -> ControlField {
    let centroids: Vec<[f64; 2]> = (0..coarse_mesh.n_cells()).map(|c| coarse_mesh.cell_centroid(c)).collect();
    let owner: Vec<usize> = (0..fine_mesh.n_cells())
        .map(|c| {
            let x = fine_mesh.cell_centroid(c);
            coarse_mesh.locate(&x[..fine_mesh.dim()]).map(|(cc, _)| cc).unwrap_or_else(|| {
                let d = |p: &[f64; 2]| (p[0] - x[0]).hypot(p[1] - x[1]);
                (0..centroids.len()).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap_or(0)
            })
        })
        .collect();
    let mut out = ControlField::for_mesh(fine_mesh, *fine_grid);
    for k in 1..=fine_grid.steps() {
        let j = coarse_step(coarse.grid(), 0.5 * (fine_grid.t(k - 1) + fine_grid.t(k)));
        let src = coarse.step(j).to_vec();
        for (v, &o) in out.step_mut(k).iter_mut().zip(&owner) {
            *v = src[o];
        }
    }
    out
}

/// `(‖e‖_{L²(Q)}, ‖e‖_{L²(H^s)})` of a coarse state measured against a fine one.
pub fn discrete_state_errors(coarse: &LevelRun, fine: &LevelRun) -> Result<(f64, f64)> {
    let fg = *fine.problem.grid();
    let moved = transfer_nodal(&coarse.solution.state, &coarse.mesh, &fine.mesh, &fg)?;
    let (mut l2, mut energy) = (0.0, 0.0);
    for k in 1..=fg.steps() {
        let e: Vec<f64> = moved.at(k).iter().zip(fine.solution.state.at(k)).map(|(a, b)| a - b).collect();
        l2 += fg.tau() * fine.problem.mass().quadratic_form(&e, &e);
        energy += fg.tau() * fine.problem.stiffness().quadratic_form(&e, &e);
    }
    Ok((l2.max(0.0).sqrt(), energy.max(0.0).sqrt()))
}

pub fn discrete_control_error(coarse: &LevelRun, fine: &LevelRun) -> f64 {
    let moved = transfer_control(&coarse.solution.control, &coarse.mesh, &fine.mesh, fine.problem.grid());
    moved.add_scaled(-1.0, &fine.solution.control).norm()
}

/// Exact errors of a level run against the manufactured solution.
pub fn exact_errors(run: &LevelRun, exact: &ExactTriple, norms: (f64, f64), order: usize) -> Result<(f64, f64)> {
    let es = l2q_error_nodal(&|t, x| exact.u(t, x), norms.0, &run.solution.state, &run.mesh, order)?;
    let ec = l2q_error_control(&|t, x| exact.z(t, x), norms.1, &run.solution.control, &run.mesh, order)?;
    Ok((es, ec))
}

/// Spatial quadrature order for error integrals.
pub const ERROR_QUAD_ORDER: usize = 6;

/// Runs every `(s, level)` of the configuration. Failed levels are recorded and skipped.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &s in &cfg.s_values {
        records.extend(study_for_s(cfg, s)?);
    }
    Ok(StudyResult { records })
}

fn study_for_s(cfg: &StudyConfig, s: f64) -> Result<Vec<ConvergenceRecord>> {
    let (spec, exact) = problem_for(cfg, s)?;
    let norms = exact.as_ref().map(|e| (e.state_norm_sq(), e.control_norm_sq()));
    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    let mut runs: Vec<Option<LevelRun>> = Vec::new();
    let mut records = Vec::new();
    for &level in &levels {
        let h = cfg.level_h(level);
        match solve_level(cfg, &spec, s, level) {
            Ok(run) => {
                let z_norm = run.solution.control.norm();
                let mut rec = ConvergenceRecord {
                    s,
                    level,
                    h,
                    tau: run.problem.grid().tau(),
                    n_dofs: run.mesh.n_dofs(),
                    err_state_l2q: None,
                    err_state_energy: None,
                    err_control_l2q: None,
                    eoc_state: None,
                    eoc_control: None,
                    relative_residual: run.solution.report.residual / (1.0 + z_norm),
                    optimizer_converged: run.solution.report.converged,
                    walltime_s: run.walltime_s,
                    failure: None,
                };
                if let (Some(ex), Some(nm)) = (&exact, norms) {
                    match exact_errors(&run, ex, nm, ERROR_QUAD_ORDER) {
                        Ok((es, ec)) => {
                            rec.err_state_l2q = Some(es);
                            rec.err_control_l2q = Some(ec);
                        }
                        Err(e) => rec.failure = Some(format!("error evaluation: {e}")),
                    }
                }
                records.push(rec);
                runs.push(Some(run));
            }
            Err(e) => {
                records.push(ConvergenceRecord::failed(s, level, h, e.to_string()));
                runs.push(None);
            }
        }
    }
    // comparisons against the finest successful level
    if let Some(fi) = runs.iter().rposition(Option::is_some) {
        let fine = runs[fi].as_ref().expect("present");
        for i in 0..fi {
            let Some(coarse) = runs[i].as_ref() else { continue };
            match discrete_state_errors(coarse, fine) {
                Ok((l2, energy)) => {
                    records[i].err_state_energy = Some(energy);
                    if exact.is_none() {
                        records[i].err_state_l2q = Some(l2);
                        records[i].err_control_l2q = Some(discrete_control_error(coarse, fine));
                    }
                }
                Err(e) => records[i].failure = Some(format!("transfer: {e}")),
            }
        }
    }
    fill_eoc(&mut records);
    Ok(records)
}

fn fill_eoc(records: &mut [ConvergenceRecord]) {
    let mut prev: Option<usize> = None;
    for i in 0..records.len() {
        if records[i].failure.is_some() {
            continue;
        }
        if let Some(p) = prev {
            let hs = [records[p].h, records[i].h];
            let pair = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => eoc(&[a, b], &hs).ok().map(|v| v[0]),
                _ => None,
            };
            records[i].eoc_state = pair(records[p].err_state_l2q, records[i].err_state_l2q);
            records[i].eoc_control = pair(records[p].err_control_l2q, records[i].err_control_l2q);
        }
        prev = Some(i);
    }
}

/// Temporal self-convergence on a fixed mesh.
///
/// For consecutive entries of `steps`, returns `(τ_i, ‖U_i − U_{i+1}‖_{L²(Q)})`, with
/// both states compared on the finer time grid. `steps` must be increasing.
pub fn run_temporal_study(cfg: &StudyConfig, s: f64, level: usize, steps: &[usize]) -> Result<Vec<(f64, f64)>> {
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("steps", "step counts must increase"));
    }
    let (spec, _) = problem_for(cfg, s)?;
    let mesh = mesh_for(cfg, level)?;
    let kp = crate::assembly::KernelParams::new(mesh.dim(), s)?;
    let k = crate::assembly::fractional_stiffness(&mesh, &kp, &cfg.quad)?;
    let m = crate::assembly::mass_matrix(&mesh);
    let solve = |n: usize| -> Result<Trajectory> {
        let grid = TimeGrid::new(cfg.t_final, n)?;
        let p = DiscreteProblem::with_matrices(
            &spec,
            &mesh,
            grid,
            k.clone(),
            m.clone(),
            cfg.quad.gauss_order_load,
            cg_options(cfg),
        )?;
        Ok(p.solve(None, &bfgs_options(cfg))?.state)
    };
    let states = steps.iter().map(|&n| solve(n)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, pair) in states.windows(2).enumerate() {
        let fine = &pair[1];
        let fg = *fine.grid();
        let moved = transfer_nodal(&pair[0], &mesh, &mesh, &fg)?;
        let mut err = 0.0;
        for kk in 1..=fg.steps() {
            let e: Vec<f64> = moved.at(kk).iter().zip(fine.at(kk)).map(|(a, b)| a - b).collect();
            err += fg.tau() * m.quadratic_form(&e, &e);
        }
        out.push((cfg.t_final / steps[i] as f64, err.max(0.0).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_examples() {
        let r = eoc(&[0.1, 0.025], &[0.1, 0.05]).unwrap();
        assert!((r[0].rate().unwrap() - 2.0).abs() < 1e-14);
        let r = eoc(&[0.1, 0.1], &[0.1, 0.05]).unwrap();
        assert_eq!(r[0].rate().unwrap(), 0.0);
        let r = eoc(&[0.1, 0.1 / 2f64.sqrt()], &[0.1, 0.05]).unwrap();
        assert!((r[0].rate().unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(eoc(&[0.1, 0.0], &[0.1, 0.05]).unwrap()[0], Eoc::BelowTolerance);
        assert!(eoc(&[0.1, 0.2], &[0.1, 0.2]).is_err());
        assert!(eoc(&[0.1], &[0.1]).unwrap().is_empty());
    }

    #[test]
    fn l2q_of_constants() {
        let mesh = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let zero = Trajectory::nodal(grid, vec![vec![0.0; mesh.n_dofs()]; 5]).unwrap();
        let e = l2q_error_nodal(&|_, _| 1.0, 2.0, &zero, &mesh, 4).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
        let z = ControlField::for_mesh(&mesh, grid).map(|_| 1.0);
        let e = l2q_error_control(&|_, _| 1.0, 2.0, &z, &mesh, 4).unwrap();
        assert!(e < 1e-7, "{e}");
    }

    #[test]
    fn rates() {
        assert!((gamma_exponent(0.25) - 0.74).abs() < 1e-15);
        assert_eq!(gamma_exponent(0.75), 1.0);
        assert!((predicted_state_rate(0.75) - 0.99).abs() < 1e-15);
    }
}
