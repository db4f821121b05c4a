//! Reduced formulation of the discrete control problem and a projected L-BFGS solver.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use crate::assembly::{cell_quadrature, fractional_stiffness, mass_matrix, KernelParams, QuadConfig};
use crate::error::{Error, Result};
use crate::linalg::{CgOptions, SparseSymMatrix};
use crate::mesh::{Domain, Mesh};
use crate::quadrature::GaussRule;
use crate::timestepping::{
    l2_project_initial, space_time_load, ControlMap, LoadRule, Propagator, TimeGrid, Trajectory,
};

pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `min(b, max(a, v))`.
pub fn box_project(v: f64, a: f64, b: f64) -> f64 {
    v.max(a).min(b)
}

/// Constant box `[a, b]`; infinite bounds are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    a: f64,
    b: f64,
}

impl Bounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::param("a,b", format!("need a <= b, got [{a}, {b}]")));
        }
        Ok(Bounds { a, b })
    }

    pub fn unbounded() -> Self {
        Bounds { a: f64::NEG_INFINITY, b: f64::INFINITY }
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn project(&self, v: f64) -> f64 {
        box_project(v, self.a, self.b)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.a && v <= self.b
    }
}

/// Piecewise constant function on cells × time steps `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    measures: Arc<[f64]>,
    values: Vec<f64>,
}

impl ControlField {
    pub fn zeros(grid: TimeGrid, measures: Arc<[f64]>) -> Self {
        let n = measures.len() * grid.steps();
        ControlField { grid, measures, values: vec![0.0; n] }
    }

    pub fn for_mesh(mesh: &Mesh, grid: TimeGrid) -> Self {
        Self::zeros(grid, mesh.cell_measures().into())
    }

    pub fn from_values(grid: TimeGrid, measures: Arc<[f64]>, values: Vec<f64>) -> Result<Self> {
        if values.len() != measures.len() * grid.steps() {
            return Err(Error::Shape(format!(
                "control needs {} x {} values, got {}",
                grid.steps(),
                measures.len(),
                values.len()
            )));
        }
        Ok(ControlField { grid, measures, values })
    }

    pub fn constant(grid: TimeGrid, measures: Arc<[f64]>, c: f64) -> Self {
        let mut z = Self::zeros(grid, measures);
        z.values.fill(c);
        z
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn measures(&self) -> &Arc<[f64]> {
        &self.measures
    }

    pub fn n_cells(&self) -> usize {
        self.measures.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Cell values on step `k` in `1..=K`.
    pub fn step(&self, k: usize) -> &[f64] {
        let n = self.n_cells();
        &self.values[(k - 1) * n..k * n]
    }

    pub fn step_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.n_cells();
        &mut self.values[(k - 1) * n..k * n]
    }

    pub fn get(&self, k: usize, cell: usize) -> f64 {
        self.step(k)[cell]
    }

    /// `L²(Q)` inner product.
    pub fn inner(&self, other: &ControlField) -> f64 {
        let n = self.n_cells();
        let mut sum = 0.0;
        for (i, (x, y)) in self.values.iter().zip(&other.values).enumerate() {
            sum += self.measures[i % n] * x * y;
        }
        self.grid.tau() * sum
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &ControlField) -> ControlField {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + alpha * y).collect();
        ControlField { values, ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ControlField {
        ControlField { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn projected(&self, bounds: &Bounds) -> ControlField {
        self.map(|v| bounds.project(v))
    }

    /// Writes `k,cell,value` lines with a header.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut s = String::from("k,cell,value\n");
        for k in 1..=self.grid.steps() {
            for (c, v) in self.step(k).iter().enumerate() {
                s.push_str(&format!("{k},{c},{v:e}\n"));
            }
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// Cell-and-step averages of `w`, computed by tensor Gauss quadrature.
pub fn project_control(w: &dyn Fn(f64, &[f64]) -> f64, mesh: &Mesh, grid: &TimeGrid, order: usize) -> Result<ControlField> {
    let cells = cell_quadrature(mesh, order)?;
    let time = GaussRule::new(order.div_ceil(2).max(2))?;
    let mut z = ControlField::for_mesh(mesh, *grid);
    let dim = mesh.dim();
    for k in 1..=grid.steps() {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let vals = z.step_mut(k);
        for (c, pts) in cells.iter().enumerate() {
            let mut sum = 0.0;
            let mut meas = 0.0;
            for p in pts {
                meas += p.weight;
                for (q, wq) in time.iter() {
                    sum += p.weight * wq * w(t0 + (t1 - t0) * q, &p.x[..dim]);
                }
            }
            vals[c] = sum / meas;
        }
    }
    if z.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projected control".into()));
    }
    Ok(z)
}

/// Cell means of a nodal adjoint; step `k` takes `P^{k-1}`.
pub fn project_adjoint(p: &Trajectory, map: &ControlMap, measures: Arc<[f64]>) -> ControlField {
    let grid = *p.grid();
    let mut z = ControlField::zeros(grid, measures);
    for k in 1..=grid.steps() {
        z.step_mut(k).copy_from_slice(&map.cell_means(p.at(k - 1)));
    }
    z
}

/// `‖Z − proj_{[a,b]}(−ΠP/μ)‖_{L²(Q)}`.
pub fn optimality_residual(z: &ControlField, pi_p: &ControlField, mu: f64, bounds: &Bounds) -> f64 {
    let target = pi_p.map(|v| bounds.project(-v / mu));
    z.add_scaled(-1.0, &target).norm()
}

/// Continuous problem data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub s: f64,
    pub mu: f64,
    pub bounds: Bounds,
    pub t_final: f64,
    pub f: SpaceTimeFn,
    pub u_d: SpaceTimeFn,
    pub u0: SpaceFn,
    pub domain: Domain,
    pub u_d_rule: LoadRule,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::param("s", format!("must lie in (0,1), got {}", self.s)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", format!("must be positive, got {}", self.mu)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::param("T", format!("must be positive, got {}", self.t_final)));
        }
        Bounds::new(self.bounds.lower(), self.bounds.upper())?;
        Ok(())
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("s", &self.s)
            .field("mu", &self.mu)
            .field("bounds", &self.bounds)
            .field("t_final", &self.t_final)
            .field("domain", &self.domain)
            .field("u_d_rule", &self.u_d_rule)
            .finish_non_exhaustive()
    }
}

/// The two terms of the discrete functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub tracking: f64,
    pub control: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.tracking + self.control
    }
}

/// Objective, gradient and the trajectories behind them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: ObjectiveParts,
    pub gradient: ControlField,
    pub projected_adjoint: ControlField,
    pub state: Trajectory,
    pub adjoint: Trajectory,
}

/// Stopping and line-search settings of [`DiscreteProblem::solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Absolute residual tolerance; `None` means `1e-8 (1 + |J|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Objective changes below `objective_noise (1 + |J|)` are treated as solver noise.
    pub objective_noise: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { tol: None, max_iter: 500, memory: 10, armijo: 1e-4, backtrack: 0.5, max_backtracks: 40, objective_noise: 1e-10 }
    }
}

/// Iteration log of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub objective: f64,
    pub residual: f64,
    pub tol: f64,
    pub converged: bool,
    /// `(J, residual, step length)` per iterate, starting with the initial guess.
    pub history: Vec<(f64, f64, f64)>,
    pub gradient_fallbacks: usize,
}

impl OptimizeReport {
    pub fn objective_history(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.0).collect()
    }

    /// Writes `iter,J,residual,step_length` lines with a header.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut s = String::from("iter,J,residual,step_length\n");
        for (i, (j, r, a)) in self.history.iter().enumerate() {
            s.push_str(&format!("{i},{j:e},{r:e},{a:e}\n"));
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// Result of [`DiscreteProblem::solve`].
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub control: ControlField,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    pub report: OptimizeReport,
}

/// Fully discrete reduced problem on a fixed mesh and time grid.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    stiffness: SparseSymMatrix,
    prop: Propagator,
    map: ControlMap,
    measures: Arc<[f64]>,
    f: Trajectory,
    ud: Trajectory,
    ud_sq: Vec<f64>,
    u0: Vec<f64>,
    mu: f64,
    bounds: Bounds,
}

impl DiscreteProblem {
    /// Assembles the stiffness and mass matrices and discretizes the data.
    pub fn assemble(spec: &ProblemSpec, mesh: &Mesh, grid: TimeGrid, qc: &QuadConfig, opts: CgOptions) -> Result<Self> {
        spec.validate()?;
        let kp = KernelParams::new(mesh.dim(), spec.s)?;
        let k = fractional_stiffness(mesh, &kp, qc)?;
        Self::with_matrices(spec, mesh, grid, k, mass_matrix(mesh), qc.gauss_order_load, opts)
    }

    /// Discretizes the data against given matrices.
    pub fn with_matrices(
        spec: &ProblemSpec,
        mesh: &Mesh,
        grid: TimeGrid,
        stiffness: SparseSymMatrix,
        mass: SparseSymMatrix,
        order: usize,
        opts: CgOptions,
    ) -> Result<Self> {
        spec.validate()?;
        if (grid.t_final() - spec.t_final).abs() > 1e-12 * spec.t_final {
            return Err(Error::param("T", "time grid horizon differs from the problem horizon"));
        }
        let f = space_time_load(mesh, spec.f.as_ref(), &grid, LoadRule::Average, order)?;
        let ud = space_time_load(mesh, spec.u_d.as_ref(), &grid, spec.u_d_rule, order)?;
        let ud_sq = tracking_constants(mesh, spec.u_d.as_ref(), &grid, spec.u_d_rule, order)?;
        let u0 = l2_project_initial(mesh, &mass, spec.u0.as_ref(), order, &opts)?;
        let prop = Propagator::new(&stiffness, &mass, grid, opts);
        Ok(DiscreteProblem {
            stiffness,
            prop,
            map: ControlMap::new(mesh),
            measures: mesh.cell_measures().into(),
            f,
            ud,
            ud_sq,
            u0,
            mu: spec.mu,
            bounds: spec.bounds,
        })
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        self.prop.mass()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.prop.grid()
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn control_map(&self) -> &ControlMap {
        &self.map
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.u0
    }

    /// Loads `⟨f^k, φ_i⟩` of the time-averaged right-hand side.
    pub fn source_loads(&self) -> &Trajectory {
        &self.f
    }

    /// Loads `⟨u_d^k, φ_i⟩` of the desired state.
    pub fn target_loads(&self) -> &Trajectory {
        &self.ud
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::zeros(*self.grid(), self.measures.clone())
    }

    pub fn state(&self, z: &ControlField) -> Result<Trajectory> {
        self.check(z)?;
        let g = self.map.loads(z);
        self.prop.forward(&self.u0, Some(&self.f), Some(&g))
    }

    pub fn objective_parts(&self, z: &ControlField) -> Result<ObjectiveParts> {
        let u = self.state(z)?;
        Ok(self.parts(z, &u))
    }

    pub fn objective(&self, z: &ControlField) -> Result<f64> {
        Ok(self.objective_parts(z)?.total())
    }

    fn parts(&self, z: &ControlField, u: &Trajectory) -> ObjectiveParts {
        let tau = self.grid().tau();
        let mut tracking = 0.0;
        for k in 1..=self.grid().steps() {
            let uk = u.at(k);
            let mu = self.mass().matvec(uk);
            let quad: f64 = uk.iter().zip(&mu).map(|(a, b)| a * b).sum();
            let cross: f64 = uk.iter().zip(self.ud.at(k)).map(|(a, b)| a * b).sum();
            tracking += tau * (quad - 2.0 * cross + self.ud_sq[k - 1]);
        }
        ObjectiveParts { tracking: 0.5 * tracking, control: 0.5 * self.mu * z.inner(z) }
    }

    /// Objective, `L²(Q)` gradient `μZ + ΠP`, state and adjoint at `z`.
    pub fn evaluate(&self, z: &ControlField) -> Result<Evaluation> {
        let state = self.state(z)?;
        self.evaluate_at_state(z, state)
    }

    fn evaluate_at_state(&self, z: &ControlField, state: Trajectory) -> Result<Evaluation> {
        let adjoint = self.prop.backward(&state, &self.ud)?;
        let projected_adjoint = project_adjoint(&adjoint, &self.map, self.measures.clone());
        let gradient = projected_adjoint.add_scaled(self.mu, z);
        Ok(Evaluation { objective: self.parts(z, &state), gradient, projected_adjoint, state, adjoint })
    }

    pub fn gradient(&self, z: &ControlField) -> Result<ControlField> {
        Ok(self.evaluate(z)?.gradient)
    }

    pub fn residual(&self, z: &ControlField, eval: &Evaluation) -> f64 {
        optimality_residual(z, &eval.projected_adjoint, self.mu, &self.bounds)
    }

    fn check(&self, z: &ControlField) -> Result<()> {
        if z.grid() != self.grid() || z.n_cells() != self.measures.len() {
            return Err(Error::Shape("control does not match the mesh and time grid".into()));
        }
        Ok(())
    }

    /// Projected L-BFGS with Armijo backtracking along the projected path.
    pub fn solve(&self, start: Option<&ControlField>, opts: &BfgsOptions) -> Result<ControlSolution> {
        let mut z = match start {
            Some(z0) => {
                self.check(z0)?;
                z0.projected(&self.bounds)
            }
            None => self.zero_control().projected(&self.bounds),
        };
        let mut eval = self.evaluate(&z)?;
        let mut j = eval.objective.total();
        let mut res = self.residual(&z, &eval);
        let mut history = vec![(j, res, 0.0)];
        let mut pairs: VecDeque<(ControlField, ControlField, f64)> = VecDeque::new();
        let mut fallbacks = 0;
        let mut iterations = 0;
        let tol_of = |j: f64| opts.tol.unwrap_or(1e-8 * (1.0 + j.abs()));

        while res > tol_of(j) && iterations < opts.max_iter {
            let free = self.free_mask(&z, &eval.gradient);
            let mut step = None;
            for use_bfgs in [true, false] {
                if !use_bfgs {
                    fallbacks += 1;
                    pairs.clear();
                }
                let d = if use_bfgs && !pairs.is_empty() {
                    two_loop(&eval.gradient, &pairs, &free)
                } else {
                    eval.gradient.map(|g| -g)
                };
                let alpha0 = if use_bfgs && !pairs.is_empty() { 1.0 } else { 1.0 / self.mu };
                if let Some(found) = self.line_search(&z, j, &eval.gradient, &d, alpha0, opts)? {
                    step = Some(found);
                    break;
                }
            }
            let Some((alpha, z_new, state_new)) = step else { break };
            let eval_new = self.evaluate_at_state(&z_new, state_new)?;
            let s = z_new.add_scaled(-1.0, &z);
            let y = eval_new.gradient.add_scaled(-1.0, &eval.gradient);
            let sy = s.inner(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                if pairs.len() == opts.memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, sy));
            }
            z = z_new;
            eval = eval_new;
            j = eval.objective.total();
            res = self.residual(&z, &eval);
            iterations += 1;
            history.push((j, res, alpha));
        }
        let tol = tol_of(j);
        let report = OptimizeReport {
            iterations,
            objective: j,
            residual: res,
            tol,
            converged: res <= tol,
            history,
            gradient_fallbacks: fallbacks,
        };
        Ok(ControlSolution { control: z, state: eval.state, adjoint: eval.adjoint, report })
    }

    /// Components not held at a bound by the gradient.
    fn free_mask(&self, z: &ControlField, g: &ControlField) -> Vec<bool> {
        z.values()
            .iter()
            .zip(g.values())
            .map(|(&v, &gv)| !((v <= self.bounds.lower() && gv > 0.0) || (v >= self.bounds.upper() && gv < 0.0)))
            .collect()
    }

    fn line_search(
        &self,
        z: &ControlField,
        j: f64,
        g: &ControlField,
        d: &ControlField,
        alpha0: f64,
        opts: &BfgsOptions,
    ) -> Result<Option<(f64, ControlField, Trajectory)>> {
        let mut alpha = alpha0;
        let noise = opts.objective_noise * (1.0 + j.abs());
        for _ in 0..=opts.max_backtracks {
            let trial = z.add_scaled(alpha, d).projected(&self.bounds);
            let decrease = g.inner(&trial.add_scaled(-1.0, z));
            if decrease < 0.0 {
                let state = self.state(&trial)?;
                let jt = self.parts(&trial, &state).total();
                if jt <= j + opts.armijo * decrease + noise {
                    return Ok(Some((alpha, trial, state)));
                }
            }
            alpha *= opts.backtrack;
        }
        Ok(None)
    }
}

/// L-BFGS direction restricted to the free components; bound components follow `-g`.
fn two_loop(g: &ControlField, pairs: &VecDeque<(ControlField, ControlField, f64)>, free: &[bool]) -> ControlField {
    let mask = |f: &ControlField| {
        let mut out = f.clone();
        for (v, &fr) in out.values_mut().iter_mut().zip(free) {
            if !fr {
                *v = 0.0;
            }
        }
        out
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, sy) in pairs.iter().rev() {
        let a = s.inner(&q) / sy;
        q = q.add_scaled(-a, &mask(y));
        alphas.push(a);
    }
    let (_, y_last, sy_last) = pairs.back().expect("at least one pair");
    let gamma = sy_last / y_last.inner(y_last);
    let mut r = q.map(|v| gamma * v);
    for ((s, y, sy), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = y.inner(&r) / sy;
        r = r.add_scaled(a - b, &mask(s));
    }
    let mut d = r.map(|v| -v);
    for ((v, &fr), &gv) in d.values_mut().iter_mut().zip(free).zip(g.values()) {
        if !fr {
            *v = -gv;
        }
    }
    if d.inner(g) >= 0.0 {
        return g.map(|v| -v);
    }
    d
}

/// `‖u_d^k‖²_{L²(Ω)}` over the meshed region, matching the rule used for the loads.
fn tracking_constants(
    mesh: &Mesh,
    ud: &dyn Fn(f64, &[f64]) -> f64,
    grid: &TimeGrid,
    rule: LoadRule,
    order: usize,
) -> Result<Vec<f64>> {
    let cells = cell_quadrature(mesh, order)?;
    let time = GaussRule::new(3)?;
    let dim = mesh.dim();
    let mut out = Vec::with_capacity(grid.steps());
    for k in 1..=grid.steps() {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let mut sum = 0.0;
        for p in cells.iter().flatten() {
            let v = match rule {
                LoadRule::Endpoint => ud(t1, &p.x[..dim]),
                LoadRule::Average => time.iter().map(|(q, w)| w * ud(t0 + (t1 - t0) * q, &p.x[..dim])).sum(),
            };
            sum += p.weight * v * v;
        }
        if !sum.is_finite() {
            return Err(Error::NonFinite("desired state".into()));
        }
        out.push(sum);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn clamp() {
        assert_eq!(box_project(0.7, -0.5, 0.5), 0.5);
        assert_eq!(box_project(0.2, -0.5, 0.5), 0.2);
        assert_eq!(box_project(-3.0, -0.5, 0.5), -0.5);
        assert!(Bounds::new(1.0, 0.0).is_err());
        assert!(Bounds::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn projection_of_linear_function() {
        let mesh = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let z = project_control(&|_, x| x[0], &mesh, &grid, 4).unwrap();
        let c = (0..mesh.n_cells()).find(|&c| mesh.vertex(mesh.cell(c)[0])[0] == 0.0).unwrap();
        assert!((z.get(1, c) - 0.125).abs() < 1e-14);
        let one = project_control(&|_, _| 3.0, &mesh, &grid, 4).unwrap();
        assert!(one.values().iter().all(|&v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let z = ControlField::constant(grid, vec![1.0, 1.0].into(), 0.5);
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("k,cell,value"));
        assert_eq!(text.lines().count(), 5);
        assert!((z.norm() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }
}
