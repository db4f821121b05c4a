//! Backward Euler time stepping for the state equation and its discrete adjoint.

use std::io::Write;

use crate::assembly::load_into;
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, CgOptions, SparseSymMatrix};
use crate::mesh::Mesh;
use crate::optimize::ControlField;

/// Uniform partition of `[0, T]` into `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::param("T", format!("horizon must be positive, got {t_final}")));
        }
        if steps == 0 {
            return Err(Error::param("steps", "need at least one time step"));
        }
        Ok(TimeGrid { t_final, steps, tau: t_final / steps as f64 })
    }

    /// Smallest number of steps whose size does not exceed `tau_max`.
    pub fn with_max_step(t_final: f64, tau_max: f64) -> Result<Self> {
        if !(tau_max.is_finite() && tau_max > 0.0) {
            return Err(Error::param("tau", format!("step bound must be positive, got {tau_max}")));
        }
        let steps = ((t_final / tau_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::new(t_final, steps)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Node `t_k`; the last node is exactly `T`.
    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_final
        } else {
            k as f64 * self.tau
        }
    }
}

/// Sequence of coefficient vectors on a time grid.
///
/// Node-based trajectories (states, adjoints) hold entries `0..=K`; step-based
/// ones (loads, piecewise constant data) hold entries `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    first: usize,
    data: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn nodal(grid: TimeGrid, data: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(grid, 0, data, grid.steps() + 1)
    }

    pub fn per_step(grid: TimeGrid, data: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(grid, 1, data, grid.steps())
    }

    pub fn zeros_per_step(grid: TimeGrid, dim: usize) -> Self {
        Trajectory { grid, first: 1, data: vec![vec![0.0; dim]; grid.steps()] }
    }

    fn build(grid: TimeGrid, first: usize, data: Vec<Vec<f64>>, len: usize) -> Result<Self> {
        if data.len() != len {
            return Err(Error::Shape(format!("expected {len} time slices, got {}", data.len())));
        }
        let dim = data.first().map_or(0, Vec::len);
        if data.iter().any(|v| v.len() != dim) {
            return Err(Error::Shape("time slices have different lengths".into()));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory".into()));
        }
        Ok(Trajectory { grid, first, data })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn first_index(&self) -> usize {
        self.first
    }

    pub fn last_index(&self) -> usize {
        self.grid.steps()
    }

    pub fn dim(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    /// Slice at time index `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k - self.first]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.data.iter().enumerate().map(move |(i, v)| (i + self.first, v.as_slice()))
    }

    /// Writes `k,t,coeff_0,...` lines with a header.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut s = String::from("k,t");
        for i in 0..self.dim() {
            s.push_str(&format!(",coeff_{i}"));
        }
        s.push('\n');
        for (k, v) in self.iter() {
            s.push_str(&format!("{k},{:e}", self.grid.t(k)));
            for x in v {
                s.push_str(&format!(",{x:e}"));
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// How a space-time function is reduced to one load per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadRule {
    /// Value at the right end point `t_{k}`.
    #[default]
    Endpoint,
    /// Average over `(t_{k-1}, t_k)` by three-point Gauss.
    Average,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Loads `⟨g^k, φ_i⟩` for `k = 1..=K` with `g^k` chosen by `rule`.
pub fn space_time_load(
    mesh: &Mesh,
    g: &dyn Fn(f64, &[f64]) -> f64,
    grid: &TimeGrid,
    rule: LoadRule,
    order: usize,
) -> Result<Trajectory> {
    let mut data = Vec::with_capacity(grid.steps());
    for k in 1..=grid.steps() {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let mut f = vec![0.0; mesh.n_dofs()];
        match rule {
            LoadRule::Endpoint => load_into(mesh, &|x: &[f64]| g(t1, x), order, &mut f)?,
            LoadRule::Average => {
                let avg = |x: &[f64]| GAUSS3.iter().map(|&(q, w)| w * g(t0 + (t1 - t0) * q, x)).sum::<f64>();
                load_into(mesh, &avg, order, &mut f)?
            }
        }
        data.push(f);
    }
    Trajectory::per_step(*grid, data)
}

/// Loads of the time averages `τ^{-1} ∫_{t_{k-1}}^{t_k} g dt`.
pub fn time_averaged_load(
    mesh: &Mesh,
    g: &dyn Fn(f64, &[f64]) -> f64,
    grid: &TimeGrid,
    order: usize,
) -> Result<Trajectory> {
    space_time_load(mesh, g, grid, LoadRule::Average, order)
}

/// `L²(Ω)` projection of `u0` onto the interior finite element space.
pub fn l2_project_initial(
    mesh: &Mesh,
    mass: &SparseSymMatrix,
    u0: &dyn Fn(&[f64]) -> f64,
    order: usize,
    opts: &CgOptions,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.n_dofs()];
    load_into(mesh, &u0, order, &mut b)?;
    let (x, rep) = cg_solve(mass, &b, None, opts).map_err(Error::InitialProjection)?;
    if !rep.converged {
        return Err(Error::InitialProjection(crate::error::SolveError::NotConverged {
            iterations: rep.iterations,
            residual: rep.relative_residual,
        }));
    }
    Ok(x)
}

/// Maps piecewise constant cell values to nodal loads, `(B z)_i = Σ_{T ∋ i} z_T |T| / (n+1)`,
/// and back by its adjoint, the cell mean of a nodal function.
#[derive(Debug, Clone)]
pub struct ControlMap {
    cells: Vec<Vec<Option<usize>>>,
    measures: Vec<f64>,
    n_dofs: usize,
}

impl ControlMap {
    pub fn new(mesh: &Mesh) -> Self {
        let cells = (0..mesh.n_cells()).map(|c| mesh.cell(c).iter().map(|&v| mesh.dof(v)).collect()).collect();
        ControlMap { cells, measures: mesh.cell_measures(), n_dofs: mesh.n_dofs() }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs];
        for (c, verts) in self.cells.iter().enumerate() {
            let share = z[c] * self.measures[c] / verts.len() as f64;
            for d in verts.iter().flatten() {
                f[*d] += share;
            }
        }
        f
    }

    /// Cell means of the finite element function with interior coefficients `u`.
    pub fn cell_means(&self, u: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .map(|verts| verts.iter().map(|d| d.map_or(0.0, |d| u[d])).sum::<f64>() / verts.len() as f64)
            .collect()
    }

    /// Loads `B Z^k` for every step of a control field.
    pub fn loads(&self, z: &ControlField) -> Trajectory {
        let data = (1..=z.grid().steps()).map(|k| self.apply(z.step(k))).collect();
        Trajectory { grid: *z.grid(), first: 1, data }
    }
}

/// Reusable backward Euler propagator for a fixed mesh and step size.
#[derive(Debug, Clone)]
pub struct Propagator {
    mass: SparseSymMatrix,
    system: SparseSymMatrix,
    grid: TimeGrid,
    opts: CgOptions,
}

impl Propagator {
    pub fn new(stiffness: &SparseSymMatrix, mass: &SparseSymMatrix, grid: TimeGrid, opts: CgOptions) -> Self {
        let system = mass.linear_combination(1.0, stiffness, grid.tau());
        Propagator { mass: mass.clone(), system, grid, opts }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    fn solve(&self, rhs: &[f64], guess: &[f64], step: usize) -> Result<Vec<f64>> {
        let (x, rep) =
            cg_solve(&self.system, rhs, Some(guess), &self.opts).map_err(|source| Error::TimeStep { step, source })?;
        if !rep.converged {
            return Err(Error::TimeStep {
                step,
                source: crate::error::SolveError::NotConverged {
                    iterations: rep.iterations,
                    residual: rep.relative_residual,
                },
            });
        }
        Ok(x)
    }

    /// `(M + τK) U^k = M U^{k-1} + τ (F^k + G^k)` for `k = 1..=K`, where `F` and `G`
    /// are optional per-step loads.
    pub fn forward(&self, u0: &[f64], f: Option<&Trajectory>, g: Option<&Trajectory>) -> Result<Trajectory> {
        let n = self.mass.dim();
        check_len(u0.len(), n, "initial state")?;
        for t in [f, g].into_iter().flatten() {
            self.check_per_step(t)?;
        }
        let tau = self.grid.tau();
        let mut data = Vec::with_capacity(self.grid.steps() + 1);
        data.push(u0.to_vec());
        for k in 1..=self.grid.steps() {
            let prev = &data[k - 1];
            let mut rhs = self.mass.matvec(prev);
            for t in [f, g].into_iter().flatten() {
                for (r, v) in rhs.iter_mut().zip(t.at(k)) {
                    *r += tau * v;
                }
            }
            let next = self.solve(&rhs, prev, k)?;
            data.push(next);
        }
        Ok(Trajectory { grid: self.grid, first: 0, data })
    }

    /// `(M + τK) P^k = M P^{k+1} + τ (M U^{k+1} - D^{k+1})` for `k = K-1..=0`, `P^K = 0`,
    /// where `D^{k}` holds the loads `⟨u_d^k, φ_i⟩`.
    pub fn backward(&self, u: &Trajectory, ud_loads: &Trajectory) -> Result<Trajectory> {
        let n = self.mass.dim();
        if u.first_index() != 0 || u.last_index() != self.grid.steps() {
            return Err(Error::Shape("state trajectory must be indexed 0..=K".into()));
        }
        check_len(u.dim(), n, "state")?;
        self.check_per_step(ud_loads)?;
        let tau = self.grid.tau();
        let steps = self.grid.steps();
        let mut data = vec![vec![0.0; n]; steps + 1];
        for k in (0..steps).rev() {
            let mut rhs = self.mass.matvec(&data[k + 1]);
            let mu = self.mass.matvec(u.at(k + 1));
            for i in 0..n {
                rhs[i] += tau * (mu[i] - ud_loads.at(k + 1)[i]);
            }
            data[k] = self.solve(&rhs, &data[k + 1], k)?;
        }
        Ok(Trajectory { grid: self.grid, first: 0, data })
    }

    fn check_per_step(&self, t: &Trajectory) -> Result<()> {
        if t.first_index() != 1 || t.last_index() != self.grid.steps() {
            return Err(Error::Shape("per-step data must be indexed 1..=K on the same grid".into()));
        }
        check_len(t.dim(), self.mass.dim(), "per-step data")
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Fully discrete state: backward Euler with loads `f` and piecewise constant control `z`.
#[allow(clippy::too_many_arguments)]
pub fn solve_state_forward(
    stiffness: &SparseSymMatrix,
    mass: &SparseSymMatrix,
    mesh: &Mesh,
    f: &Trajectory,
    z: Option<&ControlField>,
    u0: &[f64],
    grid: &TimeGrid,
    opts: &CgOptions,
) -> Result<Trajectory> {
    let prop = Propagator::new(stiffness, mass, *grid, *opts);
    let loads = z.map(|z| ControlMap::new(mesh).loads(z));
    prop.forward(u0, Some(f), loads.as_ref())
}

/// Discrete adjoint driven by the tracking misfit.
pub fn solve_adjoint_backward(
    stiffness: &SparseSymMatrix,
    mass: &SparseSymMatrix,
    u: &Trajectory,
    ud_loads: &Trajectory,
    grid: &TimeGrid,
    opts: &CgOptions,
) -> Result<Trajectory> {
    Propagator::new(stiffness, mass, *grid, *opts).backward(u, ud_loads)
}
