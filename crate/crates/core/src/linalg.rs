//! Compressed sparse row storage and preconditioned conjugate gradients.

use crate::error::SolveError;

/// Symmetric matrix in CSR format (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseSymMatrix {
    /// Dense row-major input; exact zeros off the diagonal are dropped.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let a = dense[i * n + j];
                if a != 0.0 || i == j {
                    col.push(j);
                    val.push(a);
                }
            }
            row_ptr.push(col.len());
        }
        SparseSymMatrix { n, row_ptr, col, val }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates. The diagonal is always stored.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 0.0)]).collect();
        for &(i, j, a) in triplets {
            rows[i].push((j, a));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (j, a) in r {
                if last == Some(j) {
                    *val.last_mut().unwrap() += a;
                } else {
                    col.push(j);
                    val.push(a);
                    last = Some(j);
                }
            }
            row_ptr.push(col.len());
        }
        SparseSymMatrix { n, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[r.clone()].binary_search(&j) {
            Ok(k) => self.val[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                d[i * self.n + j] = a;
            }
        }
        d
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            trip.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.n, &trip)
    }

    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-10, max_iter: 10_000, preconditioner: Preconditioner::Jacobi }
    }
}

/// Solves `A x = b` by preconditioned conjugate gradients, starting from `x0` if given.
///
/// Convergence is declared when `||b - A x|| <= tol * ||b||`. Running out of
/// iterations is not an error: the last iterate is returned with `converged` unset.
pub fn cg_solve(
    a: &SparseSymMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolverReport), SolveError> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(SolveError::Size { matrix: n, rhs: b.len() });
    }
    let bnorm = norm2(b);
    if !bnorm.is_finite() {
        return Err(SolveError::NonFinite { iteration: 0 });
    }
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolverReport { iterations: 0, relative_residual: 0.0, converged: true }));
    }
    let inv_diag: Vec<f64> = match opts.preconditioner {
        Preconditioner::Jacobi => a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        for (ri, axi) in r.iter_mut().zip(&ax) {
            *ri -= axi;
        }
    }
    let target = opts.tol * bnorm;
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok((x, SolverReport { iterations: 0, relative_residual: rnorm / bnorm, converged: true }));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(SolveError::NonFinite { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if !rnorm.is_finite() {
            return Err(SolveError::NonFinite { iteration: it });
        }
        if rnorm <= target {
            return Ok((x, SolverReport { iterations: it, relative_residual: rnorm / bnorm, converged: true }));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, SolverReport { iterations: opts.max_iter, relative_residual: rnorm / bnorm, converged: false }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseSymMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0)]);
        assert_eq!(a.to_dense(), vec![3.0, 4.0, 4.0, 0.0]);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn cg_solves_laplacian() {
        let a = laplace_1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&xs);
        for pc in [Preconditioner::None, Preconditioner::Jacobi] {
            let opts = CgOptions { preconditioner: pc, tol: 1e-12, ..Default::default() };
            let (x, rep) = cg_solve(&a, &b, None, &opts).unwrap();
            assert!(rep.relative_residual <= 1e-12);
            let err: f64 = x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn small_exact_systems() {
        let id = SparseSymMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let (x, rep) = cg_solve(&id, &[1.0, -2.0, 3.0], None, &CgOptions::default()).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        assert_eq!(rep.iterations, 1);
        let a = SparseSymMatrix::from_dense(2, &[4.0, 1.0, 1.0, 3.0]);
        let opts = CgOptions { preconditioner: Preconditioner::None, tol: 1e-14, ..Default::default() };
        let (x, _) = cg_solve(&a, &[1.0, 2.0], None, &opts).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-15 && (x[1] - 7.0 / 11.0).abs() < 1e-15);
        let (z, rep) = cg_solve(&a, &[0.0, 0.0], None, &opts).unwrap();
        assert_eq!((z, rep.iterations), (vec![0.0, 0.0], 0));
    }

    #[test]
    fn warm_start_exact_takes_no_iterations() {
        let a = laplace_1d(10);
        let xs = vec![1.0; 10];
        let b = a.matvec(&xs);
        let (_, rep) = cg_solve(&a, &b, Some(&xs), &CgOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn reports_failures() {
        let a = laplace_1d(100);
        let b = vec![1.0; 100];
        let opts = CgOptions { max_iter: 3, ..Default::default() };
        let (x, rep) = cg_solve(&a, &b, None, &opts).unwrap();
        assert!(!rep.converged && rep.iterations == 3 && x.iter().all(|v| v.is_finite()));
        assert!(matches!(cg_solve(&a, &[1.0], None, &opts), Err(SolveError::Size { .. })));
        let mut nan = b.clone();
        nan[3] = f64::NAN;
        assert!(matches!(cg_solve(&a, &nan, None, &opts), Err(SolveError::NonFinite { .. })));
    }
}
