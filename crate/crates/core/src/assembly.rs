//! Stiffness, mass and load assembly for continuous piecewise linear elements.
//!
//! The fractional stiffness matrix is split as
//!
//! ```text
//! A(v, w) = C/2 ∬_{Ω×Ω} (v(x)-v(y))(w(x)-w(y)) |x-y|^{-n-2s} dy dx + C ∫_Ω v w ρ dx,
//! ρ(x)   = ∫_{Ω^c} |x-y|^{-n-2s} dy,
//! ```
//!
//! where Ω is the meshed domain (the inscribed polygon for the disc). The double
//! integral is summed over element pairs. Identical, edge-sharing and
//! vertex-sharing pairs use coordinate transforms in which the kernel becomes
//! homogeneous and the radial variable is integrated in closed form; separated
//! pairs use tensor Gauss rules, with recursive subdivision when they are close
//! relative to their size.

use std::f64::consts::PI;
use std::io::Write;

use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

use crate::error::{Error, PointDisplay, Result};
use crate::linalg::SparseSymMatrix;
use crate::mesh::{point_segment_distance, Domain, Mesh};
use crate::quadrature::{integrate_adaptive, GaussRule, TriangleRule, MAX_GAUSS_ORDER};

/// Dimension, fractional order and normalization constant of the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    n: usize,
    s: f64,
    c_ns: f64,
}

impl KernelParams {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        Self::check(n, s)?;
        Ok(KernelParams { n, s, c_ns: Self::normalization(n, s) })
    }

    /// Kernel with an arbitrary positive constant in place of `C(n, s)`.
    pub fn with_constant(n: usize, s: f64, c: f64) -> Result<Self> {
        Self::check(n, s)?;
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::param("c_ns", format!("must be positive, got {c}")));
        }
        Ok(KernelParams { n, s, c_ns: c })
    }

    fn check(n: usize, s: f64) -> Result<()> {
        if n != 1 && n != 2 {
            return Err(Error::param("n", format!("dimension must be 1 or 2, got {n}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::param("s", format!("fractional order must lie in (0, 1), got {s}")));
        }
        Ok(())
    }

    /// `C(n, s) = 2^{2s} s Γ(s + n/2) / (π^{n/2} Γ(1 - s))`.
    pub fn normalization(n: usize, s: f64) -> f64 {
        let h = n as f64 / 2.0;
        4f64.powf(s) * s * gamma(s + h) / (PI.powf(h) * gamma(1.0 - s))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn c_ns(&self) -> f64 {
        self.c_ns
    }

    /// Kernel exponent `n + 2s`.
    fn exponent(&self) -> f64 {
        self.n as f64 + 2.0 * self.s
    }
}

/// Quadrature settings for assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Gauss points per dimension for separated element pairs.
    pub gauss_order_regular: usize,
    /// Gauss points per dimension inside the singular pair transforms.
    pub gauss_order_singular: usize,
    /// Separated pairs closer than this multiple of their diameter are subdivided.
    pub near_field_threshold: f64,
    /// Gauss points per dimension for load vectors and the complement term.
    pub gauss_order_load: usize,
    /// Subdivision depth toward the boundary for the complement term in 2D.
    pub complement_depth: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            gauss_order_regular: 4,
            gauss_order_singular: 5,
            near_field_threshold: 2.0,
            gauss_order_load: 5,
            complement_depth: 4,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        for order in [self.gauss_order_regular, self.gauss_order_singular, self.gauss_order_load] {
            if order == 0 || order > MAX_GAUSS_ORDER {
                return Err(Error::QuadratureOrder { requested: order, max: MAX_GAUSS_ORDER });
            }
        }
        if !(self.near_field_threshold.is_finite() && self.near_field_threshold > 0.0) {
            return Err(Error::param("near_field_threshold", "must be positive"));
        }
        if self.complement_depth > 12 {
            return Err(Error::param("complement_depth", "must not exceed 12"));
        }
        Ok(())
    }
}

/// Affine simplex with barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Element {
    pub v: [[f64; 2]; 3],
    pub ids: [usize; 3],
    pub nv: usize,
    pub measure: f64,
    pub grad: [[f64; 2]; 3],
    pub diam: f64,
    centroid: [f64; 2],
    radius: f64,
}

impl Element {
    pub fn new(mesh: &Mesh, c: usize) -> Self {
        let cell = mesh.cell(c);
        let nv = cell.len();
        let mut v = [[0.0; 2]; 3];
        let mut ids = [usize::MAX; 3];
        for (k, &id) in cell.iter().enumerate() {
            v[k] = mesh.point2(id);
            ids[k] = id;
        }
        Self::from_vertices(v, ids, nv)
    }

    fn from_vertices(v: [[f64; 2]; 3], ids: [usize; 3], nv: usize) -> Self {
        let mut grad = [[0.0; 2]; 3];
        let measure;
        let diam;
        if nv == 2 {
            let h = v[1][0] - v[0][0];
            grad[1] = [1.0 / h, 0.0];
            grad[0] = [-1.0 / h, 0.0];
            measure = h.abs();
            diam = h.abs();
        } else {
            let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
            let e2 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
            let det = e1[0] * e2[1] - e2[0] * e1[1];
            grad[1] = [e2[1] / det, -e2[0] / det];
            grad[2] = [-e1[1] / det, e1[0] / det];
            grad[0] = [-grad[1][0] - grad[2][0], -grad[1][1] - grad[2][1]];
            measure = 0.5 * det.abs();
            diam = dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]));
        }
        let mut centroid = [0.0; 2];
        for p in &v[..nv] {
            centroid[0] += p[0] / nv as f64;
            centroid[1] += p[1] / nv as f64;
        }
        let radius = v[..nv].iter().map(|&p| dist(p, centroid)).fold(0.0, f64::max);
        Element { v, ids, nv, measure, grad, diam, centroid, radius }
    }

    pub fn lambda(&self, x: [f64; 2]) -> [f64; 3] {
        let dx = [x[0] - self.v[0][0], x[1] - self.v[0][1]];
        let mut l = [0.0; 3];
        for k in 1..self.nv {
            l[k] = self.grad[k][0] * dx[0] + self.grad[k][1] * dx[1];
        }
        l[0] = 1.0 - l[1..self.nv].iter().sum::<f64>();
        l
    }

    /// Point with reference coordinates `xi` relative to vertex ordering `order`.
    fn map(&self, order: [usize; 3], xi: [f64; 2]) -> [f64; 2] {
        let o = self.v[order[0]];
        let a = self.v[order[1]];
        if self.nv == 2 {
            return [o[0] + (a[0] - o[0]) * xi[0], 0.0];
        }
        let b = self.v[order[2]];
        [
            o[0] + (a[0] - o[0]) * xi[0] + (b[0] - o[0]) * xi[1],
            o[1] + (a[1] - o[1]) * xi[0] + (b[1] - o[1]) * xi[1],
        ]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Sub-simplex of an element (vertex coordinates only).
#[derive(Debug, Clone, Copy)]
struct Piece {
    v: [[f64; 2]; 3],
    nv: usize,
}

impl Piece {
    fn of(e: &Element) -> Self {
        Piece { v: e.v, nv: e.nv }
    }

    fn diam(&self) -> f64 {
        if self.nv == 2 {
            (self.v[1][0] - self.v[0][0]).abs()
        } else {
            dist(self.v[0], self.v[1]).max(dist(self.v[1], self.v[2])).max(dist(self.v[2], self.v[0]))
        }
    }

    fn measure(&self) -> f64 {
        if self.nv == 2 {
            (self.v[1][0] - self.v[0][0]).abs()
        } else {
            let (a, b, c) = (self.v[0], self.v[1], self.v[2]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
        }
    }

    fn children(&self) -> Vec<Piece> {
        let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if self.nv == 2 {
            let m = mid(self.v[0], self.v[1]);
            vec![
                Piece { v: [self.v[0], m, [0.0; 2]], nv: 2 },
                Piece { v: [m, self.v[1], [0.0; 2]], nv: 2 },
            ]
        } else {
            let [a, b, c] = self.v;
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            vec![
                Piece { v: [a, ab, ca], nv: 3 },
                Piece { v: [ab, b, bc], nv: 3 },
                Piece { v: [ca, bc, c], nv: 3 },
                Piece { v: [ab, bc, ca], nv: 3 },
            ]
        }
    }

    fn distance(&self, other: &Piece) -> f64 {
        if self.nv == 2 {
            let (a0, a1) = minmax(self.v[0][0], self.v[1][0]);
            let (b0, b1) = minmax(other.v[0][0], other.v[1][0]);
            return (b0 - a1).max(a0 - b1).max(0.0);
        }
        let mut d = f64::INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                d = d.min(point_segment_distance(self.v[i], other.v[j], other.v[(j + 1) % 3]));
                d = d.min(point_segment_distance(other.v[i], self.v[j], self.v[(j + 1) % 3]));
            }
        }
        d
    }
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Quadrature points of a piece, with barycentric coordinates of the owning element.
struct Points {
    x: Vec<[f64; 2]>,
    w: Vec<f64>,
    lam: Vec<[f64; 3]>,
}

impl Points {
    fn on(piece: &Piece, owner: &Element, rules: &Rules, regular: bool) -> Self {
        let mut pts = Points { x: Vec::new(), w: Vec::new(), lam: Vec::new() };
        let meas = piece.measure();
        if piece.nv == 2 {
            let g = if regular { &rules.line_regular } else { &rules.line_load };
            let (a, b) = (piece.v[0][0], piece.v[1][0]);
            for (t, w) in g.iter() {
                let x = [a + (b - a) * t, 0.0];
                pts.x.push(x);
                pts.w.push(w * meas);
                pts.lam.push(owner.lambda(x));
            }
        } else {
            let t = if regular { &rules.tri_regular } else { &rules.tri_load };
            let [a, b, c] = piece.v;
            for (p, &w) in t.points.iter().zip(&t.weights) {
                let x = [
                    a[0] + (b[0] - a[0]) * p[0] + (c[0] - a[0]) * p[1],
                    a[1] + (b[1] - a[1]) * p[0] + (c[1] - a[1]) * p[1],
                ];
                pts.x.push(x);
                pts.w.push(2.0 * w * meas);
                pts.lam.push(owner.lambda(x));
            }
        }
        pts
    }
}

struct Rules {
    line_regular: GaussRule,
    line_singular: GaussRule,
    line_load: GaussRule,
    tri_regular: TriangleRule,
    tri_singular: TriangleRule,
    tri_load: TriangleRule,
}

impl Rules {
    fn new(qc: &QuadConfig) -> Result<Self> {
        Ok(Rules {
            line_regular: GaussRule::new(qc.gauss_order_regular)?,
            line_singular: GaussRule::new(qc.gauss_order_singular)?,
            line_load: GaussRule::new(qc.gauss_order_load)?,
            tri_regular: TriangleRule::collapsed(qc.gauss_order_regular)?,
            tri_singular: TriangleRule::collapsed(qc.gauss_order_singular)?,
            tri_load: TriangleRule::collapsed(qc.gauss_order_load)?,
        })
    }
}

/// Local interaction matrix of an element pair over the union of their vertices.
struct PairLocal {
    ids: [usize; 6],
    len: usize,
    idx1: [usize; 3],
    idx2: [usize; 3],
    m: [[f64; 6]; 6],
}

impl PairLocal {
    fn new(e1: &Element, e2: &Element) -> Self {
        let mut p = PairLocal { ids: [usize::MAX; 6], len: 0, idx1: [0; 3], idx2: [0; 3], m: [[0.0; 6]; 6] };
        for k in 0..e1.nv {
            p.ids[p.len] = e1.ids[k];
            p.idx1[k] = p.len;
            p.len += 1;
        }
        for k in 0..e2.nv {
            match p.ids[..p.len].iter().position(|&id| id == e2.ids[k]) {
                Some(pos) => p.idx2[k] = pos,
                None => {
                    p.ids[p.len] = e2.ids[k];
                    p.idx2[k] = p.len;
                    p.len += 1;
                }
            }
        }
        p
    }

    /// Adds `w (φ(x)-φ(y)) (φ(x)-φ(y))^T |x-y|^{-expo}` for one point pair.
    fn add_point(&mut self, e1: &Element, e2: &Element, x: [f64; 2], y: [f64; 2], w: f64, expo: f64) {
        let l1 = e1.lambda(x);
        let l2 = e2.lambda(y);
        let mut d = [0.0; 6];
        for k in 0..e1.nv {
            d[self.idx1[k]] += l1[k];
        }
        for k in 0..e2.nv {
            d[self.idx2[k]] -= l2[k];
        }
        let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        let kv = w * r2.powf(-0.5 * expo);
        for p in 0..self.len {
            for q in 0..=p {
                self.m[p][q] += kv * d[p] * d[q];
            }
        }
    }

    /// Tensor quadrature between two point sets of separated pieces.
    fn add_separated(&mut self, nv1: usize, nv2: usize, p1: &Points, p2: &Points, expo: f64) {
        let mut s1 = [[0.0; 3]; 3];
        let mut s2 = [[0.0; 3]; 3];
        let mut s12 = [[0.0; 3]; 3];
        let mut colsum = vec![0.0; p2.x.len()];
        let half = -0.5 * expo;
        for a in 0..p1.x.len() {
            let xa = p1.x[a];
            let mut rowsum = 0.0;
            let mut t = [0.0; 3];
            for b in 0..p2.x.len() {
                let yb = p2.x[b];
                let r2 = (xa[0] - yb[0]).powi(2) + (xa[1] - yb[1]).powi(2);
                let k = p1.w[a] * p2.w[b] * r2.powf(half);
                rowsum += k;
                colsum[b] += k;
                for l in 0..nv2 {
                    t[l] += k * p2.lam[b][l];
                }
            }
            let la = p1.lam[a];
            for i in 0..nv1 {
                for j in 0..nv1 {
                    s1[i][j] += rowsum * la[i] * la[j];
                }
                for j in 0..nv2 {
                    s12[i][j] -= la[i] * t[j];
                }
            }
        }
        for b in 0..p2.x.len() {
            let lb = p2.lam[b];
            for i in 0..nv2 {
                for j in 0..nv2 {
                    s2[i][j] += colsum[b] * lb[i] * lb[j];
                }
            }
        }
        let mut add = |p: usize, q: usize, v: f64| {
            let (p, q) = if p >= q { (p, q) } else { (q, p) };
            self.m[p][q] += v;
        };
        for i in 0..nv1 {
            for j in 0..=i {
                add(self.idx1[i], self.idx1[j], s1[i][j]);
            }
        }
        for i in 0..nv2 {
            for j in 0..=i {
                add(self.idx2[i], self.idx2[j], s2[i][j]);
            }
        }
        for i in 0..nv1 {
            for j in 0..nv2 {
                add(self.idx1[i], self.idx2[j], s12[i][j]);
            }
        }
    }

    fn scatter(&self, mesh: &Mesh, scale: f64, dense: &mut [f64], n: usize) {
        let dofs: Vec<Option<usize>> = self.ids[..self.len].iter().map(|&v| mesh.dof(v)).collect();
        for p in 0..self.len {
            let Some(gp) = dofs[p] else { continue };
            for q in 0..=p {
                let Some(gq) = dofs[q] else { continue };
                let v = scale * self.m[p][q];
                let (i, j) = if gp <= gq { (gp, gq) } else { (gq, gp) };
                dense[i * n + j] += v;
            }
        }
    }
}

/// Stiffness contributions kept apart: the Ω×Ω interaction and the complement term.
/// Both already carry the kernel constant.
#[derive(Debug, Clone)]
pub struct StiffnessParts {
    pub interaction: SparseSymMatrix,
    pub complement: SparseSymMatrix,
}

impl StiffnessParts {
    pub fn total(&self) -> SparseSymMatrix {
        self.interaction.linear_combination(1.0, &self.complement, 1.0)
    }
}

/// Galerkin matrix of the fractional bilinear form on interior hat functions.
pub fn fractional_stiffness(mesh: &Mesh, kp: &KernelParams, qc: &QuadConfig) -> Result<SparseSymMatrix> {
    let (inter, comp, n) = stiffness_dense(mesh, kp, qc)?;
    let total: Vec<f64> = inter.iter().zip(&comp).map(|(a, b)| a + b).collect();
    Ok(SparseSymMatrix::from_dense(n, &total))
}

pub fn stiffness_parts(mesh: &Mesh, kp: &KernelParams, qc: &QuadConfig) -> Result<StiffnessParts> {
    let (inter, comp, n) = stiffness_dense(mesh, kp, qc)?;
    Ok(StiffnessParts {
        interaction: SparseSymMatrix::from_dense(n, &inter),
        complement: SparseSymMatrix::from_dense(n, &comp),
    })
}

fn check_kernel(mesh: &Mesh, kp: &KernelParams) -> Result<()> {
    if kp.n() != mesh.dim() {
        return Err(Error::Shape(format!("kernel dimension {} on a {}-dimensional mesh", kp.n(), mesh.dim())));
    }
    Ok(())
}

fn symmetrize(upper: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            upper[i * n + j] = upper[j * n + i];
        }
    }
}

fn stiffness_dense(mesh: &Mesh, kp: &KernelParams, qc: &QuadConfig) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    check_kernel(mesh, kp)?;
    qc.validate()?;
    let rules = Rules::new(qc)?;
    let n = mesh.n_dofs();
    let elems: Vec<Element> = (0..mesh.n_cells()).map(|c| Element::new(mesh, c)).collect();
    let regular: Vec<Points> = elems.iter().map(|e| Points::on(&Piece::of(e), e, &rules, true)).collect();
    let has_dof: Vec<bool> = elems.iter().map(|e| e.ids[..e.nv].iter().any(|&v| mesh.dof(v).is_some())).collect();
    let expo = kp.exponent();
    let s = kp.s();
    let c = kp.c_ns();

    let mut inter = vec![0.0; n * n];
    for (i, e1) in elems.iter().enumerate() {
        if has_dof[i] {
            let local = identical_pair(e1, s, &rules);
            local.scatter(mesh, 0.5 * c, &mut inter, n);
        }
        for (j, e2) in elems.iter().enumerate().skip(i + 1) {
            if !has_dof[i] && !has_dof[j] {
                continue;
            }
            let shared = e2.ids[..e2.nv].iter().filter(|id| e1.ids[..e1.nv].contains(id)).count();
            let mut local = PairLocal::new(e1, e2);
            match (e1.nv, shared) {
                (2, 1) => touching_1d(&mut local, e1, e2, s, &rules),
                (3, 1) => vertex_pair_2d(&mut local, e1, e2, s, &rules),
                (3, 2) => edge_pair_2d(&mut local, e1, e2, s, &rules),
                _ => {
                    let thr = qc.near_field_threshold;
                    let gap = dist(e1.centroid, e2.centroid) - e1.radius - e2.radius;
                    if gap >= thr * e1.diam.max(e2.diam) {
                        local.add_separated(e1.nv, e2.nv, &regular[i], &regular[j], expo);
                    } else {
                        near_pair(&mut local, e1, Piece::of(e1), e2, Piece::of(e2), qc, &rules, expo, 0);
                    }
                }
            }
            local.scatter(mesh, c, &mut inter, n);
        }
    }
    symmetrize(&mut inter, n);

    let mut comp = vec![0.0; n * n];
    let weights = complement_element_matrices(mesh, &elems, kp, qc, &rules);
    for (e, w) in elems.iter().zip(&weights) {
        for p in 0..e.nv {
            let Some(gp) = mesh.dof(e.ids[p]) else { continue };
            for q in 0..e.nv {
                let Some(gq) = mesh.dof(e.ids[q]) else { continue };
                if gp <= gq {
                    comp[gp * n + gq] += c * w[p][q];
                }
            }
        }
    }
    symmetrize(&mut comp, n);
    Ok((inter, comp, n))
}

const MAX_NEAR_DEPTH: usize = 8;

#[allow(clippy::too_many_arguments)]
fn near_pair(
    local: &mut PairLocal,
    e1: &Element,
    p1: Piece,
    e2: &Element,
    p2: Piece,
    qc: &QuadConfig,
    rules: &Rules,
    expo: f64,
    depth: usize,
) {
    let size = p1.diam().max(p2.diam());
    if depth >= MAX_NEAR_DEPTH || p1.distance(&p2) >= qc.near_field_threshold * size {
        let a = Points::on(&p1, e1, rules, true);
        let b = Points::on(&p2, e2, rules, true);
        local.add_separated(e1.nv, e2.nv, &a, &b, expo);
        return;
    }
    let c1 = if p1.diam() >= 0.5 * size { p1.children() } else { vec![p1] };
    let c2 = if p2.diam() >= 0.5 * size { p2.children() } else { vec![p2] };
    for a in &c1 {
        for b in &c2 {
            near_pair(local, e1, *a, e2, *b, qc, rules, expo, depth + 1);
        }
    }
}

/// Self-interaction of one element in closed form (1D) or as a smooth angular integral (2D).
fn identical_pair(e: &Element, s: f64, rules: &Rules) -> PairLocal {
    let mut local = PairLocal::new(e, e);
    if e.nv == 2 {
        let h = e.measure;
        let f = 2.0 * h.powf(3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
        for p in 0..2 {
            for q in 0..=p {
                local.m[p][q] = e.grad[p][0] * e.grad[q][0] * f;
            }
        }
        return local;
    }
    // Overlap area |T ∩ (T + r e)| = |T| (1 - r c(e))^2 with c(e) = Σ_k max(0, ∇λ_k·e).
    let mut cuts: Vec<f64> = Vec::with_capacity(7);
    for g in &e.grad {
        let a = g[1].atan2(g[0]);
        for off in [0.5 * PI, 1.5 * PI] {
            cuts.push((a + off).rem_euclid(2.0 * PI));
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.push(cuts[0] + 2.0 * PI);
    let f = e.measure * 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    let mut acc = [[0.0; 3]; 3];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        for (t, wt) in rules.line_singular.iter() {
            let th = a + (b - a) * t;
            let dir = [th.cos(), th.sin()];
            let proj: Vec<f64> = e.grad.iter().map(|g| g[0] * dir[0] + g[1] * dir[1]).collect();
            let cval: f64 = proj.iter().map(|&p| p.max(0.0)).sum();
            let weight = wt * (b - a) * cval.powf(2.0 * s - 2.0);
            for p in 0..3 {
                for q in 0..=p {
                    acc[p][q] += weight * proj[p] * proj[q];
                }
            }
        }
    }
    for p in 0..3 {
        for q in 0..=p {
            local.m[p][q] = f * acc[p][q];
        }
    }
    local
}

/// Vertex ordering placing the shared vertices first, in the order given.
fn order_with_shared(e: &Element, shared: &[usize]) -> [usize; 3] {
    let mut order = [0usize; 3];
    let mut k = 0;
    for &id in shared {
        order[k] = e.ids[..e.nv].iter().position(|&v| v == id).unwrap();
        k += 1;
    }
    for p in 0..e.nv {
        if !order[..k].contains(&p) {
            order[k] = p;
            k += 1;
        }
    }
    order
}

fn shared_ids(e1: &Element, e2: &Element) -> Vec<usize> {
    e1.ids[..e1.nv].iter().copied().filter(|id| e2.ids[..e2.nv].contains(id)).collect()
}

/// Intervals sharing one endpoint: the integrand is homogeneous of degree `1 - 2s`
/// in the distances to the shared vertex, so the radial variable integrates exactly.
fn touching_1d(local: &mut PairLocal, e1: &Element, e2: &Element, s: f64, rules: &Rules) {
    let shared = shared_ids(e1, e2);
    let o1 = order_with_shared(e1, &shared);
    let o2 = order_with_shared(e2, &shared);
    let f = e1.measure * e2.measure / (3.0 - 2.0 * s);
    let expo = 1.0 + 2.0 * s;
    for (eta, w) in rules.line_singular.iter() {
        for (a, b) in [(1.0, eta), (eta, 1.0)] {
            let x = e1.map(o1, [a, 0.0]);
            let y = e2.map(o2, [b, 0.0]);
            local.add_point(e1, e2, x, y, f * w, expo);
        }
    }
}

/// Triangles sharing one vertex. Splitting `T̂×T̂` by which of `|p|_1`, `|q|_1` is larger
/// and scaling out that variable leaves a smooth integral over `[0,1]×T̂`.
fn vertex_pair_2d(local: &mut PairLocal, e1: &Element, e2: &Element, s: f64, rules: &Rules) {
    let shared = shared_ids(e1, e2);
    let o1 = order_with_shared(e1, &shared);
    let o2 = order_with_shared(e2, &shared);
    let f = 4.0 * e1.measure * e2.measure / (4.0 - 2.0 * s);
    let expo = 2.0 + 2.0 * s;
    let tri = &rules.tri_singular;
    for (u, wu) in rules.line_singular.iter() {
        let edge = [1.0 - u, u];
        for (q, &wq) in tri.points.iter().zip(&tri.weights) {
            let w = f * wu * wq;
            local.add_point(e1, e2, e1.map(o1, edge), e2.map(o2, *q), w, expo);
            local.add_point(e1, e2, e1.map(o1, *q), e2.map(o2, edge), w, expo);
        }
    }
}

/// Triangles sharing an edge AB, with `x = A + ξ1 (B-A) + ξ2 (C1-A)` and
/// `y = A + η1 (B-A) + η2 (C2-A)`. The integrand depends on `(ξ1-η1, ξ2, η2)` only,
/// is homogeneous of degree `-2s` there, and the remaining variable contributes a
/// segment of length `(1 - λ c)_+`. Integration over `λ` is done exactly, leaving the
/// ℓ1 unit sphere, cut along the kinks of `c` into six triangles.
fn edge_pair_2d(local: &mut PairLocal, e1: &Element, e2: &Element, s: f64, rules: &Rules) {
    let shared = shared_ids(e1, e2);
    let o1 = order_with_shared(e1, &shared);
    let o2 = order_with_shared(e2, &shared);
    let f = 4.0 * e1.measure * e2.measure / ((3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    let expo = 2.0 + 2.0 * s;
    const PLUS: [[[f64; 2]; 3]; 3] = [
        [[0.0, 0.0], [1.0, 0.0], [0.5, 0.5]],
        [[0.0, 0.0], [0.5, 0.5], [0.0, 0.5]],
        [[0.0, 0.5], [0.5, 0.5], [0.0, 1.0]],
    ];
    let tri = &rules.tri_singular;
    for sign in [1.0, -1.0] {
        for piece in PLUS {
            // the negative half mirrors the cut across a = b
            let piece = if sign > 0.0 { piece } else { piece.map(|p| [p[1], p[0]]) };
            let [p0, p1, p2] = piece;
            let jac = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])).abs();
            for (r, &wr) in tri.points.iter().zip(&tri.weights) {
                let a = p0[0] + (p1[0] - p0[0]) * r[0] + (p2[0] - p0[0]) * r[1];
                let b = p0[1] + (p1[1] - p0[1]) * r[0] + (p2[1] - p0[1]) * r[1];
                let d = sign * (1.0 - a - b);
                let c = if d >= 0.0 { (1.0 - b).max(b) } else { a.max(1.0 - a) };
                let xi1 = d.max(0.0);
                let x = e1.map(o1, [xi1, a]);
                let y = e2.map(o2, [xi1 - d, b]);
                local.add_point(e1, e2, x, y, f * wr * jac * c.powf(2.0 * s - 3.0), expo);
            }
        }
    }
}

/// `ρ(x) = ∫_{Ω^c} |x-y|^{-n-2s} dy` for the continuous domain.
///
/// Closed form on an interval; on a disc the angular integral
/// `(1/2s) ∫ R(θ)^{-2s} dθ` of the exit distance is computed adaptively.
pub fn complement_weight(x: &[f64], domain: &Domain, kp: &KernelParams) -> Result<f64> {
    if x.len() != domain.dim() || kp.n() != domain.dim() {
        return Err(Error::Shape("point, domain and kernel dimensions differ".into()));
    }
    if !domain.contains_open(x) {
        return Err(Error::OutsideDomain { point: PointDisplay(x.to_vec()) });
    }
    let s = kp.s();
    match *domain {
        Domain::Interval { left, right } => Ok(interval_complement(x[0], left, right, s)),
        Domain::Disc { center, radius } => {
            let p = [x[0] - center[0], x[1] - center[1]];
            let q = radius * radius - p[0] * p[0] - p[1] * p[1];
            let exit = |th: f64| {
                let b = p[0] * th.cos() + p[1] * th.sin();
                -b + (b * b + q).sqrt()
            };
            let v = integrate_adaptive(|th| exit(th).powf(-2.0 * s), 0.0, 2.0 * PI, 0.0, 1e-12);
            Ok(v / (2.0 * s))
        }
    }
}

fn interval_complement(x: f64, left: f64, right: f64, s: f64) -> f64 {
    ((x - left).powf(-2.0 * s) + (right - x).powf(-2.0 * s)) / (2.0 * s)
}

/// `ρ` for the exterior of a convex polygon given counter-clockwise, in closed form.
///
/// Each edge at distance `d` contributes `d^{-2s} ∫ cos^{2s} φ dφ` over the angles
/// it subtends, measured from its normal; the antiderivative is an incomplete beta function.
pub fn polygon_complement_weight(x: [f64; 2], polygon: &[[f64; 2]], s: f64) -> f64 {
    let bnorm = beta(0.5, s + 0.5);
    let g = |phi: f64| {
        let sn = phi.sin();
        0.5 * sn.signum() * bnorm * beta_reg(0.5, s + 0.5, (sn * sn).min(1.0))
    };
    let m = polygon.len();
    let mut total = 0.0;
    for k in 0..m {
        let (a, b) = (polygon[k], polygon[(k + 1) % m]);
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = t[0].hypot(t[1]);
        let t = [t[0] / len, t[1] / len];
        // outward normal of a counter-clockwise polygon
        let nrm = [t[1], -t[0]];
        let d = (a[0] - x[0]) * nrm[0] + (a[1] - x[1]) * nrm[1];
        let ta = (a[0] - x[0]) * t[0] + (a[1] - x[1]) * t[1];
        let tb = (b[0] - x[0]) * t[0] + (b[1] - x[1]) * t[1];
        total += d.powf(-2.0 * s) * (g(tb.atan2(d)) - g(ta.atan2(d)));
    }
    total / (2.0 * s)
}

/// Element matrices `∫_T λ_p λ_q ρ` of the meshed domain's complement weight.
fn complement_element_matrices(
    mesh: &Mesh,
    elems: &[Element],
    kp: &KernelParams,
    qc: &QuadConfig,
    rules: &Rules,
) -> Vec<[[f64; 3]; 3]> {
    let s = kp.s();
    let mut out = vec![[[0.0; 3]; 3]; elems.len()];
    if mesh.dim() == 1 {
        let xs: Vec<f64> = (0..mesh.n_vertices()).map(|v| mesh.vertex(v)[0]).collect();
        let left = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let right = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let smooth = GaussRule::new(12).expect("order 12 is tabulated");
        for (e, m) in elems.iter().zip(out.iter_mut()) {
            let (x0, x1) = minmax(e.v[0][0], e.v[1][0]);
            for (end, dir) in [(left, 1.0), (right, -1.0)] {
                let t0 = dir * (x0 - end);
                let t1 = dir * (x1 - end);
                let (t0, t1) = minmax(t0, t1);
                if t0 == 0.0 {
                    // element touches this endpoint: exact power integrals in t = distance
                    power_moments(e, end, dir, t1, s, m);
                } else {
                    for (u, w) in smooth.iter() {
                        let x = x0 + (x1 - x0) * u;
                        let rho = (dir * (x - end)).powf(-2.0 * s) / (2.0 * s);
                        let l = e.lambda([x, 0.0]);
                        for p in 0..2 {
                            for q in 0..2 {
                                m[p][q] += w * (x1 - x0) * rho * l[p] * l[q];
                            }
                        }
                    }
                }
            }
        }
        return out;
    }
    let poly = mesh.boundary_polygon();
    for (c, (e, m)) in elems.iter().zip(out.iter_mut()).enumerate() {
        if e.ids.iter().take(3).all(|&v| mesh.dof(v).is_none()) {
            continue;
        }
        let d = mesh.cell_boundary_distance(c);
        complement_piece(Piece::of(e), e, d, &poly, s, qc.complement_depth, rules, m);
    }
    out
}

/// `∫ λ_p λ_q t^{-2s}/(2s)` over an interval touching the endpoint at `t = 0`.
fn power_moments(e: &Element, end: f64, dir: f64, h: f64, s: f64, m: &mut [[f64; 3]; 3]) {
    // λ_k(t) = α_k + β_k t with x = end + dir t
    let mut alpha = [0.0; 2];
    let mut beta_ = [0.0; 2];
    for k in 0..2 {
        alpha[k] = e.lambda([end, 0.0])[k];
        beta_[k] = e.grad[k][0] * dir;
    }
    for k in 0..2 {
        // exact zero at the boundary vertex keeps the t^{-2s} term integrable
        if e.v[k][0] == end {
            alpha[1 - k] = 0.0;
            alpha[k] = 1.0;
        }
    }
    let mom = |j: i32| h.powf(j as f64 + 1.0 - 2.0 * s) / (j as f64 + 1.0 - 2.0 * s);
    for p in 0..2 {
        for q in 0..2 {
            let c0 = alpha[p] * alpha[q];
            let c1 = alpha[p] * beta_[q] + alpha[q] * beta_[p];
            let c2 = beta_[p] * beta_[q];
            let mut v = c2 * mom(2);
            if c1 != 0.0 {
                v += c1 * mom(1);
            }
            if c0 != 0.0 {
                v += c0 * mom(0);
            }
            m[p][q] += v / (2.0 * s);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn complement_piece(
    piece: Piece,
    owner: &Element,
    dist_to_boundary: f64,
    poly: &[[f64; 2]],
    s: f64,
    depth: usize,
    rules: &Rules,
    m: &mut [[f64; 3]; 3],
) {
    if depth == 0 || dist_to_boundary >= piece.diam() {
        let pts = Points::on(&piece, owner, rules, false);
        for a in 0..pts.x.len() {
            let rho = polygon_complement_weight(pts.x[a], poly, s);
            let l = pts.lam[a];
            for p in 0..3 {
                for q in 0..3 {
                    m[p][q] += pts.w[a] * rho * l[p] * l[q];
                }
            }
        }
        return;
    }
    for child in piece.children() {
        let d = polygon_distance(&child, poly);
        complement_piece(child, owner, d, poly, s, depth - 1, rules, m);
    }
}

fn polygon_distance(piece: &Piece, poly: &[[f64; 2]]) -> f64 {
    let m = poly.len();
    let mut best = f64::INFINITY;
    for v in &piece.v {
        for k in 0..m {
            best = best.min(point_segment_distance(*v, poly[k], poly[(k + 1) % m]));
        }
    }
    best
}

/// Exact P1 mass matrix on interior dofs.
pub fn mass_matrix(mesh: &Mesh) -> SparseSymMatrix {
    let mut trip = Vec::new();
    mass_triplets(mesh, |v| mesh.dof(v), &mut trip);
    SparseSymMatrix::from_triplets(mesh.n_dofs(), &trip)
}

/// Exact P1 mass matrix on all vertices, boundary included.
pub fn mass_matrix_all(mesh: &Mesh) -> SparseSymMatrix {
    let mut trip = Vec::new();
    mass_triplets(mesh, Some, &mut trip);
    SparseSymMatrix::from_triplets(mesh.n_vertices(), &trip)
}

fn mass_triplets(mesh: &Mesh, index: impl Fn(usize) -> Option<usize>, trip: &mut Vec<(usize, usize, f64)>) {
    let k = mesh.dim() + 1;
    // ∫ λ_p λ_q = |T| (1 + δ_pq) / ((n+1)(n+2))
    let denom = (k * (k + 1)) as f64;
    for c in 0..mesh.n_cells() {
        let meas = mesh.cell_measure(c);
        let cell = mesh.cell(c);
        for (p, &vp) in cell.iter().enumerate() {
            let Some(i) = index(vp) else { continue };
            for (q, &vq) in cell.iter().enumerate() {
                let Some(j) = index(vq) else { continue };
                let f = if p == q { 2.0 } else { 1.0 };
                trip.push((i, j, meas * f / denom));
            }
        }
    }
}

/// `F_i = ∫_Ω g φ_i` by Gauss quadrature of the given order on every cell.
pub fn load_vector(mesh: &Mesh, g: impl Fn(&[f64]) -> f64, order: usize) -> Result<Vec<f64>> {
    let mut f = vec![0.0; mesh.n_dofs()];
    load_into(mesh, &g, order, &mut f)?;
    Ok(f)
}

pub(crate) fn load_into(mesh: &Mesh, g: &impl Fn(&[f64]) -> f64, order: usize, f: &mut [f64]) -> Result<()> {
    let qc = QuadConfig { gauss_order_load: order, ..QuadConfig::default() };
    qc.validate()?;
    let rules = Rules::new(&qc)?;
    let dim = mesh.dim();
    for c in 0..mesh.n_cells() {
        let e = Element::new(mesh, c);
        if e.ids[..e.nv].iter().all(|&v| mesh.dof(v).is_none()) {
            continue;
        }
        let pts = Points::on(&Piece::of(&e), &e, &rules, false);
        for a in 0..pts.x.len() {
            let val = g(&pts.x[a][..dim]);
            if !val.is_finite() {
                return Err(Error::NonFinite(format!("load data at {}", PointDisplay(pts.x[a][..dim].to_vec()))));
            }
            for k in 0..e.nv {
                if let Some(d) = mesh.dof(e.ids[k]) {
                    f[d] += pts.w[a] * val * pts.lam[a][k];
                }
            }
        }
    }
    Ok(())
}

/// Quadrature point inside a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub weight: f64,
    /// Barycentric coordinates with respect to the cell's vertices.
    pub lambda: [f64; 3],
}

/// Per-cell quadrature exact for polynomials of degree `2 order - 1` (intervals)
/// or `order` at least (triangles).
pub fn cell_quadrature(mesh: &Mesh, order: usize) -> Result<Vec<Vec<QuadPoint>>> {
    let qc = QuadConfig { gauss_order_load: order, ..QuadConfig::default() };
    qc.validate()?;
    let rules = Rules::new(&qc)?;
    Ok((0..mesh.n_cells())
        .map(|c| {
            let e = Element::new(mesh, c);
            let pts = Points::on(&Piece::of(&e), &e, &rules, false);
            (0..pts.x.len()).map(|a| QuadPoint { x: pts.x[a], weight: pts.w[a], lambda: pts.lam[a] }).collect()
        })
        .collect())
}

/// Writes `i j value` lines (0-based, row-major order) for every stored entry.
pub fn write_matrix_coo(a: &SparseSymMatrix, mut out: impl Write) -> Result<()> {
    let mut s = String::new();
    for i in 0..a.dim() {
        for (j, v) in a.row(i) {
            s.push_str(&format!("{i} {j} {v:e}\n"));
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn normalization_constant() {
        // C(1, 1/2) = 1/π and C(2, 1/2) = 1/(2π)
        assert!((KernelParams::normalization(1, 0.5) - 1.0 / PI).abs() < 1e-15);
        assert!((KernelParams::normalization(2, 0.5) - 0.5 / PI).abs() < 1e-15);
        let kp = KernelParams::new(2, 0.3).unwrap();
        assert!((kp.c_ns() / KernelParams::normalization(2, 0.3) - 1.0).abs() < 1e-14);
        assert!(KernelParams::new(1, 1.0).is_err());
        assert!(KernelParams::new(1, 0.0).is_err());
    }

    #[test]
    fn complement_weight_closed_forms() {
        let kp = KernelParams::new(1, 0.5).unwrap();
        let dom = Domain::interval(-1.0, 1.0);
        assert!((complement_weight(&[0.0], &dom, &kp).unwrap() - 2.0).abs() < 1e-15);
        let kp2 = KernelParams::new(2, 0.5).unwrap();
        let disc = Domain::disc(1.0);
        assert!((complement_weight(&[0.0, 0.0], &disc, &kp2).unwrap() - 2.0 * PI).abs() < 1e-10);
        assert!(complement_weight(&[1.0, 0.0], &disc, &kp2).is_err());
    }

    #[test]
    fn polygon_weight_approaches_disc() {
        let n = 2000;
        let poly: Vec<[f64; 2]> =
            (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).map(|t| [t.cos(), t.sin()]).collect();
        let kp = KernelParams::new(2, 0.3).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.2], [0.0, 0.7]] {
            let a = polygon_complement_weight(x, &poly, 0.3);
            let b = complement_weight(&x, &Domain::disc(1.0), &kp).unwrap();
            assert!((a / b - 1.0).abs() < 1e-4, "{a} {b}");
        }
    }

    #[test]
    fn polygon_weight_of_square_at_center() {
        // s = 1/2: each edge at distance 1 subtends [-π/4, π/4], ∫cos = √2
        let sq = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let v = polygon_complement_weight([0.0, 0.0], &sq, 0.5);
        assert!((v - 4.0 * 2f64.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mass_matrix_entries() {
        let m = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0).unwrap();
        let mm = mass_matrix(&m);
        assert!((mm.get(2, 2) - 2.0 * 0.25 / 3.0).abs() < 1e-15);
        assert!((mm.get(2, 3) - 0.25 / 6.0).abs() < 1e-15);
        let all = mass_matrix_all(&m);
        let total: f64 = (0..all.dim()).flat_map(|i| all.row(i).map(|(_, v)| v).collect::<Vec<_>>()).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn load_vector_exactness() {
        let m = build_mesh(Domain::interval(-1.0, 1.0), 0.25, 1.0).unwrap();
        let f = load_vector(&m, |_| 1.0, 2).unwrap();
        assert!(f.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let z = load_vector(&m, |_| 0.0, 2).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        // ∫ x φ_i = h x_i for a linear g on a uniform mesh
        let f = load_vector(&m, |x| x[0], 2).unwrap();
        for d in 0..m.n_dofs() {
            let xi = m.vertex(m.dof_vertex(d))[0];
            assert!((f[d] - 0.25 * xi).abs() < 1e-15);
        }
        assert!(load_vector(&m, |_| f64::NAN, 2).is_err());
    }

    #[test]
    fn stiffness_is_exactly_symmetric() {
        for mesh in [
            build_mesh(Domain::interval(-1.0, 1.0), 0.2, 1.5).unwrap(),
            build_mesh(Domain::disc(1.0), 0.34, 1.0).unwrap(),
        ] {
            let kp = KernelParams::new(mesh.dim(), 0.6).unwrap();
            let k = fractional_stiffness(&mesh, &kp, &QuadConfig::default()).unwrap();
            assert_eq!(k.asymmetry(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_quadrature() {
        let mesh = build_mesh(Domain::interval(-1.0, 1.0), 0.5, 1.0).unwrap();
        let kp = KernelParams::new(1, 0.5).unwrap();
        let qc = QuadConfig { gauss_order_singular: MAX_GAUSS_ORDER + 1, ..QuadConfig::default() };
        assert!(matches!(fractional_stiffness(&mesh, &kp, &qc), Err(Error::QuadratureOrder { .. })));
        let kp2 = KernelParams::new(2, 0.5).unwrap();
        assert!(fractional_stiffness(&mesh, &kp2, &QuadConfig::default()).is_err());
    }
}
