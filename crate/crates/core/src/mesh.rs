//! Quasi-uniform and boundary-graded simplicial meshes of an interval and a disc.
//!
//! One-dimensional meshes partition `(left, right)` into intervals; two-dimensional
//! meshes triangulate a disc ring by ring, with every vertex of a ring placed
//! exactly on its circle. Boundary vertices carry homogeneous Dirichlet flags, and
//! discrete functions are understood as extended by zero outside the mesh.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Meshes whose shape-regularity constant exceeds this value are rejected.
pub const MAX_SHAPE_CONSTANT: f64 = 10.0;

/// Continuous domain the mesh approximates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { left: f64, right: f64 },
    Disc { center: [f64; 2], radius: f64 },
}

impl Domain {
    pub fn interval(left: f64, right: f64) -> Self {
        Domain::Interval { left, right }
    }

    pub fn unit_interval_symmetric() -> Self {
        Domain::Interval { left: -1.0, right: 1.0 }
    }

    pub fn disc(radius: f64) -> Self {
        Domain::Disc { center: [0.0, 0.0], radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Disc { .. } => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { left, right } => right - left,
            Domain::Disc { radius, .. } => PI * radius * radius,
        }
    }

    /// Distance from `x` to the boundary, negative outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match *self {
            Domain::Interval { left, right } => (x[0] - left).min(right - x[0]),
            Domain::Disc { center, radius } => {
                radius - ((x[0] - center[0]).hypot(x[1] - center[1]))
            }
        }
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 0.0
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { left, right } => {
                if !(left.is_finite() && right.is_finite() && right > left) {
                    return Err(Error::param("domain", format!("degenerate interval ({left}, {right})")));
                }
            }
            Domain::Disc { center, radius } => {
                if !(radius.is_finite() && radius > 0.0 && center.iter().all(|c| c.is_finite())) {
                    return Err(Error::param("domain", format!("degenerate disc of radius {radius}")));
                }
            }
        }
        Ok(())
    }
}

/// Simplicial mesh with Dirichlet boundary flags.
///
/// Vertex coordinates and cell connectivity are stored flat: vertex `i` occupies
/// `coords[i * dim..(i + 1) * dim]` and cell `c` occupies
/// `cells[c * (dim + 1)..(c + 1) * (dim + 1)]`. Interior vertices are numbered
/// consecutively as degrees of freedom.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    boundary: Vec<bool>,
    domain: Domain,
    kappa: f64,
    target_h: f64,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    boundary_loop: Vec<usize>,
    sigma: f64,
}

/// Summary geometry of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub h_max: f64,
    pub h_min: f64,
    pub n_vertices: usize,
    pub n_interior_dofs: usize,
    pub n_cells: usize,
    pub sigma: f64,
    /// Smallest and largest `h_K / h^kappa` over cells touching the boundary.
    pub boundary_grading: (f64, f64),
}

impl Mesh {
    /// Assembles a mesh from raw parts and checks every structural invariant.
    pub fn from_parts(
        dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        boundary: Vec<bool>,
        domain: Domain,
        kappa: f64,
        target_h: f64,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {dim}")));
        }
        if domain.dim() != dim {
            return Err(Error::InvalidMesh("domain dimension does not match mesh dimension".into()));
        }
        if coords.len() % dim != 0 || cells.len() % (dim + 1) != 0 {
            return Err(Error::InvalidMesh("coordinate or connectivity array has a ragged length".into()));
        }
        let nv = coords.len() / dim;
        if boundary.len() != nv {
            return Err(Error::InvalidMesh("boundary flags do not match the vertex count".into()));
        }
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        if let Some(&bad) = cells.iter().find(|&&v| v >= nv) {
            return Err(Error::InvalidMesh(format!("cell references vertex {bad} but only {nv} exist")));
        }
        let mut dof_of_vertex = vec![None; nv];
        let mut vertex_of_dof = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let mut mesh = Mesh {
            dim,
            coords,
            cells,
            boundary,
            domain,
            kappa,
            target_h,
            dof_of_vertex,
            vertex_of_dof,
            boundary_loop: Vec::new(),
            sigma: 1.0,
        };
        mesh.check_geometry()?;
        Ok(mesh)
    }

    fn check_geometry(&mut self) -> Result<()> {
        let mut total = 0.0;
        let mut sigma: f64 = 1.0;
        for c in 0..self.n_cells() {
            let m = self.signed_measure(c);
            if !(m > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} has non-positive oriented measure {m}")));
            }
            total += m;
            sigma = sigma.max(self.cell_diameter(c) / self.cell_inscribed_diameter(c));
        }
        if sigma > MAX_SHAPE_CONSTANT {
            return Err(Error::InvalidMesh(format!(
                "shape-regularity constant {sigma:.3} exceeds {MAX_SHAPE_CONSTANT}"
            )));
        }
        self.sigma = sigma;

        for v in 0..self.n_vertices() {
            if self.boundary[v] {
                let d = self.domain.signed_distance(self.vertex(v)).abs();
                let scale = match self.domain {
                    Domain::Interval { left, right } => right - left,
                    Domain::Disc { radius, .. } => radius,
                };
                if d > 1e-10 * scale.max(1.0) {
                    return Err(Error::InvalidMesh(format!(
                        "boundary vertex {v} is {d:.3e} away from the domain boundary"
                    )));
                }
            }
        }

        let covered = match self.dim {
            1 => {
                let xs = self.coords.iter().copied();
                let lo = xs.clone().fold(f64::INFINITY, f64::min);
                let hi = xs.fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            }
            _ => {
                self.boundary_loop = self.trace_boundary_loop()?;
                let poly: Vec<[f64; 2]> = self.boundary_loop.iter().map(|&v| self.point2(v)).collect();
                polygon_area(&poly)
            }
        };
        if (total - covered).abs() > 1e-12 * covered.abs().max(1.0) {
            return Err(Error::InvalidMesh(format!(
                "cells cover measure {total} but the mesh domain has measure {covered}"
            )));
        }
        Ok(())
    }

    /// Closed counter-clockwise loop of boundary vertices, from edges owned by one cell.
    fn trace_boundary_loop(&self) -> Result<Vec<usize>> {
        use std::collections::HashMap;
        let mut edges: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for c in 0..self.n_cells() {
            let t = self.cell(c);
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = edges.entry(key).or_insert((0, a, b));
                e.0 += 1;
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for (_, &(count, a, b)) in edges.iter() {
            if count == 1 {
                if next.insert(a, b).is_some() {
                    return Err(Error::InvalidMesh("boundary is not a simple closed curve".into()));
                }
            } else if count > 2 {
                return Err(Error::InvalidMesh("edge shared by more than two cells".into()));
            }
        }
        let start = *next.keys().min().ok_or_else(|| Error::InvalidMesh("mesh has no boundary".into()))?;
        let mut lp = vec![start];
        let mut cur = next[&start];
        while cur != start {
            if lp.len() > next.len() {
                return Err(Error::InvalidMesh("boundary does not close".into()));
            }
            lp.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::InvalidMesh("boundary does not close".into()))?;
        }
        if lp.len() != next.len() {
            return Err(Error::InvalidMesh("boundary consists of several loops".into()));
        }
        for &v in &lp {
            if !self.boundary[v] {
                return Err(Error::InvalidMesh(format!("vertex {v} lies on the mesh boundary but is not flagged")));
            }
        }
        Ok(lp)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn target_h(&self) -> f64 {
        self.target_h
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    /// Vertex as a planar point; 1D meshes are embedded on the x-axis.
    pub fn point2(&self, v: usize) -> [f64; 2] {
        let p = self.vertex(v);
        [p[0], if self.dim == 2 { p[1] } else { 0.0 }]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn dof(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn dof_vertex(&self, d: usize) -> usize {
        self.vertex_of_dof[d]
    }

    /// Boundary polygon (2D) in counter-clockwise order.
    pub fn boundary_polygon(&self) -> Vec<[f64; 2]> {
        self.boundary_loop.iter().map(|&v| self.point2(v)).collect()
    }

    pub fn shape_constant(&self) -> f64 {
        self.sigma
    }

    fn signed_measure(&self, c: usize) -> f64 {
        let t = self.cell(c);
        match self.dim {
            1 => self.vertex(t[1])[0] - self.vertex(t[0])[0],
            _ => {
                let (a, b, cc) = (self.point2(t[0]), self.point2(t[1]), self.point2(t[2]));
                0.5 * ((b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]))
            }
        }
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        self.signed_measure(c).abs()
    }

    pub fn cell_measures(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).collect()
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let t = self.cell(c);
        match self.dim {
            1 => self.cell_measure(c),
            _ => {
                let p: Vec<[f64; 2]> = t.iter().map(|&v| self.point2(v)).collect();
                dist2(p[0], p[1]).max(dist2(p[1], p[2])).max(dist2(p[2], p[0]))
            }
        }
    }

    /// Diameter of the largest inscribed ball.
    pub fn cell_inscribed_diameter(&self, c: usize) -> f64 {
        let t = self.cell(c);
        match self.dim {
            1 => self.cell_measure(c),
            _ => {
                let p: Vec<[f64; 2]> = t.iter().map(|&v| self.point2(v)).collect();
                let perimeter = dist2(p[0], p[1]) + dist2(p[1], p[2]) + dist2(p[2], p[0]);
                4.0 * self.cell_measure(c) / perimeter
            }
        }
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let t = self.cell(c);
        let k = t.len() as f64;
        let mut m = [0.0; 2];
        for &v in t {
            let p = self.point2(v);
            m[0] += p[0] / k;
            m[1] += p[1] / k;
        }
        m
    }

    pub fn cell_touches_boundary(&self, c: usize) -> bool {
        self.cell(c).iter().any(|&v| self.boundary[v])
    }

    /// Cell containing `x` together with the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        for c in 0..self.n_cells() {
            let lam = self.barycentric(c, x);
            if lam[..=self.dim].iter().all(|&l| l >= -tol) {
                return Some((c, lam));
            }
        }
        None
    }

    /// Barycentric coordinates of `x` with respect to cell `c` (third entry unused in 1D).
    pub fn barycentric(&self, c: usize, x: &[f64]) -> [f64; 3] {
        let t = self.cell(c);
        match self.dim {
            1 => {
                let (a, b) = (self.vertex(t[0])[0], self.vertex(t[1])[0]);
                let l1 = (x[0] - a) / (b - a);
                [1.0 - l1, l1, 0.0]
            }
            _ => {
                let (a, b, cc) = (self.point2(t[0]), self.point2(t[1]), self.point2(t[2]));
                let det = (b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]);
                let l1 = ((x[0] - a[0]) * (cc[1] - a[1]) - (x[1] - a[1]) * (cc[0] - a[0])) / det;
                let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / det;
                [1.0 - l1 - l2, l1, l2]
            }
        }
    }

    /// Value at `x` of the finite element function with interior coefficients `dofs`.
    pub fn evaluate(&self, dofs: &[f64], x: &[f64]) -> f64 {
        match self.locate(x) {
            Some((c, lam)) => self
                .cell(c)
                .iter()
                .zip(lam)
                .map(|(&v, l)| self.dof(v).map_or(0.0, |d| l * dofs[d]))
                .sum(),
            None => 0.0,
        }
    }

    /// Nodal interpolant of `f` on interior vertices.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| f(self.vertex(v))).collect()
    }

    /// Smallest Euclidean distance from cell `c` to the mesh boundary vertices/segments.
    pub(crate) fn cell_boundary_distance(&self, c: usize) -> f64 {
        if self.cell_touches_boundary(c) {
            return 0.0;
        }
        let t = self.cell(c);
        match self.dim {
            1 => {
                let d = |x: f64| self.domain.signed_distance(&[x]).max(0.0);
                t.iter().map(|&v| d(self.vertex(v)[0])).fold(f64::INFINITY, f64::min)
            }
            _ => {
                let poly = &self.boundary_loop;
                let mut best = f64::INFINITY;
                for &v in t {
                    let p = self.point2(v);
                    for k in 0..poly.len() {
                        let a = self.point2(poly[k]);
                        let b = self.point2(poly[(k + 1) % poly.len()]);
                        best = best.min(point_segment_distance(p, a, b));
                    }
                }
                best
            }
        }
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }

    /// Writes the plain-text mesh format (`DIM`, `VERTICES`, `CELLS`, `BOUNDARY` sections).
    pub fn write_text(&self, mut out: impl Write) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "DIM {}", self.dim).unwrap();
        writeln!(s, "VERTICES {}", self.n_vertices()).unwrap();
        for v in 0..self.n_vertices() {
            let line: Vec<String> = self.vertex(v).iter().map(|x| format!("{x:?}")).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        writeln!(s, "CELLS {}", self.n_cells()).unwrap();
        for c in 0..self.n_cells() {
            let line: Vec<String> = self.cell(c).iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        writeln!(s, "BOUNDARY").unwrap();
        for v in (0..self.n_vertices()).filter(|&v| self.boundary[v]) {
            writeln!(s, "{v}").unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the plain-text mesh format. The domain is inferred from the geometry:
    /// the vertex range in 1D, the origin-centred disc through the boundary vertices in 2D.
    pub fn read_text(input: impl BufRead) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: "<mesh>".into(), line, message };
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<(usize, Option<usize>)> {
            let (n, l) = it.next().ok_or_else(|| err(lines.len(), format!("missing `{key}` section")))?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(n + 1, format!("expected `{key}`")));
            }
            let count = parts
                .next()
                .map(|p| p.parse::<usize>().map_err(|e| err(n + 1, e.to_string())))
                .transpose()?;
            Ok((n + 1, count))
        };
        let (line, dim) = header("DIM")?;
        let dim = dim.ok_or_else(|| err(line, "missing dimension".into()))?;
        let (line, nv) = header("VERTICES")?;
        let nv = nv.ok_or_else(|| err(line, "missing vertex count".into()))?;
        let mut coords = Vec::with_capacity(nv * dim);
        let mut rest = lines.iter().enumerate().skip(line);
        for _ in 0..nv {
            let (n, l) = rest.next().ok_or_else(|| err(lines.len(), "truncated vertex list".into()))?;
            for p in l.split_whitespace() {
                coords.push(p.parse::<f64>().map_err(|e| err(n + 1, e.to_string()))?);
            }
        }
        let (n, l) = rest.next().ok_or_else(|| err(lines.len(), "missing `CELLS` section".into()))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some("CELLS") {
            return Err(err(n + 1, "expected `CELLS`".into()));
        }
        let nc: usize = parts
            .next()
            .ok_or_else(|| err(n + 1, "missing cell count".into()))?
            .parse()
            .map_err(|e: std::num::ParseIntError| err(n + 1, e.to_string()))?;
        let mut cells = Vec::with_capacity(nc * (dim + 1));
        for _ in 0..nc {
            let (n, l) = rest.next().ok_or_else(|| err(lines.len(), "truncated cell list".into()))?;
            for p in l.split_whitespace() {
                cells.push(p.parse::<usize>().map_err(|e| err(n + 1, e.to_string()))?);
            }
        }
        let (n, l) = rest.next().ok_or_else(|| err(lines.len(), "missing `BOUNDARY` section".into()))?;
        if l.trim() != "BOUNDARY" {
            return Err(err(n + 1, "expected `BOUNDARY`".into()));
        }
        let mut boundary = vec![false; nv];
        for (n, l) in rest {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            let v: usize = l.parse().map_err(|e: std::num::ParseIntError| err(n + 1, e.to_string()))?;
            *boundary
                .get_mut(v)
                .ok_or_else(|| err(n + 1, format!("boundary vertex {v} out of range")))? = true;
        }
        if coords.len() != nv * dim {
            return Err(err(line, "vertex lines have the wrong number of coordinates".into()));
        }
        let domain = match dim {
            1 => {
                let lo = coords.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Domain::interval(lo, hi)
            }
            2 => {
                let r = (0..nv)
                    .filter(|&v| boundary[v])
                    .map(|v| coords[2 * v].hypot(coords[2 * v + 1]))
                    .fold(0.0, f64::max);
                Domain::disc(r)
            }
            d => return Err(err(1, format!("unsupported dimension {d}"))),
        };
        Mesh::from_parts(dim, coords, cells, boundary, domain, 1.0, f64::NAN)
    }

    /// Exact structural equality (bitwise on coordinates).
    pub fn same_geometry(&self, other: &Mesh) -> bool {
        self.dim == other.dim
            && self.cells == other.cells
            && self.boundary == other.boundary
            && self.coords.len() == other.coords.len()
            && self.coords.iter().zip(&other.coords).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

fn validate_request(target_h: f64, kappa: f64) -> Result<()> {
    if !(target_h.is_finite() && target_h > 0.0) {
        return Err(Error::param("target_h", format!("must be positive, got {target_h}")));
    }
    if !(1.0..=2.0).contains(&kappa) {
        return Err(Error::param("kappa", format!("must lie in [1, 2], got {kappa}")));
    }
    Ok(())
}

/// Builds a mesh of `domain` with mesh parameter `target_h` and grading exponent `kappa`.
///
/// For `kappa = 1` the mesh is quasi-uniform. For `kappa > 1` cells touching the
/// boundary have size about `target_h^kappa`, and interior cells about
/// `target_h * dist^((kappa - 1) / kappa)`.
pub fn build_mesh(domain: Domain, target_h: f64, kappa: f64) -> Result<Mesh> {
    validate_request(target_h, kappa)?;
    domain.validate()?;
    match domain {
        Domain::Interval { left, right } => build_interval(left, right, target_h, kappa),
        Domain::Disc { center, radius } => build_disc(center, radius, target_h, kappa),
    }
}

fn cells_for(length: f64, h: f64) -> usize {
    ((length / h) + 1e-9).floor().max(1.0) as usize
}

fn build_interval(left: f64, right: f64, h: f64, kappa: f64) -> Result<Mesh> {
    let len = right - left;
    let xs: Vec<f64> = if kappa == 1.0 {
        let n = cells_for(len, h);
        (0..=n).map(|i| if i == n { right } else { left + len * i as f64 / n as f64 }).collect()
    } else {
        let half = 0.5 * len;
        let m = cells_for(half, h);
        let mid = left + half;
        let mut xs = Vec::with_capacity(2 * m + 1);
        for i in 0..=m {
            xs.push(left + half * (i as f64 / m as f64).powf(kappa));
        }
        for i in (0..m).rev() {
            xs.push(right - half * (i as f64 / m as f64).powf(kappa));
        }
        xs[m] = mid;
        xs
    };
    interval_from_nodes(&xs, kappa, h)
}

/// One-dimensional mesh through the given strictly increasing nodes.
pub fn interval_from_nodes(xs: &[f64], kappa: f64, target_h: f64) -> Result<Mesh> {
    if xs.len() < 2 {
        return Err(Error::InvalidMesh("need at least two nodes".into()));
    }
    let n = xs.len() - 1;
    let cells: Vec<usize> = (0..n).flat_map(|i| [i, i + 1]).collect();
    let mut boundary = vec![false; n + 1];
    boundary[0] = true;
    boundary[n] = true;
    Mesh::from_parts(1, xs.to_vec(), cells, boundary, Domain::interval(xs[0], xs[n]), kappa, target_h)
}

fn build_disc(center: [f64; 2], radius: f64, h: f64, kappa: f64) -> Result<Mesh> {
    let m = cells_for(radius, h);
    let radii: Vec<f64> = (0..=m)
        .map(|j| {
            if j == m {
                radius
            } else {
                radius * (1.0 - (1.0 - j as f64 / m as f64).powf(kappa))
            }
        })
        .collect();
    let counts: Vec<usize> = (1..=m)
        .map(|j| {
            if kappa == 1.0 {
                6 * j
            } else {
                let gap_in = radii[j] - radii[j - 1];
                let gap = if j < m { 0.5 * (gap_in + radii[j + 1] - radii[j]) } else { gap_in };
                ((2.0 * PI * radii[j] / gap).round() as usize).max(6)
            }
        })
        .collect();
    disc_from_rings(center, &radii[1..], &counts, kappa, h)
}

/// Disc mesh made of concentric rings around a centre vertex.
///
/// Ring `j` carries `counts[j]` vertices at radius `radii[j]`, the first at angle
/// zero. Consecutive rings are stitched by merging their vertices in angular order.
pub fn disc_from_rings(
    center: [f64; 2],
    radii: &[f64],
    counts: &[usize],
    kappa: f64,
    target_h: f64,
) -> Result<Mesh> {
    if radii.is_empty() || radii.len() != counts.len() {
        return Err(Error::InvalidMesh("need one vertex count per ring".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::InvalidMesh("ring radii must increase strictly".into()));
    }
    if counts.iter().any(|&c| c < 3) {
        return Err(Error::InvalidMesh("each ring needs at least three vertices".into()));
    }
    let radius = *radii.last().unwrap();
    let mut coords = vec![center[0], center[1]];
    let mut rings: Vec<Vec<(usize, f64)>> = Vec::with_capacity(radii.len());
    for (&r, &n) in radii.iter().zip(counts) {
        let mut ring = Vec::with_capacity(n);
        for i in 0..n {
            let theta = 2.0 * PI * i as f64 / n as f64;
            ring.push((coords.len() / 2, theta));
            coords.push(center[0] + r * theta.cos());
            coords.push(center[1] + r * theta.sin());
        }
        rings.push(ring);
    }
    let mut cells = Vec::new();
    let mut push = |a: usize, b: usize, c: usize, coords: &[f64]| {
        let area = (coords[2 * b] - coords[2 * a]) * (coords[2 * c + 1] - coords[2 * a + 1])
            - (coords[2 * b + 1] - coords[2 * a + 1]) * (coords[2 * c] - coords[2 * a]);
        if area > 0.0 {
            cells.extend([a, b, c]);
        } else {
            cells.extend([a, c, b]);
        }
    };
    let first = &rings[0];
    for i in 0..first.len() {
        push(0, first[i].0, first[(i + 1) % first.len()].0, &coords);
    }
    for w in rings.windows(2) {
        let (inner, outer) = (&w[0], &w[1]);
        let (na, nb) = (inner.len(), outer.len());
        let angle = |ring: &Vec<(usize, f64)>, i: usize| {
            if i == ring.len() {
                2.0 * PI
            } else {
                ring[i].1
            }
        };
        let (mut i, mut k) = (0, 0);
        while i < na || k < nb {
            let advance_inner = if i == na {
                false
            } else if k == nb {
                true
            } else {
                angle(inner, i + 1) <= angle(outer, k + 1)
            };
            if advance_inner {
                push(inner[i].0, outer[k % nb].0, inner[(i + 1) % na].0, &coords);
                i += 1;
            } else {
                push(inner[i % na].0, outer[k].0, outer[(k + 1) % nb].0, &coords);
                k += 1;
            }
        }
    }
    let nv = coords.len() / 2;
    let mut boundary = vec![false; nv];
    for &(v, _) in rings.last().unwrap() {
        boundary[v] = true;
    }
    Mesh::from_parts(2, coords, cells, boundary, Domain::Disc { center, radius }, kappa, target_h)
}

/// Geometric summary of a mesh.
pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let diam: Vec<f64> = (0..mesh.n_cells()).map(|c| mesh.cell_diameter(c)).collect();
    let h_max = diam.iter().copied().fold(0.0, f64::max);
    let h_min = diam.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = mesh.target_h.powf(mesh.kappa);
    let mut grading = (f64::INFINITY, 0.0_f64);
    for c in (0..mesh.n_cells()).filter(|&c| mesh.cell_touches_boundary(c)) {
        let r = diam[c] / scale;
        grading = (grading.0.min(r), grading.1.max(r));
    }
    MeshStats {
        h_max,
        h_min,
        n_vertices: mesh.n_vertices(),
        n_interior_dofs: mesh.n_dofs(),
        n_cells: mesh.n_cells(),
        sigma: mesh.sigma,
        boundary_grading: grading,
    }
}
