//! Brute-force evaluation of the fractional stiffness matrix for small meshes.
//!
//! Works on the full-space form directly: for each outer point `x` the inner
//! integral over `y ∈ ℝⁿ` is taken in polar coordinates around `x`. Along a ray
//! the hat-function differences are piecewise linear in the radius, so every
//! radial piece is integrated in closed form, including the tail beyond the
//! domain. The angular and outer integrals are adaptive. Nothing here is shared
//! with the element-pair assembly, which makes it usable as an independent check.

use std::f64::consts::PI;

use crate::assembly::{Element, KernelParams};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{GaussRule, G7_WEIGHTS, GK_NODES, GK_WEIGHTS};

/// Dense matrix `A(φ_i, φ_j)` over interior dofs, row-major.
///
/// `tol` is a tolerance relative to the diagonal scale `C h^{n-2s}`. In 1D the outer
/// integral is adaptive; in 2D each cell is split into three triangles from its
/// centroid and integrated by a tensor Gauss rule graded toward the cell's edges,
/// where the outer integrand behaves like `dist^{2-2s}`. `1e-7` is a sensible choice.
pub fn reference_stiffness(mesh: &Mesh, kp: &KernelParams, tol: f64) -> Result<Vec<f64>> {
    if kp.n() != mesh.dim() {
        return Err(Error::Shape("kernel and mesh dimensions differ".into()));
    }
    let n = mesh.n_dofs();
    if n > 64 {
        return Err(Error::param("mesh", "the reference evaluation is meant for at most 64 dofs"));
    }
    let ctx = Ctx::new(mesh, kp.s(), tol);
    let mut total = vec![0.0; n * n];
    if mesh.dim() == 1 {
        let h = (0..mesh.n_cells()).map(|c| mesh.cell_diameter(c)).fold(0.0, f64::max);
        let abs_tol = tol * h.powf(1.0 - 2.0 * kp.s()) / mesh.n_cells() as f64;
        for c in 0..mesh.n_cells() {
            let e = &ctx.elems[c];
            let (a, b) = (e.v[0][0], e.v[1][0]);
            let mut f = |x: f64, out: &mut [f64]| ctx.inner([x, 0.0], c, out);
            let part = adaptive_vec(&mut f, a.min(b), a.max(b), n * n, abs_tol, 0);
            for (t, p) in total.iter_mut().zip(&part) {
                *t += p;
            }
        }
    } else {
        let order = graded_order(tol);
        let rule = GaussRule::new(order)?;
        let mut buf = vec![0.0; n * n];
        for c in 0..mesh.n_cells() {
            for (x, w) in graded_points(&ctx.elems[c], &rule) {
                ctx.inner(x, c, &mut buf);
                for (t, v) in total.iter_mut().zip(&buf) {
                    *t += w * v;
                }
            }
        }
    }
    let half_c = 0.5 * kp.c_ns();
    for v in total.iter_mut() {
        *v *= half_c;
    }
    // the outer integrand is symmetric in (i, j); average out the roundoff
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (total[i * n + j] + total[j * n + i]);
            total[i * n + j] = m;
            total[j * n + i] = m;
        }
    }
    Ok(total)
}

struct Ctx<'a> {
    mesh: &'a Mesh,
    s: f64,
    tol: f64,
    h: f64,
    elems: Vec<Element>,
    edges: Vec<([f64; 2], [f64; 2])>,
}

impl<'a> Ctx<'a> {
    fn new(mesh: &'a Mesh, s: f64, tol: f64) -> Self {
        let elems: Vec<Element> = (0..mesh.n_cells()).map(|c| Element::new(mesh, c)).collect();
        let mut edges = Vec::new();
        if mesh.dim() == 2 {
            let mut seen = std::collections::HashSet::new();
            for c in 0..mesh.n_cells() {
                let t = mesh.cell(c);
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    if seen.insert((a.min(b), a.max(b))) {
                        edges.push((mesh.point2(a), mesh.point2(b)));
                    }
                }
            }
        }
        let h = (0..mesh.n_cells()).map(|c| mesh.cell_diameter(c)).fold(0.0, f64::max);
        Ctx { mesh, s, tol, h, elems, edges }
    }

    fn dofs_of(&self, c: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let e = &self.elems[c];
        (0..e.nv).filter_map(move |k| self.mesh.dof(e.ids[k]).map(|d| (k, d)))
    }

    /// Hat-function values at `x` (which lies in cell `c`), as a dense dof vector.
    fn values(&self, x: [f64; 2], c: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        let l = self.elems[c].lambda(x);
        for (k, d) in self.dofs_of(c) {
            v[d] = l[k];
        }
        v
    }

    fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let tol = 1e-13;
        (0..self.elems.len()).find(|&c| {
            let e = &self.elems[c];
            e.lambda(x)[..e.nv].iter().all(|&l| l >= -tol)
        })
    }

    /// Inner integral over all directions for outer point `x` in cell `c`.
    fn inner(&self, x: [f64; 2], c: usize, out: &mut [f64]) {
        let n = self.mesh.n_dofs();
        out.iter_mut().for_each(|v| *v = 0.0);
        let phi = self.values(x, c, n);
        if self.mesh.dim() == 1 {
            for dir in [[1.0, 0.0], [-1.0, 0.0]] {
                self.ray(x, c, dir, &phi, 1.0, out);
            }
            return;
        }
        // split the circle at the directions of all vertices seen from x
        let mut cuts: Vec<f64> = (0..self.mesh.n_vertices())
            .map(|v| {
                let p = self.mesh.point2(v);
                (p[1] - x[1]).atan2(p[0] - x[0]).rem_euclid(2.0 * PI)
            })
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        cuts.push(cuts[0] + 2.0 * PI);
        let tol = 1e-2 * self.tol * self.h.powf(-2.0 * self.s) / cuts.len() as f64;
        for w in cuts.windows(2) {
            let mut f = |th: f64, o: &mut [f64]| {
                o.iter_mut().for_each(|v| *v = 0.0);
                self.ray(x, c, [th.cos(), th.sin()], &phi, 1.0, o);
            };
            let part = adaptive_vec(&mut f, w[0], w[1], n * n, tol, 0);
            for (o, p) in out.iter_mut().zip(&part) {
                *o += p;
            }
        }
    }

    /// Adds `w ∫_0^∞ (φ_i(x)-φ_i(x+re))(φ_j(x)-φ_j(x+re)) r^{-1-2s} dr` for all dof pairs.
    fn ray(&self, x: [f64; 2], c0: usize, dir: [f64; 2], phi: &[f64], w: f64, out: &mut [f64]) {
        let n = phi.len();
        let s = self.s;
        // breakpoints along the ray
        let mut rs: Vec<f64> = Vec::new();
        if self.mesh.dim() == 1 {
            for v in 0..self.mesh.n_vertices() {
                let r = (self.mesh.vertex(v)[0] - x[0]) * dir[0];
                if r > 0.0 {
                    rs.push(r);
                }
            }
        } else {
            for &(a, b) in &self.edges {
                if let Some(r) = ray_segment(x, dir, a, b) {
                    rs.push(r);
                }
            }
        }
        rs.sort_by(f64::total_cmp);
        rs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
        let mut r0 = 0.0;
        let mut cell = Some(c0);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for (k, &r1) in rs.iter().enumerate() {
            if r1 <= r0 {
                continue;
            }
            if k > 0 {
                let rm = 0.5 * (r0 + r1);
                cell = self.locate([x[0] + rm * dir[0], x[1] + rm * dir[1]]);
            }
            let Some(cc) = cell else { break };
            // φ_i(x + r e) = α_i + r β_i on this cell
            // dofs not supported on this cell contribute Δ_i = φ_i(x)
            a.copy_from_slice(phi);
            b.iter_mut().for_each(|v| *v = 0.0);
            let e = &self.elems[cc];
            let l = e.lambda(x);
            for (kk, d) in self.dofs_of(cc) {
                b[d] = -(e.grad[kk][0] * dir[0] + e.grad[kk][1] * dir[1]);
                a[d] = if r0 == 0.0 { 0.0 } else { phi[d] - l[kk] };
            }
            let m0 = if r0 == 0.0 { 0.0 } else { (r0.powf(-2.0 * s) - r1.powf(-2.0 * s)) / (2.0 * s) };
            let m1 = if r0 == 0.0 {
                0.0
            } else {
                let e1 = 1.0 - 2.0 * s;
                let lr = (r1 / r0).ln();
                if e1.abs() < 1e-12 {
                    lr
                } else {
                    r0.powf(e1) * (e1 * lr).exp_m1() / e1
                }
            };
            let m2 = (r1.powf(2.0 - 2.0 * s) - r0.powf(2.0 - 2.0 * s)) / (2.0 - 2.0 * s);
            // Δ_i(r) = a_i + b_i r
            for i in 0..n {
                if a[i] == 0.0 && b[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let v = a[i] * a[j] * m0 + (a[i] * b[j] + a[j] * b[i]) * m1 + b[i] * b[j] * m2;
                    out[i * n + j] += w * v;
                }
            }
            r0 = r1;
        }
        // beyond the domain only φ(x) survives; the mirrored x ∈ Ω^c half doubles it
        let tail = 2.0 * r0.powf(-2.0 * s) / (2.0 * s);
        for i in 0..n {
            if phi[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += w * tail * phi[i] * phi[j];
            }
        }
    }
}

fn ray_segment(x: [f64; 2], d: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let e = [b[0] - a[0], b[1] - a[1]];
    let den = d[0] * e[1] - d[1] * e[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let w = [a[0] - x[0], a[1] - x[1]];
    let r = (w[0] * e[1] - w[1] * e[0]) / den;
    let t = (w[0] * d[1] - w[1] * d[0]) / den;
    (r > 1e-15 && (-1e-12..=1.0 + 1e-12).contains(&t)).then_some(r)
}

fn gk15_vec(f: &mut impl FnMut(f64, &mut [f64]), a: f64, b: f64, m: usize) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; m];
    f(c, &mut buf);
    for i in 0..m {
        k[i] += GK_WEIGHTS[7] * buf[i];
        g[i] += G7_WEIGHTS[3] * buf[i];
    }
    for j in 0..7 {
        for x in [c - h * GK_NODES[j], c + h * GK_NODES[j]] {
            f(x, &mut buf);
            for i in 0..m {
                k[i] += GK_WEIGHTS[j] * buf[i];
                if j % 2 == 1 {
                    g[i] += G7_WEIGHTS[j / 2] * buf[i];
                }
            }
        }
    }
    let err = k.iter().zip(&g).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) * h.abs();
    (k.into_iter().map(|v| v * h).collect(), err)
}

fn adaptive_vec(f: &mut impl FnMut(f64, &mut [f64]), a: f64, b: f64, m: usize, tol: f64, depth: u32) -> Vec<f64> {
    let (v, err) = gk15_vec(f, a, b, m);
    if err <= tol || depth >= 40 {
        return v;
    }
    let mid = 0.5 * (a + b);
    let mut left = adaptive_vec(f, a, mid, m, 0.5 * tol, depth + 1);
    let right = adaptive_vec(f, mid, b, m, 0.5 * tol, depth + 1);
    for (l, r) in left.iter_mut().zip(&right) {
        *l += r;
    }
    left
}

fn graded_order(tol: f64) -> usize {
    (4 + (-tol.log10()).ceil().max(0.0) as usize).clamp(6, 24)
}

/// Points and weights on a triangle, split at its centroid, with the coordinate
/// normal to each edge graded as `1 - (1-w)^4` and the tangential one as a
/// symmetric quartic, so edge and vertex singularities are smoothed out.
fn graded_points(e: &Element, rule: &GaussRule) -> Vec<([f64; 2], f64)> {
    const Q: i32 = 4;
    let g = [
        (e.v[0][0] + e.v[1][0] + e.v[2][0]) / 3.0,
        (e.v[0][1] + e.v[1][1] + e.v[2][1]) / 3.0,
    ];
    // tangential grading clustered at both ends, one Gauss rule per half
    let mut tang = Vec::with_capacity(2 * rule.len());
    for (w, c) in rule.iter() {
        let (u, du) = (0.5 * w.powi(Q), 0.5 * f64::from(Q) * w.powi(Q - 1));
        tang.push((u, c * du));
        tang.push((1.0 - u, c * du));
    }
    let mut out = Vec::with_capacity(6 * rule.len() * rule.len());
    for k in 0..3 {
        let (p, q) = (e.v[k], e.v[(k + 1) % 3]);
        let area = 0.5 * ((p[0] - g[0]) * (q[1] - g[1]) - (p[1] - g[1]) * (q[0] - g[0])).abs();
        for (wt, ct) in rule.iter() {
            let om = 1.0 - wt;
            let t = 1.0 - om.powi(Q);
            let dt = f64::from(Q) * om.powi(Q - 1);
            for &(u, cu) in &tang {
                let b = [p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])];
                let x = [g[0] + t * (b[0] - g[0]), g[1] + t * (b[1] - g[1])];
                out.push((x, ct * cu * dt * 2.0 * area * t));
            }
        }
    }
    out
}
