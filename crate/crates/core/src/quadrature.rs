//! Gauss rules on reference cells and a small adaptive Gauss-Kronrod integrator.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Largest Gauss-Legendre order the assembly routines accept.
pub const MAX_GAUSS_ORDER: usize = 64;

/// Gauss-Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Result<Self> {
        let n = NonZeroUsize::new(order)
            .filter(|n| n.get() <= MAX_GAUSS_ORDER)
            .ok_or(Error::QuadratureOrder { requested: order, max: MAX_GAUSS_ORDER })?;
        let rule = GaussLegendre::new(n);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Ok(GaussRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.iter().map(|(x, w)| w * f(a + len * x)).sum::<f64>() * len
    }
}

/// Collapsed (Duffy) tensor rule on the reference triangle `{x, y >= 0, x + y <= 1}`.
///
/// Weights sum to 1/2. An `n`-point base rule integrates polynomials of
/// total degree `2n - 2` exactly.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn collapsed(order: usize) -> Result<Self> {
        let g = GaussRule::new(order)?;
        let mut points = Vec::with_capacity(g.len() * g.len());
        let mut weights = Vec::with_capacity(g.len() * g.len());
        for (u, wu) in g.iter() {
            for (v, wv) in g.iter() {
                points.push([u, v * (1.0 - u)]);
                weights.push(wu * wv * (1.0 - u));
            }
        }
        Ok(TriangleRule { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub(crate) const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
pub(crate) const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
pub(crate) const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G7_WEIGHTS[j / 2] * pair;
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = GK_WEIGHTS[7] * (fc - mean).abs();
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        asc += GK_WEIGHTS[j] * ((f(c - dx) - mean).abs() + (f(c + dx) - mean).abs());
    }
    asc *= h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    (kronrod * h, err)
}

/// Adaptive Gauss-Kronrod (7/15) integration by recursive bisection.
///
/// Stops refining an interval when its error estimate falls below
/// `max(abs_tol, rel_tol * |estimate|)` or the depth limit is reached.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    fn recurse(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        whole: (f64, f64),
        abs_tol: f64,
        rel_tol: f64,
        depth: u32,
    ) -> f64 {
        let (value, err) = whole;
        if err <= abs_tol.max(rel_tol * value.abs()) || depth >= 100 || b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            return value;
        }
        let m = 0.5 * (a + b);
        let left = gauss_kronrod_15(f, a, m);
        let right = gauss_kronrod_15(f, m, b);
        recurse(f, a, m, left, 0.5 * abs_tol, rel_tol, depth + 1)
            + recurse(f, m, b, right, 0.5 * abs_tol, rel_tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = gauss_kronrod_15(&mut f, a, b);
    recurse(&mut f, a, b, whole, abs_tol, rel_tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_exact_for_polynomials() {
        let g = GaussRule::new(3).unwrap();
        let v = g.integrate(0.0, 2.0, |x| x.powi(5) - x);
        assert!((v - (64.0 / 6.0 - 2.0)).abs() < 1e-13);
    }

    #[test]
    fn rejects_unavailable_orders() {
        assert!(matches!(GaussRule::new(0), Err(Error::QuadratureOrder { .. })));
        assert!(matches!(GaussRule::new(MAX_GAUSS_ORDER + 1), Err(Error::QuadratureOrder { .. })));
    }

    #[test]
    fn triangle_rule_moments() {
        let t = TriangleRule::collapsed(4).unwrap();
        let area: f64 = t.weights.iter().sum();
        assert!((area - 0.5).abs() < 1e-15);
        // int x^2 y over the reference triangle = 2! 1! / 5! = 1/60
        let m: f64 = t.points.iter().zip(&t.weights).map(|(p, w)| w * p[0] * p[0] * p[1]).sum();
        assert!((m - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = integrate_adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        let w = integrate_adaptive(|x: f64| (1.0 - x * x).max(0.0).powf(0.25), -1.0, 1.0, 1e-13, 1e-13);
        // B(1/2, 5/4) = Gamma(1/2) Gamma(5/4) / Gamma(7/4)
        let exact = std::f64::consts::PI.sqrt() * 0.906_402_477_055_477 / 0.919_062_526_848_883_5;
        assert!((w - exact).abs() < 1e-10, "{w} {exact}");
    }
}
