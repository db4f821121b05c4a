//! Closed-form eigen-pairs of the fractional Poisson problem on the unit ball and
//! manufactured optimal control problems built from them.

use std::f64::consts::PI;
use std::sync::Arc;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::optimize::{Bounds, ProblemSpec};
use crate::quadrature::integrate_adaptive;
use crate::timestepping::LoadRule;

/// Degree and parameters of a Jacobi polynomial `P_k^{(α,β)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiIndex {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl JacobiIndex {
    pub fn new(k: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0) || !(beta > -1.0) {
            return Err(Error::param("alpha,beta", format!("Jacobi parameters must exceed -1, got ({alpha}, {beta})")));
        }
        Ok(JacobiIndex { k, alpha, beta })
    }

    /// Three-term recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let mut p0 = 1.0;
        if self.k == 0 {
            return p0;
        }
        let mut p1 = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
        for n in 2..=self.k {
            let n = n as f64;
            let c = 2.0 * n + a + b;
            let lhs = 2.0 * n * (n + a + b) * (c - 2.0);
            let t1 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
            let t2 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * c;
            let p2 = (t1 * p1 - t2 * p0) / lhs;
            p0 = p1;
            p1 = p2;
        }
        p1
    }
}

pub fn jacobi_eval(idx: &JacobiIndex, x: f64) -> f64 {
    idx.eval(x)
}

/// Generalized binomial coefficient `Γ(a+1) / (Γ(b+1) Γ(a-b+1))` for `a ≥ b > -1`, `a - b > -1`.
pub fn gbinom(a: f64, b: f64) -> f64 {
    (ln_gamma(a + 1.0) - ln_gamma(b + 1.0) - ln_gamma(a - b + 1.0)).exp()
}

fn plus_pow(base: f64, s: f64) -> f64 {
    if base > 0.0 {
        base.powf(s)
    } else {
        0.0
    }
}

/// Eigen-pair family of `(−Δ)^s u = f` on the unit ball with `u = 0` outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairFamily {
    /// `x^j P_k^{(s, j-1/2)}(2x²−1)(1−x²)_+^s` on `(−1,1)`.
    OneD { k: usize, parity: usize },
    /// `r^ℓ cos(ℓθ) P_k^{(s,ℓ)}(2r²−1)(1−r²)_+^s` on the unit disc.
    TwoD { k: usize, l: usize },
}

/// A family member evaluated at a fixed `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactPair {
    family: PairFamily,
    s: f64,
    jacobi: JacobiIndex,
    scale: f64,
}

impl ExactPair {
    pub fn new(family: PairFamily, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::param("s", format!("must lie in (0,1), got {s}")));
        }
        let common = 4f64.powf(s) * gamma(1.0 + s).powi(2);
        let (jacobi, scale) = match family {
            PairFamily::OneD { k, parity } => {
                if parity > 1 {
                    return Err(Error::param("parity", "must be 0 or 1"));
                }
                let j = parity as f64;
                let kf = k as f64;
                (JacobiIndex::new(k, s, j - 0.5)?, common * gbinom(s + kf + j - 0.5, s) * gbinom(s + kf, s))
            }
            PairFamily::TwoD { k, l } => {
                let (kf, lf) = (k as f64, l as f64);
                (JacobiIndex::new(k, s, lf)?, common * gbinom(s + kf + lf, s) * gbinom(s + kf, s))
            }
        };
        Ok(ExactPair { family, s, jacobi, scale })
    }

    pub fn one_d(k: usize, parity: usize, s: f64) -> Result<Self> {
        Self::new(PairFamily::OneD { k, parity }, s)
    }

    pub fn two_d(k: usize, l: usize, s: f64) -> Result<Self> {
        Self::new(PairFamily::TwoD { k, l }, s)
    }

    pub fn family(&self) -> PairFamily {
        self.family
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        match self.family {
            PairFamily::OneD { .. } => 1,
            PairFamily::TwoD { .. } => 2,
        }
    }

    /// Polynomial factor shared by `u` and `f`, and the squared radius.
    fn core(&self, x: &[f64]) -> (f64, f64) {
        match self.family {
            PairFamily::OneD { parity, .. } => {
                let r2 = x[0] * x[0];
                let sign = if parity == 1 { x[0] } else { 1.0 };
                (sign * self.jacobi.eval(2.0 * r2 - 1.0), r2)
            }
            PairFamily::TwoD { l, .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let r = r2.sqrt();
                let ang = if l == 0 { 1.0 } else { r.powi(l as i32) * (l as f64 * x[1].atan2(x[0])).cos() };
                (ang * self.jacobi.eval(2.0 * r2 - 1.0), r2)
            }
        }
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        let (p, r2) = self.core(x);
        p * plus_pow(1.0 - r2, self.s)
    }

    /// Right-hand side; the formula is valid inside the ball.
    pub fn f(&self, x: &[f64]) -> f64 {
        self.scale * self.core(x).0
    }

    /// `(u, f)` at a point.
    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        let (p, r2) = self.core(x);
        (p * plus_pow(1.0 - r2, self.s), self.scale * p)
    }

    /// `∫ u²` over the ball.
    pub fn u_norm_sq(&self) -> f64 {
        match self.family {
            PairFamily::OneD { .. } => 2.0 * integrate_adaptive(|x| self.u(&[x]).powi(2), 0.0, 1.0, 1e-15, 1e-13),
            PairFamily::TwoD { l, .. } => {
                let ang = if l == 0 { 2.0 * PI } else { PI };
                // radial part of u without cos(ℓθ)
                let radial = |r: f64| {
                    r.powi(l as i32) * self.jacobi.eval(2.0 * r * r - 1.0) * plus_pow(1.0 - r * r, self.s)
                };
                ang * integrate_adaptive(|r| r * radial(r).powi(2), 0.0, 1.0, 1e-15, 1e-13)
            }
        }
    }
}

/// Scalar time factors of the manufactured solution.
#[derive(Clone)]
pub struct TimeProfile {
    pub psi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dpsi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TimeProfile")
    }
}

impl TimeProfile {
    /// Checks `ψ(0) = 1` and `φ(T) = 0`.
    pub fn new(
        psi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dpsi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        t_final: f64,
    ) -> Result<Self> {
        if (psi(0.0) - 1.0).abs() > 1e-12 {
            return Err(Error::param("psi", "must satisfy psi(0) = 1"));
        }
        if phi(t_final).abs() > 1e-12 {
            return Err(Error::param("phi", "must vanish at the final time"));
        }
        Ok(TimeProfile { psi, dpsi, phi, dphi })
    }

    /// `ψ = cos t`, `φ = sin(T − t)`.
    pub fn trigonometric(t_final: f64) -> Result<Self> {
        Self::new(
            Arc::new(f64::cos),
            Arc::new(|t: f64| -t.sin()),
            Arc::new(move |t: f64| (t_final - t).sin()),
            Arc::new(move |t: f64| -(t_final - t).cos()),
            t_final,
        )
    }
}

/// Exact optimal state, adjoint and control with the data that produce them.
#[derive(Debug, Clone)]
pub struct ExactTriple {
    pub s: f64,
    pub mu: f64,
    pub bounds: Bounds,
    pub t_final: f64,
    pub profile: TimeProfile,
    pub u_pair: ExactPair,
    pub v_pair: ExactPair,
}

impl ExactTriple {
    pub fn u(&self, t: f64, x: &[f64]) -> f64 {
        (self.profile.psi)(t) * self.u_pair.u(x)
    }

    pub fn p(&self, t: f64, x: &[f64]) -> f64 {
        -self.mu * (self.profile.phi)(t) * self.v_pair.u(x)
    }

    pub fn z(&self, t: f64, x: &[f64]) -> f64 {
        self.bounds.project((self.profile.phi)(t) * self.v_pair.u(x))
    }

    /// `(ū, p̄, z̄)` at `(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> (f64, f64, f64) {
        (self.u(t, x), self.p(t, x), self.z(t, x))
    }

    pub fn f(&self, t: f64, x: &[f64]) -> f64 {
        let (u, fu) = self.u_pair.eval(x);
        (self.profile.dpsi)(t) * u + (self.profile.psi)(t) * fu - self.z(t, x)
    }

    pub fn u_d(&self, t: f64, x: &[f64]) -> f64 {
        let (v, g) = self.v_pair.eval(x);
        (self.profile.psi)(t) * self.u_pair.u(x) - self.mu * (self.profile.dphi)(t) * v
            + self.mu * (self.profile.phi)(t) * g
    }

    pub fn u0(&self, x: &[f64]) -> f64 {
        self.u_pair.u(x)
    }

    pub fn domain(&self) -> Domain {
        match self.u_pair.dim() {
            1 => Domain::interval(-1.0, 1.0),
            _ => Domain::disc(1.0),
        }
    }

    /// `‖ū‖²_{L²(Q)}`.
    pub fn state_norm_sq(&self) -> f64 {
        let psi = self.profile.psi.clone();
        integrate_adaptive(|t| psi(t).powi(2), 0.0, self.t_final, 1e-15, 1e-13) * self.u_pair.u_norm_sq()
    }

    /// `‖z̄‖²_{L²(Q)}` by nested adaptive quadrature.
    pub fn control_norm_sq(&self) -> f64 {
        let tol = 1e-13;
        let space = |t: f64| -> f64 {
            match self.v_pair.family() {
                PairFamily::OneD { .. } => {
                    integrate_adaptive(|x| self.z(t, &[x]).powi(2), -1.0, 1.0, 1e-15, tol)
                }
                PairFamily::TwoD { l: 0, .. } => {
                    2.0 * PI * integrate_adaptive(|r| r * self.z(t, &[r, 0.0]).powi(2), 0.0, 1.0, 1e-15, tol)
                }
                PairFamily::TwoD { .. } => integrate_adaptive(
                    |r| {
                        r * integrate_adaptive(
                            |th| self.z(t, &[r * th.cos(), r * th.sin()]).powi(2),
                            0.0,
                            2.0 * PI,
                            1e-15,
                            tol,
                        )
                    },
                    0.0,
                    1.0,
                    1e-15,
                    tol,
                ),
            }
        };
        integrate_adaptive(space, 0.0, self.t_final, 1e-15, tol)
    }

    /// Problem data with `f`, `u_d`, `u_0` from the closed forms.
    pub fn problem_spec(&self, u_d_rule: LoadRule) -> ProblemSpec {
        let (a, b, c) = (Arc::new(self.clone()), Arc::new(self.clone()), Arc::new(self.clone()));
        ProblemSpec {
            s: self.s,
            mu: self.mu,
            bounds: self.bounds,
            t_final: self.t_final,
            f: Arc::new(move |t, x| a.f(t, x)),
            u_d: Arc::new(move |t, x| b.u_d(t, x)),
            u0: Arc::new(move |x| c.u0(x)),
            domain: self.domain(),
            u_d_rule,
        }
    }
}

/// Builds the manufactured problem `ū = ψ u`, `p̄ = −μ φ v`, `z̄ = proj(φ v)`.
pub fn build_manufactured(
    s: f64,
    mu: f64,
    bounds: Bounds,
    t_final: f64,
    u_pair: ExactPair,
    v_pair: ExactPair,
    profile: TimeProfile,
) -> Result<(ProblemSpec, ExactTriple)> {
    if u_pair.s() != s || v_pair.s() != s {
        return Err(Error::param("s", "families were built for a different fractional order"));
    }
    if u_pair.dim() != v_pair.dim() {
        return Err(Error::param("family", "state and adjoint families live in different dimensions"));
    }
    if !(mu > 0.0) {
        return Err(Error::param("mu", format!("must be positive, got {mu}")));
    }
    if !(((profile.psi)(0.0) - 1.0).abs() <= 1e-12 && (profile.phi)(t_final).abs() <= 1e-12) {
        return Err(Error::param("profile", "needs psi(0) = 1 and phi(T) = 0"));
    }
    let triple = ExactTriple { s, mu, bounds, t_final, profile, u_pair, v_pair };
    let spec = triple.problem_spec(LoadRule::Endpoint);
    spec.validate()?;
    Ok((spec, triple))
}

/// One-dimensional test problem: `u = v = u_{0,0}`, `ψ = cos t`, `φ = sin(T−t)`,
/// `[a,b] = [−1/2, 1/2]`, `μ = 1/10`, `T = 1`.
pub fn standard_problem_1d(s: f64) -> Result<(ProblemSpec, ExactTriple)> {
    let pair = ExactPair::one_d(0, 0, s)?;
    build_manufactured(s, 0.1, Bounds::new(-0.5, 0.5)?, 1.0, pair, pair, TimeProfile::trigonometric(1.0)?)
}

/// Two-dimensional test problem on the unit disc: `u = u_{0,1}`, `v = u_{0,0}`,
/// otherwise as in [`standard_problem_1d`].
pub fn standard_problem_2d(s: f64) -> Result<(ProblemSpec, ExactTriple)> {
    let u = ExactPair::two_d(0, 1, s)?;
    let v = ExactPair::two_d(0, 0, s)?;
    build_manufactured(s, 0.1, Bounds::new(-0.5, 0.5)?, 1.0, u, v, TimeProfile::trigonometric(1.0)?)
}

/// Radius below which `φ(t)(1−|x|²)^s` exceeds `b`; zero when it never does.
pub fn contact_radius(s: f64, b: f64, phi_t: f64) -> f64 {
    if phi_t >= b && phi_t > 0.0 {
        (1.0 - (b / phi_t).powf(1.0 / s)).max(0.0).sqrt()
    } else {
        0.0
    }
}

/// Data of the two-dimensional problem without a closed-form solution:
/// `f = cos t`, `u_d = cos t (1−|x|²)`, `u_0 = 1−|x|²`.
pub fn problem_two_spec(s: f64, mu: f64, bounds: Bounds, t_final: f64) -> Result<ProblemSpec> {
    let spec = ProblemSpec {
        s,
        mu,
        bounds,
        t_final,
        f: Arc::new(|t, _| t.cos()),
        u_d: Arc::new(|t, x| t.cos() * (1.0 - x[0] * x[0] - x[1] * x[1])),
        u0: Arc::new(|x| 1.0 - x[0] * x[0] - x[1] * x[1]),
        domain: Domain::disc(1.0),
        u_d_rule: LoadRule::Endpoint,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_values() {
        let p = |k, a, b, x| JacobiIndex::new(k, a, b).unwrap().eval(x);
        assert_eq!(p(0, 0.3, 0.2, 0.7), 1.0);
        assert!((p(1, 0.3, -0.5, 1.0) - 1.3).abs() < 1e-15);
        assert!((p(2, 0.0, 0.0, 0.0) + 0.5).abs() < 1e-15);
        // P_k(1) = Γ(k+α+1)/(Γ(α+1) k!)
        for k in 0..=20 {
            let a = 0.37;
            let expect = gbinom(k as f64 + a, k as f64);
            assert!((p(k, a, 0.5, 1.0) / expect - 1.0).abs() < 1e-12, "{k}");
        }
        assert!(JacobiIndex::new(1, -1.0, 0.0).is_err());
    }

    #[test]
    fn legendre_against_closed_form() {
        let x: f64 = 0.3;
        let p5 = (63.0 * x.powi(5) - 70.0 * x.powi(3) + 15.0 * x) / 8.0;
        assert!((JacobiIndex::new(5, 0.0, 0.0).unwrap().eval(x) - p5).abs() < 1e-15);
    }

    #[test]
    fn half_order_constant_source() {
        let pair = ExactPair::one_d(0, 0, 0.5).unwrap();
        for x in [-0.9, 0.0, 0.4] {
            let (u, f) = pair.eval(&[x]);
            assert!((f - 1.0).abs() < 1e-14);
            assert!((u - (1.0 - x * x).sqrt()).abs() < 1e-15);
        }
        assert_eq!(pair.u(&[1.0]), 0.0);
        assert_eq!(pair.u(&[-1.3]), 0.0);
        let odd = ExactPair::one_d(3, 1, 0.3).unwrap();
        assert_eq!(odd.u(&[0.0]), 0.0);
        let disc = ExactPair::two_d(0, 0, 0.5).unwrap();
        assert!((disc.f(&[0.0, 0.0]) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn norms_match_beta_functions() {
        for s in [0.25, 0.5, 0.75] {
            let t = standard_problem_1d(s).unwrap().1;
            let time = 0.5 + (2.0f64).sin() / 4.0;
            let exact = time * PI.sqrt() * gamma(2.0 * s + 1.0) / gamma(2.0 * s + 1.5);
            assert!((t.state_norm_sq() / exact - 1.0).abs() < 1e-10);
            let t2 = standard_problem_2d(s).unwrap().1;
            let exact = time * PI / (2.0 * (2.0 * s + 1.0) * (2.0 * s + 2.0));
            assert!((t2.state_norm_sq() / exact - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn contact_radius_value() {
        let r = contact_radius(0.5, 0.5, 1f64.sin());
        assert!((r - 0.804_319_1).abs() < 1e-6, "{r}");
        assert_eq!(contact_radius(0.5, 0.5, 0.3), 0.0);
        let t = standard_problem_1d(0.5).unwrap().1;
        assert_eq!(t.z(0.0, &[0.5]), 0.5);
        assert!((t.z(0.0, &[0.9]) - 1f64.sin() * (1.0f64 - 0.81).sqrt()).abs() < 1e-15);
    }
}
