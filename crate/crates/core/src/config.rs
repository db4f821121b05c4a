//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma separated.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `problem` | `manufactured-1d`, `manufactured-2d-I` or `problem-2d-II` | required |
//! | `s` | fractional orders | required |
//! | `levels` | cells on (−1,1) in 1D, rings of the disc in 2D | required |
//! | `dimension` | must match the problem | from problem |
//! | `mode` | `solve-state`, `solve-control` or `convergence` | `convergence` |
//! | `mu`, `a`, `b`, `T` | cost weight, control bounds, horizon | `0.1`, `-0.5`, `0.5`, `1` |
//! | `kappa` | grading exponent | `1` |
//! | `steps` | fixed number of time steps instead of `τ = h^γ` | unset |
//! | `ud_rule` | `endpoint` or `average` | `endpoint` |
//! | `cg_tol`, `cg_max_iter` | linear solver settings | `1e-10`, `10000` |
//! | `opt_tol`, `opt_max_iter` | optimizer settings | relative `1e-8`, `500` |
//! | `gauss_order_regular`, `gauss_order_singular`, `near_field_threshold`, `gauss_order_load`, `complement_depth` | assembly quadrature | library defaults |
//! | `seed` | seed for randomized checks | `42` |
//! | `output` | output directory | `out` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::assembly::QuadConfig;
use crate::error::{Error, Result};
use crate::timestepping::LoadRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SolveState,
    SolveControl,
    Convergence,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solve-state" => Ok(Mode::SolveState),
            "solve-control" => Ok(Mode::SolveControl),
            "convergence" => Ok(Mode::Convergence),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SolveState => "solve-state",
            Mode::SolveControl => "solve-control",
            Mode::Convergence => "convergence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Manufactured1d,
    Manufactured2dI,
    Problem2dII,
}

impl ProblemKind {
    pub fn dimension(&self) -> usize {
        match self {
            ProblemKind::Manufactured1d => 1,
            _ => 2,
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        !matches!(self, ProblemKind::Problem2dII)
    }
}

impl FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "manufactured-1d" => Ok(ProblemKind::Manufactured1d),
            "manufactured-2d-I" => Ok(ProblemKind::Manufactured2dI),
            "problem-2d-II" => Ok(ProblemKind::Problem2dII),
            _ => Err(format!("unknown problem `{s}`")),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Manufactured1d => "manufactured-1d",
            ProblemKind::Manufactured2dI => "manufactured-2d-I",
            ProblemKind::Problem2dII => "problem-2d-II",
        })
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub mode: Mode,
    pub problem: ProblemKind,
    pub dimension: usize,
    pub s_values: Vec<f64>,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub levels: Vec<usize>,
    pub kappa: f64,
    pub steps: Option<usize>,
    pub ud_rule: LoadRule,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub opt_tol: Option<f64>,
    pub opt_max_iter: usize,
    pub quad: QuadConfig,
    pub seed: u64,
    pub output: PathBuf,
}

impl StudyConfig {
    /// Defaults for everything but the required keys.
    pub fn new(problem: ProblemKind, s_values: Vec<f64>, levels: Vec<usize>) -> Self {
        StudyConfig {
            mode: Mode::Convergence,
            problem,
            dimension: problem.dimension(),
            s_values,
            mu: 0.1,
            a: -0.5,
            b: 0.5,
            t_final: 1.0,
            levels,
            kappa: 1.0,
            steps: None,
            ud_rule: LoadRule::Endpoint,
            cg_tol: 1e-10,
            cg_max_iter: 10_000,
            opt_tol: None,
            opt_max_iter: 500,
            quad: QuadConfig::default(),
            seed: 42,
            output: PathBuf::from("out"),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses configuration text; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse { path: origin.into(), line: i + 1, message: "expected `key = value`".into() });
            };
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse { path: origin.into(), line: i + 1, message: format!("unknown key `{key}`") });
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse { path: origin.into(), line: i + 1, message: format!("duplicate key `{key}`") });
            }
        }
        let get = |key: &str| entries.get(key).map(|(line, v)| (*line, v.as_str()));
        let field = |key: &str, line: usize, msg: String| Error::Parse {
            path: origin.into(),
            line,
            message: format!("field `{key}`: {msg}"),
        };
        let required = |key: &str| {
            get(key).ok_or_else(|| Error::Config { field: key.into(), message: "missing required field".into() })
        };
        fn one<T: FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
        }
        fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
        where
            T::Err: fmt::Display,
        {
            v.split(',').map(|p| one(p.trim())).collect()
        }

        let (line, v) = required("problem")?;
        let problem: ProblemKind = v.parse().map_err(|e| field("problem", line, e))?;
        let (line, v) = required("s")?;
        let s_values: Vec<f64> = list(v).map_err(|e| field("s", line, e))?;
        let (line, v) = required("levels")?;
        let levels: Vec<usize> = list(v).map_err(|e| field("levels", line, e))?;
        let mut cfg = StudyConfig::new(problem, s_values, levels);

        macro_rules! opt {
            ($key:literal, $slot:expr) => {
                if let Some((line, v)) = get($key) {
                    $slot = one(v).map_err(|e| field($key, line, e))?;
                }
            };
        }
        opt!("mode", cfg.mode);
        opt!("dimension", cfg.dimension);
        opt!("mu", cfg.mu);
        opt!("a", cfg.a);
        opt!("b", cfg.b);
        opt!("T", cfg.t_final);
        opt!("kappa", cfg.kappa);
        opt!("cg_tol", cfg.cg_tol);
        opt!("cg_max_iter", cfg.cg_max_iter);
        opt!("opt_max_iter", cfg.opt_max_iter);
        opt!("gauss_order_regular", cfg.quad.gauss_order_regular);
        opt!("gauss_order_singular", cfg.quad.gauss_order_singular);
        opt!("near_field_threshold", cfg.quad.near_field_threshold);
        opt!("gauss_order_load", cfg.quad.gauss_order_load);
        opt!("complement_depth", cfg.quad.complement_depth);
        opt!("seed", cfg.seed);
        opt!("output", cfg.output);
        if let Some((line, v)) = get("steps") {
            cfg.steps = Some(one(v).map_err(|e| field("steps", line, e))?);
        }
        if let Some((line, v)) = get("opt_tol") {
            cfg.opt_tol = Some(one(v).map_err(|e| field("opt_tol", line, e))?);
        }
        if let Some((line, v)) = get("ud_rule") {
            cfg.ud_rule = match v {
                "endpoint" => LoadRule::Endpoint,
                "average" => LoadRule::Average,
                _ => return Err(field("ud_rule", line, format!("expected `endpoint` or `average`, got `{v}`"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: String| Err(Error::Config { field: f.into(), message: m });
        if self.dimension != self.problem.dimension() {
            return bad(
                "dimension",
                format!("problem `{}` lives in {}D, got dimension = {}", self.problem, self.problem.dimension(), self.dimension),
            );
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return bad("s", "every value must lie in (0,1)".into());
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return bad("levels", "need at least one positive level".into());
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", format!("must be positive, got {}", self.mu));
        }
        if self.a.is_nan() || self.b.is_nan() || self.a > self.b {
            return bad("a", format!("need a <= b, got a = {}, b = {}", self.a, self.b));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("T", format!("must be positive, got {}", self.t_final));
        }
        if !(1.0..=2.0).contains(&self.kappa) {
            return bad("kappa", format!("must lie in [1,2], got {}", self.kappa));
        }
        if self.steps == Some(0) {
            return bad("steps", "must be positive".into());
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return bad("cg_tol", "solver tolerance and iteration limit must be positive".into());
        }
        if self.opt_tol.is_some_and(|t| !(t > 0.0)) {
            return bad("opt_tol", "must be positive".into());
        }
        self.quad.validate().map_err(|e| Error::Config { field: "quadrature".into(), message: e.to_string() })
    }

    /// Mesh parameter of a level: `2/N` in 1D, `1/m` in 2D.
    pub fn level_h(&self, level: usize) -> f64 {
        if self.dimension == 1 {
            2.0 / level as f64
        } else {
            1.0 / level as f64
        }
    }

    /// Resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("mode", self.mode.to_string());
        kv("problem", self.problem.to_string());
        kv("dimension", self.dimension.to_string());
        kv("s", join(self.s_values.iter().map(|s| s.to_string()).collect()));
        kv("levels", join(self.levels.iter().map(|s| s.to_string()).collect()));
        kv("mu", self.mu.to_string());
        kv("a", self.a.to_string());
        kv("b", self.b.to_string());
        kv("T", self.t_final.to_string());
        kv("kappa", self.kappa.to_string());
        if let Some(k) = self.steps {
            kv("steps", k.to_string());
        }
        kv("ud_rule", if self.ud_rule == LoadRule::Endpoint { "endpoint" } else { "average" }.into());
        kv("cg_tol", self.cg_tol.to_string());
        kv("cg_max_iter", self.cg_max_iter.to_string());
        if let Some(t) = self.opt_tol {
            kv("opt_tol", t.to_string());
        }
        kv("opt_max_iter", self.opt_max_iter.to_string());
        kv("gauss_order_regular", self.quad.gauss_order_regular.to_string());
        kv("gauss_order_singular", self.quad.gauss_order_singular.to_string());
        kv("near_field_threshold", self.quad.near_field_threshold.to_string());
        kv("gauss_order_load", self.quad.gauss_order_load.to_string());
        kv("complement_depth", self.quad.complement_depth.to_string());
        kv("seed", self.seed.to_string());
        kv("output", self.output.display().to_string());
        out
    }
}

const KEYS: &[&str] = &[
    "mode",
    "problem",
    "dimension",
    "s",
    "levels",
    "mu",
    "a",
    "b",
    "T",
    "kappa",
    "steps",
    "ud_rule",
    "cg_tol",
    "cg_max_iter",
    "opt_tol",
    "opt_max_iter",
    "gauss_order_regular",
    "gauss_order_singular",
    "near_field_threshold",
    "gauss_order_load",
    "complement_depth",
    "seed",
    "output",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = "# study\nproblem = manufactured-1d\ns = 0.25, 0.75\nlevels = 8,16\nmu = 0.2\nud_rule = average\n";
        let cfg = StudyConfig::parse(text, "t.cfg").unwrap();
        assert_eq!(cfg.s_values, vec![0.25, 0.75]);
        assert_eq!(cfg.levels, vec![8, 16]);
        assert_eq!(cfg.mu, 0.2);
        assert_eq!(cfg.ud_rule, LoadRule::Average);
        assert_eq!(cfg.seed, 42);
        let again = StudyConfig::parse(&cfg.to_text(), "again").unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = StudyConfig::parse("problem = manufactured-1d\ns = 0.5\n", "x").unwrap_err();
        assert!(err.to_string().contains("levels"), "{err}");
        let err = StudyConfig::parse("problem = manufactured-1d\ns = 0.5\nlevels = 4\nmu = abc\n", "x").unwrap_err();
        assert!(err.to_string().contains("x:4") && err.to_string().contains("mu"), "{err}");
        let err = StudyConfig::parse("problem = problem-2d-II\ns = 0.5\nlevels = 4\ndimension = 1\n", "x").unwrap_err();
        assert!(err.to_string().contains("dimension"), "{err}");
        let err = StudyConfig::parse("problem = manufactured-1d\nsss = 1\n", "x").unwrap_err();
        assert!(err.to_string().contains("sss"), "{err}");
        assert!(err.is_input_error());
    }
}
