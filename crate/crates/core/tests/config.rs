use std::path::Path;

use fracctl::config::{Mode, ProblemKind, StudyConfig};
use fracctl::timestepping::LoadRule;
use fracctl::Error;

const FULL: &str = "\
mode = solve-control
problem = manufactured-2d-I
dimension = 2
s = 0.75
levels = 4, 8, 16
mu = 0.05
a = -1
b = 2
T = 0.5
kappa = 2
steps = 12
ud_rule = average
cg_tol = 1e-12
cg_max_iter = 500
opt_tol = 1e-9
opt_max_iter = 40
gauss_order_regular = 3
gauss_order_singular = 6
near_field_threshold = 1.5
gauss_order_load = 4
complement_depth = 3
seed = 7
output = results/run1
";

#[test]
fn every_key_is_read() {
    let cfg = StudyConfig::parse(FULL, "full.cfg").unwrap();
    assert_eq!(cfg.mode, Mode::SolveControl);
    assert_eq!(cfg.problem, ProblemKind::Manufactured2dI);
    assert_eq!(cfg.levels, vec![4, 8, 16]);
    assert_eq!((cfg.mu, cfg.a, cfg.b, cfg.t_final, cfg.kappa), (0.05, -1.0, 2.0, 0.5, 2.0));
    assert_eq!(cfg.steps, Some(12));
    assert_eq!(cfg.ud_rule, LoadRule::Average);
    assert_eq!((cfg.cg_tol, cfg.cg_max_iter, cfg.opt_tol, cfg.opt_max_iter), (1e-12, 500, Some(1e-9), 40));
    assert_eq!(cfg.quad.gauss_order_regular, 3);
    assert_eq!(cfg.quad.gauss_order_singular, 6);
    assert_eq!(cfg.quad.near_field_threshold, 1.5);
    assert_eq!(cfg.quad.gauss_order_load, 4);
    assert_eq!(cfg.quad.complement_depth, 3);
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.output, Path::new("results/run1"));
    assert_eq!(StudyConfig::parse(&cfg.to_text(), "again").unwrap(), cfg);
    assert_eq!(cfg.level_h(8), 0.125);
}

#[test]
fn defaults_fill_optional_keys() {
    let cfg = StudyConfig::parse("problem = manufactured-1d\ns = 0.5\nlevels = 64\n", "min").unwrap();
    assert_eq!(cfg, StudyConfig::new(ProblemKind::Manufactured1d, vec![0.5], vec![64]));
    assert_eq!(cfg.dimension, 1);
    assert_eq!(cfg.level_h(64), 1.0 / 32.0);
    assert!(cfg.steps.is_none() && cfg.opt_tol.is_none());
}

fn err(text: &str) -> Error {
    StudyConfig::parse(text, "bad.cfg").unwrap_err()
}

#[test]
fn invalid_values_name_the_field() {
    let base = "problem = manufactured-1d\ns = 0.5\nlevels = 8\n";
    for (extra, field) in [
        ("kappa = 3", "kappa"),
        ("mu = -1", "mu"),
        ("T = 0", "T"),
        ("steps = 0", "steps"),
        ("a = 1\nb = 0", "a"),
        ("ud_rule = midpoint", "ud_rule"),
        ("opt_tol = 0", "opt_tol"),
        ("gauss_order_singular = 0", "quadrature"),
        ("mode = sideways", "mode"),
    ] {
        let e = err(&format!("{base}{extra}\n"));
        assert!(e.to_string().contains(field), "{extra}: {e}");
        assert!(e.is_input_error());
    }
    assert!(err("problem = manufactured-1d\ns = 1.5\nlevels = 8\n").to_string().contains('s'));
    assert!(err("problem = manufactured-1d\ns = 0.5\nlevels = 0\n").to_string().contains("levels"));
    assert!(err("problem = heat\ns = 0.5\nlevels = 8\n").to_string().contains("problem"));
}

#[test]
fn syntax_errors_report_the_line() {
    let e = err("problem = manufactured-1d\n\ns 0.5\n");
    assert!(e.to_string().contains("bad.cfg:3"), "{e}");
    let e = err("problem = manufactured-1d\nproblem = manufactured-1d\n");
    assert!(e.to_string().contains("duplicate"), "{e}");
}

#[test]
fn missing_file_is_an_input_error() {
    let e = StudyConfig::from_file(Path::new("/nonexistent/fracctl.cfg")).unwrap_err();
    assert!(e.is_input_error(), "{e}");
}
