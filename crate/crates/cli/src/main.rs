use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracctl::analysis::{self, problem_for};
use fracctl::config::{Mode, ProblemKind, StudyConfig};
use fracctl::optimize::{project_control, DiscreteProblem};
use fracctl::verify::run_check_suite;

#[derive(Parser)]
#[command(name = "fracctl", version, about = "Optimal control of the fractional heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation on the finest level, using the exact control when known.
    SolveState(RunArgs),
    /// Solve the optimal control problem on the finest level.
    SolveControl(RunArgs),
    /// Run a convergence study over all levels and fractional orders.
    Convergence(RunArgs),
    /// Run the oracle, gradient, duality and stability checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `output` key.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Supplies the seed and quadrature settings; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Numerical { stage: String, message: String },
}

impl Failure {
    fn at(stage: impl Into<String>) -> impl FnOnce(fracctl::Error) -> Failure {
        let stage = stage.into();
        move |e| {
            if e.is_input_error() {
                Failure::Input(e.to_string())
            } else {
                Failure::Numerical { stage, message: e.to_string() }
            }
        }
    }

    fn io(stage: &str) -> impl FnOnce(std::io::Error) -> Failure + '_ {
        move |e| Failure::Numerical { stage: stage.into(), message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::SolveState(a) => load(&a, Mode::SolveState).and_then(|c| solve_state(&c)),
        Command::SolveControl(a) => load(&a, Mode::SolveControl).and_then(|c| solve_control(&c)),
        Command::Convergence(a) => load(&a, Mode::Convergence).and_then(|c| convergence(&c)),
        Command::Check(a) => check(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical { stage, message }) => {
            eprintln!("error in stage `{stage}`: {message}");
            ExitCode::from(2)
        }
    }
}

fn load(args: &RunArgs, mode: Mode) -> Result<StudyConfig, Failure> {
    let mut cfg = StudyConfig::from_file(&args.config).map_err(|e| Failure::Input(e.to_string()))?;
    cfg.mode = mode;
    if let Some(out) = &args.output {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn prepare_output(cfg: &StudyConfig, command: &str) -> Outcome {
    fs::create_dir_all(&cfg.output).map_err(Failure::io("output"))?;
    let manifest = format!(
        "# fracctl {}\n# command: {command}\n# seed: {}\n# the lines below are the resolved configuration\n{}",
        fracctl::VERSION,
        cfg.seed,
        cfg.to_text()
    );
    fs::write(cfg.output.join("manifest.txt"), manifest).map_err(Failure::io("output"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    File::create(dir.join(name)).map(BufWriter::new).map_err(Failure::io("output"))
}

fn finest(cfg: &StudyConfig) -> usize {
    cfg.levels.iter().copied().max().unwrap_or(1)
}

fn solve_state(cfg: &StudyConfig) -> Outcome {
    prepare_output(cfg, "solve-state")?;
    let level = finest(cfg);
    let mesh = analysis::mesh_for(cfg, level).map_err(Failure::at("mesh"))?;
    mesh.write_text(create(&cfg.output, "mesh.txt")?).map_err(Failure::at("output"))?;
    for &s in &cfg.s_values {
        let (spec, exact) = problem_for(cfg, s).map_err(Failure::at("problem setup"))?;
        let grid = analysis::grid_for(cfg, s, cfg.level_h(level)).map_err(Failure::at("time grid"))?;
        let problem = DiscreteProblem::assemble(&spec, &mesh, grid, &cfg.quad, analysis::cg_options(cfg))
            .map_err(Failure::at("assembly"))?;
        let z = match &exact {
            Some(ex) => project_control(&|t, x| ex.z(t, x), &mesh, &grid, cfg.quad.gauss_order_load)
                .map_err(Failure::at("control projection"))?,
            None => problem.zero_control(),
        };
        let u = problem.state(&z).map_err(Failure::at("state solve"))?;
        u.write_csv(create(&cfg.output, &format!("state_s{s}.csv"))?).map_err(Failure::at("output"))?;
        let mut line = format!("s = {s}: {} dofs, {} steps", mesh.n_dofs(), grid.steps());
        if let Some(ex) = &exact {
            let err = analysis::l2q_error_nodal(
                &|t, x| ex.u(t, x),
                ex.state_norm_sq(),
                &u,
                &mesh,
                analysis::ERROR_QUAD_ORDER,
            )
            .map_err(Failure::at("error evaluation"))?;
            line.push_str(&format!(", L2(Q) state error {err:.4e}"));
        }
        println!("{line}");
    }
    Ok(())
}

fn solve_control(cfg: &StudyConfig) -> Outcome {
    prepare_output(cfg, "solve-control")?;
    let level = finest(cfg);
    for &s in &cfg.s_values {
        let (spec, exact) = problem_for(cfg, s).map_err(Failure::at("problem setup"))?;
        let run = analysis::solve_level(cfg, &spec, s, level).map_err(Failure::at("optimal control solve"))?;
        let sol = &run.solution;
        let dir = &cfg.output;
        sol.control.write_csv(create(dir, &format!("control_s{s}.csv"))?).map_err(Failure::at("output"))?;
        sol.state.write_csv(create(dir, &format!("state_s{s}.csv"))?).map_err(Failure::at("output"))?;
        sol.adjoint.write_csv(create(dir, &format!("adjoint_s{s}.csv"))?).map_err(Failure::at("output"))?;
        sol.report.write_csv(create(dir, &format!("optimizer_s{s}.csv"))?).map_err(Failure::at("output"))?;
        let rep = &sol.report;
        let mut line = format!(
            "s = {s}: J = {:.10e}, residual {:.3e}, {} iterations{}",
            rep.objective,
            rep.residual,
            rep.iterations,
            if rep.converged { "" } else { " (not converged)" }
        );
        if let Some(ex) = &exact {
            let (es, ec) = analysis::exact_errors(
                &run,
                ex,
                (ex.state_norm_sq(), ex.control_norm_sq()),
                analysis::ERROR_QUAD_ORDER,
            )
            .map_err(Failure::at("error evaluation"))?;
            line.push_str(&format!(", L2(Q) errors state {es:.4e} control {ec:.4e}"));
        }
        println!("{line}");
    }
    Ok(())
}

fn convergence(cfg: &StudyConfig) -> Outcome {
    prepare_output(cfg, "convergence")?;
    let study = analysis::run_convergence_study(cfg).map_err(Failure::at("convergence study"))?;
    study.write_csv(create(&cfg.output, "convergence.csv")?).map_err(Failure::at("output"))?;
    study.write_plot_files(&cfg.output.join("plots")).map_err(Failure::at("output"))?;
    print!("{}", study.summary());
    if let Some(r) = study.records.iter().find(|r| r.failure.is_some()) {
        return Err(Failure::Numerical {
            stage: format!("convergence level {} (s = {})", r.level, r.s),
            message: r.failure.clone().unwrap_or_default(),
        });
    }
    Ok(())
}

fn check(args: &CheckArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(path) => load(&RunArgs { config: path.clone(), output: None }, Mode::Convergence)?,
        None => StudyConfig::new(ProblemKind::Manufactured1d, vec![0.5], vec![64]),
    };
    if let Some(out) = &args.output {
        cfg.output = out.clone();
    }
    prepare_output(&cfg, "check")?;
    let outcomes = run_check_suite(cfg.seed, &cfg.quad).map_err(Failure::at("check suite"))?;
    let mut report = String::new();
    for o in &outcomes {
        report.push_str(&format!("{} {}: {}\n", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail));
    }
    print!("{report}");
    fs::write(cfg.output.join("check.txt"), &report).map_err(Failure::io("output"))?;
    match outcomes.iter().find(|o| !o.passed) {
        Some(o) => Err(Failure::Numerical { stage: format!("check `{}`", o.name), message: o.detail.clone() }),
        None => Ok(()),
    }
}
