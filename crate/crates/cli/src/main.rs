mod commands;
mod control;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slidopt::config::RunConfig;
use slidopt::Error;

use commands::{Outcome, Run};

#[derive(Parser)]
#[command(name = "slidopt", version, about = "Optimal control of hybrid systems with sliding modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the controls with SQP.
    Solve(Common),
    /// Integrate forward under fixed controls.
    Simulate(Common),
    /// Compare adjoint gradients with central differences.
    CheckGradient(Common),
    /// Convergence orders under mesh refinement.
    Study(Common),
}

#[derive(Args)]
struct Common {
    /// Problem name (mass-spring, race-car, analytic-linear, sliding-circle).
    #[arg(long)]
    problem: Option<String>,
    /// `key = value` configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Control file: header `N n_u`, then N rows.
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long)]
    n_controls: Option<usize>,
    /// Base integration steps (the coarsest mesh for `study`).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tol_newton: Option<f64>,
    #[arg(long)]
    tol_surface: Option<f64>,
    #[arg(long)]
    tol_root: Option<f64>,
    /// SQP stopping tolerance.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Adjoint jump multiplier: discrete or simple.
    #[arg(long)]
    jump: Option<String>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> slidopt::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_text(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 12] = [
            ("problem", self.problem.clone()),
            ("n_controls", self.n_controls.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("newton_tol", self.tol_newton.map(|v| v.to_string())),
            ("surface_tol", self.tol_surface.map(|v| v.to_string())),
            ("root_tol", self.tol_root.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("jump", self.jump.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownProblem(_) => 64,
        Error::Format(_) | Error::Precondition(_) => 65,
        Error::NewtonFailure { .. } | Error::IndexCondition(_) | Error::TangentialCrossing { .. } | Error::Divergence(_) => 3,
        Error::Io(_) => 74,
        Error::Dimension(_) | Error::OracleInvalid { .. } | Error::Qp(_) => 70,
    }
}

fn configure_threads(threads: Option<usize>) -> slidopt::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("warning: built without the parallel feature, ignoring --threads {n}");
    }
    Ok(())
}

fn run(cli: Cli) -> slidopt::Result<Outcome> {
    let (name, common) = match &cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Simulate(c) => ("simulate", c),
        Command::CheckGradient(c) => ("check-gradient", c),
        Command::Study(c) => ("study", c),
    };
    let cfg = common.config()?;
    configure_threads(cfg.threads)?;
    std::fs::create_dir_all(&cfg.out)?;
    let run = Run::new(cfg, common.control.as_deref())?;
    run.write_manifest(name)?;
    match cli.command {
        Command::Solve(_) => commands::solve_cmd(&run),
        Command::Simulate(_) => commands::simulate_cmd(&run),
        Command::CheckGradient(_) => commands::check_gradient_cmd(&run),
        Command::Study(_) => commands::study_cmd(&run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Anomaly) => ExitCode::from(1),
        Ok(Outcome::MaxIter) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
