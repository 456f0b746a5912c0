use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use slidopt::config::RunConfig;
use slidopt::forward::IntegratorOptions;
use slidopt::gradient::{check_gradient_with, max_rel_err, write_report, Evaluator};
use slidopt::nlp::{solve, write_log, Nlp};
use slidopt::problems::{self, ProblemSpec};
use slidopt::study::{self, halvings, StudyReport};
use slidopt::{radau_iia, Error, Result, Tableau};

use crate::control;

/// Study meshes are `K, 2K, …, 16K` against a reference `16×` finer still.
const STUDY_MESHES: usize = 5;
const STUDY_REFERENCE: usize = 16;

pub struct Run {
    pub cfg: RunConfig,
    pub spec: ProblemSpec,
    pub tableau: Tableau,
}

impl Run {
    /// Resolves the problem and applies the configured grid and, if given,
    /// a control file.
    pub fn new(cfg: RunConfig, control_file: Option<&Path>) -> Result<Self> {
        let mut spec = problems::by_name(&cfg.problem)?;
        if let Some(n) = cfg.n_controls {
            spec = spec.with_intervals(n)?;
        }
        if let Some(path) = control_file {
            let (n, rows) = control::parse(&fs::read_to_string(path)?)?;
            if n != spec.grid.n_intervals() {
                spec = spec.with_intervals(n)?;
            }
            if rows[0].len() != spec.grid.n_u() {
                return Err(Error::Format(format!(
                    "control file has {} channels, {} expects {}",
                    rows[0].len(),
                    spec.name,
                    spec.grid.n_u()
                )));
            }
            spec.grid.values = rows;
        }
        if let Some(k) = cfg.steps {
            if k < spec.grid.n_intervals() {
                return Err(Error::Config(format!("steps ({k}) must be at least the number of control intervals")));
            }
        }
        Ok(Run {
            cfg,
            spec,
            tableau: radau_iia(3)?,
        })
    }

    pub fn options(&self) -> IntegratorOptions {
        self.cfg.integrator_options(self.spec.steps)
    }

    fn evaluator<'a>(&'a self, opts: &'a IntegratorOptions) -> Evaluator<'a> {
        Evaluator {
            model: self.spec.model.as_ref(),
            tableau: &self.tableau,
            x0: &self.spec.x0,
            options: opts,
            jump: self.cfg.jump,
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.cfg.out.join(name))?))
    }

    pub fn write_manifest(&self, command: &str) -> Result<()> {
        use std::io::Write;
        let opts = self.options();
        let mut w = self.create("run-manifest.txt")?;
        writeln!(w, "# slidopt {} {command}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# parallel = {}", slidopt::par::is_parallel())?;
        write!(w, "{}", self.cfg.to_text())?;
        writeln!(w, "resolved_steps = {}", opts.steps)?;
        writeln!(w, "resolved_n_controls = {}", self.spec.grid.n_intervals())?;
        writeln!(w, "newton_max_iter = {}", opts.newton.max_iter)?;
        writeln!(w, "event_samples = {}", opts.event_samples)?;
        writeln!(w, "min_fraction = {:e}", opts.min_fraction)?;
        for (what, source) in &self.spec.provenance {
            writeln!(w, "# {what}: {source:?}")?;
        }
        Ok(())
    }
}

pub enum Outcome {
    Ok,
    Anomaly,
    MaxIter,
}

pub fn solve_cmd(run: &Run) -> Result<Outcome> {
    let opts = run.options();
    let nlp = Nlp {
        evaluator: run.evaluator(&opts),
        objective: run.spec.objective.clone(),
        equalities: run.spec.equalities.clone(),
        inequalities: run.spec.inequalities.clone(),
    };
    let rep = solve(&nlp, &run.spec.grid, &run.cfg.sqp_options())?;
    write_log(&rep.log, run.create("iterations.csv")?)?;
    rep.trajectory.write_csv(run.create("trajectory.csv")?)?;
    control::write(&rep.grid, run.create("controls.txt")?)?;
    let ev = run.evaluator(&opts);
    let (_, adj) = ev.gradient_on(&rep.trajectory, &run.spec.objective)?;
    adj.write_csv(&rep.trajectory, run.create("adjoint.csv")?)?;
    let rows = check_gradient_with(&ev, &run.spec.objective, &rep.grid, fd_step(&run.spec))?;
    write_report(&rows, run.create("gradient.csv")?)?;

    println!("problem {}: {} after {} iterations", run.spec.name, if rep.converged { "converged" } else { "stopped" }, rep.iterations);
    if let Some(reason) = &rep.stop_reason {
        println!("  stop reason: {reason}");
    }
    println!("  objective {:.12e}", rep.objective);
    println!("  max equality violation {:.3e}, max inequality violation {:.3e}, sigma {:.3e}", rep.max_eq, rep.max_ineq, rep.sigma);
    let x: Vec<String> = rep.trajectory.x_final.iter().map(|v| format!("{v:.9}")).collect();
    println!("  x(tf) = [{}], final phase {}", x.join(", "), rep.trajectory.phase_final.as_str());
    for t in &rep.trajectory.transitions {
        println!("  transition {:?} at t = {:.6}", t.kind, t.t_t);
    }
    Ok(if rep.converged { Outcome::Ok } else { Outcome::MaxIter })
}

pub fn simulate_cmd(run: &Run) -> Result<Outcome> {
    let opts = run.options();
    let traj = run.evaluator(&opts).trajectory(&run.spec.grid)?;
    traj.write_csv(run.create("trajectory.csv")?)?;
    let x: Vec<String> = traj.x_final.iter().map(|v| format!("{v:.12e}")).collect();
    println!("problem {}: {} steps, final phase {}", run.spec.name, traj.n_steps(), traj.phase_final.as_str());
    println!("  x(tf) = [{}]", x.join(", "));
    for t in &traj.transitions {
        println!("  transition {:?} at t = {:.9}", t.kind, t.t_t);
    }
    Ok(Outcome::Ok)
}

/// Difference step for the gradient check. The analytic objective is
/// quadratic, so a wide step is exact; elsewhere the step balances
/// truncation against rounding for gradient entries near `1e-6`.
fn fd_step(spec: &ProblemSpec) -> impl Fn(f64) -> f64 + Sync + Send {
    let quadratic = spec.name == "analytic-linear";
    move |u: f64| if quadratic { 1e-3 } else { 1e-4 * (1.0 + u.abs()) }
}

fn gradient_tolerance(spec: &ProblemSpec) -> f64 {
    if spec.name == "analytic-linear" {
        1e-8
    } else {
        1e-6
    }
}

pub fn check_gradient_cmd(run: &Run) -> Result<Outcome> {
    let opts = run.options();
    let ev = run.evaluator(&opts);
    let transitions = ev.trajectory(&run.spec.grid)?.transitions.len();
    let tol = gradient_tolerance(&run.spec);
    let mut pass = true;
    println!("problem {}: {transitions} transitions, tolerance {tol:e}", run.spec.name);
    let named = std::iter::once(("objective".to_string(), &run.spec.objective))
        .chain(run.spec.equalities.iter().enumerate().map(|(i, f)| (format!("eq{i}"), f)))
        .chain(run.spec.inequalities.iter().enumerate().map(|(i, f)| (format!("ineq{i}"), f)));
    for (tag, f) in named {
        let rows = check_gradient_with(&ev, f, &run.spec.grid, fd_step(&run.spec))?;
        write_report(&rows, run.create(&format!("gradient-{tag}.csv"))?)?;
        let err = max_rel_err(&rows);
        let skipped = rows.iter().filter(|r| r.fd.is_none()).count();
        let ok = err <= tol;
        pass &= ok;
        println!(
            "  {tag} {}: max rel err {err:.3e} {}{}",
            f.name,
            if ok { "ok" } else { "FAIL" },
            if skipped > 0 { format!(" ({skipped} parameters without a valid oracle)") } else { String::new() }
        );
    }
    Ok(if pass { Outcome::Ok } else { Outcome::Anomaly })
}

/// Base mesh of the default study for each problem.
fn study_base(name: &str) -> usize {
    match name {
        "race-car" => 20,
        // finer bases reach the rounding floor of the state error
        "mass-spring" => 25,
        _ => 50,
    }
}

pub fn study_cmd(run: &Run) -> Result<Outcome> {
    let base = run.cfg.steps.unwrap_or_else(|| study_base(&run.spec.name));
    let meshes = halvings(base, STUDY_MESHES);
    let opts = run.options();
    let spec = &run.spec;
    let report: StudyReport = match spec.name.as_str() {
        // the default guess grazes the surface; the drifting control
        // crosses it once, transversally
        "race-car" => study::jump_study(&problems::race_car_drift(), &run.tableau, &opts, &meshes, STUDY_REFERENCE)?,
        "analytic-linear" => study::order_study(spec, &run.tableau, &opts, &meshes, STUDY_REFERENCE, &study::ODE_ORDERS)?,
        "mass-spring" => {
            // x2(tf) is pinned to the belt speed while sliding, so its
            // gradient vanishes; study x1(tf) under the free response
            let entry = problems::mass_spring_entry();
            study::order_study(&entry, &run.tableau, &opts, &meshes, STUDY_REFERENCE, &study::SLIDING_ORDERS)?
        }
        _ => study::order_study(spec, &run.tableau, &opts, &meshes, STUDY_REFERENCE, &study::SLIDING_ORDERS)?,
    };
    report.write_csv(run.create("study.csv")?)?;
    print!("{}", report.summary());
    Ok(if report.pass() { Outcome::Ok } else { Outcome::Anomaly })
}
