//! Empirical convergence orders under step halving.

use std::io::Write;

use crate::adjoint::{AdjointRecord, JumpFormula};
use crate::error::{Error, Result};
use crate::forward::{IntegratorOptions, TrajectoryRecord};
use crate::gradient::{Evaluator, ReducedGradient};
use crate::problems::{self, ProblemSpec};
use crate::tableau::Tableau;

/// Error sequence of one quantity over the meshes of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub quantity: String,
    pub errors: Vec<f64>,
    pub slope: f64,
    /// Smallest acceptable fitted slope.
    pub min_slope: f64,
    /// Errors strictly decrease from mesh to mesh.
    pub monotone: bool,
}

impl Series {
    pub fn new(quantity: impl Into<String>, h: &[f64], errors: Vec<f64>, min_slope: f64) -> Self {
        Series {
            quantity: quantity.into(),
            slope: fit_slope(h, &errors),
            monotone: errors.windows(2).all(|w| w[1] < w[0]),
            errors,
            min_slope,
        }
    }

    pub fn pass(&self) -> bool {
        self.monotone && self.slope >= self.min_slope
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub name: String,
    /// Base step counts, coarsest first.
    pub meshes: Vec<usize>,
    pub h: Vec<f64>,
    pub reference_steps: usize,
    pub series: Vec<Series>,
}

impl StudyReport {
    pub fn pass(&self) -> bool {
        self.series.iter().all(Series::pass)
    }

    /// Series whose errors do not decrease monotonically.
    pub fn anomalies(&self) -> Vec<&Series> {
        self.series.iter().filter(|s| !s.monotone).collect()
    }

    pub fn series(&self, quantity: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.quantity == quantity)
    }

    /// Writes `quantity, steps, h, error`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "quantity,steps,h,error")?;
        for s in &self.series {
            for ((k, h), e) in self.meshes.iter().zip(&self.h).zip(&s.errors) {
                writeln!(w, "{},{},{:.6e},{:.6e}", s.quantity, k, h, e)?;
            }
        }
        Ok(())
    }

    /// One line per quantity.
    pub fn summary(&self) -> String {
        let mut out = format!("{} (reference K = {})\n", self.name, self.reference_steps);
        for s in &self.series {
            out += &format!(
                "  {:<12} slope {:>6.2} (min {:.1}) {} {}\n",
                s.quantity,
                s.slope,
                s.min_slope,
                if s.monotone { "monotone" } else { "NON-MONOTONE" },
                if s.pass() { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Minimal slopes of the order study, already including the allowance of
/// half an order below the theoretical value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedOrders {
    pub state: f64,
    pub algebraic: f64,
    pub adjoint: f64,
    pub gradient: f64,
}

pub const ODE_ORDERS: ExpectedOrders = ExpectedOrders {
    state: 4.5,
    algebraic: f64::NAN,
    adjoint: 3.5,
    gradient: 2.5,
};

pub const SLIDING_ORDERS: ExpectedOrders = ExpectedOrders {
    state: 4.5,
    algebraic: 2.5,
    adjoint: 1.5,
    gradient: 1.7,
};

pub const JUMP_MIN_SLOPE: f64 = 1.0;
pub const CROSSING_MIN_SLOPE: f64 = 3.5;

/// Meshes `K, 2K, 4K, 8K, 16K`.
pub fn halvings(k: usize, count: usize) -> Vec<usize> {
    (0..count).map(|j| k << j).collect()
}

struct Run {
    traj: TrajectoryRecord,
    adj: AdjointRecord,
    grad: ReducedGradient,
}

fn run(spec: &ProblemSpec, tab: &Tableau, opts: &IntegratorOptions, steps: usize, jump: JumpFormula) -> Result<Run> {
    let opts = IntegratorOptions { steps, ..opts.clone() };
    let ev = Evaluator {
        model: spec.model.as_ref(),
        tableau: tab,
        x0: &spec.x0,
        options: &opts,
        jump,
    };
    let traj = ev.trajectory(&spec.grid)?;
    let (grad, adj) = ev.gradient_on(&traj, &spec.objective)?;
    Ok(Run { traj, adj, grad })
}

/// Index of time `t` among the mesh points of `traj`.
fn find_time(traj: &TrajectoryRecord, t: f64) -> Option<usize> {
    let tol = 1e-9 * traj.base_step;
    let times = traj.times();
    let i = times.partition_point(|&s| s < t - tol);
    (i < times.len() && (times[i] - t).abs() <= tol).then_some(i)
}

/// Largest error at the mesh points of `coarse` that also belong to
/// `reference`, for a quantity extracted at mesh index `k`.
fn max_error<F>(coarse: &Run, reference: &Run, keep: impl Fn(&Run, usize) -> bool, value: F) -> f64
where
    F: Fn(&Run, usize) -> Option<crate::model::Vector>,
{
    let mut worst: f64 = 0.0;
    for (k, &t) in coarse.traj.times().iter().enumerate() {
        if !keep(coarse, k) {
            continue;
        }
        let Some(r) = find_time(&reference.traj, t) else {
            continue;
        };
        if let (Some(a), Some(b)) = (value(coarse, k), value(reference, r)) {
            if a.len() == b.len() {
                worst = worst.max((a - b).amax());
            }
        }
    }
    worst
}

fn algebraic_at(run: &Run, k: usize) -> Option<crate::model::Vector> {
    // z(k) for k ≥ 1 is the last stage of the previous step
    let prev = run.traj.steps.get(k.checked_sub(1)?)?;
    let here_sliding = run.traj.steps.get(k).map_or(run.traj.phase_final.is_sliding(), |s| s.phase.is_sliding());
    (prev.phase.is_sliding() && here_sliding).then(|| prev.z_next.clone())
}

/// Order study of state, algebraic state (when sliding occurs), adjoint and
/// reduced gradient, with errors measured against a run on a mesh
/// `ref_factor` times finer than the finest study mesh.
pub fn order_study(
    spec: &ProblemSpec,
    tab: &Tableau,
    opts: &IntegratorOptions,
    meshes: &[usize],
    ref_factor: usize,
    expected: &ExpectedOrders,
) -> Result<StudyReport> {
    if meshes.len() < 4 {
        return Err(Error::Config("slopes need at least four meshes".into()));
    }
    let reference_steps = meshes.iter().max().copied().unwrap_or(0) * ref_factor;
    let mut all: Vec<usize> = meshes.to_vec();
    all.push(reference_steps);
    let runs = crate::par::map(&all, |&k| run(spec, tab, opts, k, JumpFormula::Discrete));
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = runs.pop().expect("reference run");
    let h: Vec<f64> = runs.iter().map(|r| r.traj.base_step).collect();
    let n_points = |r: &Run| r.traj.times().len();

    let state: Vec<f64> = runs
        .iter()
        .map(|r| max_error(r, &reference, |_, _| true, |run, k| Some(run.traj.state(k).clone())))
        .collect();
    let mut series = vec![Series::new("state", &h, state, expected.state)];

    if reference.traj.has_sliding() {
        let z: Vec<f64> = runs.iter().map(|r| max_error(r, &reference, |_, _| true, algebraic_at)).collect();
        series.push(Series::new("algebraic", &h, z, expected.algebraic));
    }

    // the terminal adjoint on a sliding end solves a different system than
    // the interior recursion, so the final point is left out there
    let ends_sliding = reference.traj.phase_final.is_sliding();
    let adjoint: Vec<f64> = runs
        .iter()
        .map(|r| {
            max_error(
                r,
                &reference,
                |run, k| !(ends_sliding && k + 1 == n_points(run)),
                |run, k| Some(run.adj.lambda_f[k].clone()),
            )
        })
        .collect();
    series.push(Series::new("adjoint", &h, adjoint, expected.adjoint));

    let gradient: Vec<f64> = runs
        .iter()
        .map(|r| r.grad.values.iter().zip(&reference.grad.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    series.push(Series::new("gradient", &h, gradient, expected.gradient));

    Ok(StudyReport {
        name: format!("order study: {}", spec.name),
        meshes: meshes.to_vec(),
        h,
        reference_steps,
        series,
    })
}

/// Convergence of the jump magnitude π at the first located transition,
/// for both formulas, against a run `ref_factor` times finer than the
/// finest study mesh.
pub fn jump_study(
    spec: &ProblemSpec,
    tab: &Tableau,
    opts: &IntegratorOptions,
    meshes: &[usize],
    ref_factor: usize,
) -> Result<StudyReport> {
    let reference_steps = meshes.iter().max().copied().unwrap_or(0) * ref_factor;
    let mut all: Vec<usize> = meshes.to_vec();
    all.push(reference_steps);
    let mut series = Vec::new();
    let mut h = Vec::new();
    for formula in [JumpFormula::Discrete, JumpFormula::Simple] {
        let pis = crate::par::map(&all, |&k| {
            let r = run(spec, tab, opts, k, formula)?;
            let first = r
                .adj
                .jumps
                .iter()
                .min_by(|a, b| a.t_t.total_cmp(&b.t_t))
                .ok_or_else(|| Error::Precondition(format!("no located transition on the {k}-step mesh")))?;
            Ok((first.pi, r.traj.base_step))
        });
        let pis = pis.into_iter().collect::<Result<Vec<_>>>()?;
        let (pi_ref, _) = *pis.last().expect("reference");
        h = pis[..meshes.len()].iter().map(|p| p.1).collect();
        let errors = pis[..meshes.len()].iter().map(|p| (p.0 - pi_ref).abs()).collect();
        series.push(Series::new(format!("pi-{formula}"), &h, errors, JUMP_MIN_SLOPE));
    }
    Ok(StudyReport {
        name: format!("jump study: {}", spec.name),
        meshes: meshes.to_vec(),
        h,
        reference_steps,
        series,
    })
}

/// Located switching time against the exact crossing time `t_c`.
pub fn crossing_study(t_c: f64, tab: &Tableau, opts: &IntegratorOptions, meshes: &[usize]) -> Result<StudyReport> {
    let results = crate::par::map(meshes, |&k| {
        let spec = problems::crossing(t_c, k);
        let opts = IntegratorOptions { steps: k, ..opts.clone() };
        let traj = crate::forward::integrate(spec.model.as_ref(), tab, &spec.grid, &spec.x0, &opts)?;
        let tr = traj
            .located_transitions()
            .next()
            .ok_or_else(|| Error::Precondition(format!("no crossing located on the {k}-step mesh")))?;
        Ok(((tr.t_t - t_c).abs(), traj.base_step))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = results.iter().map(|r| r.1).collect();
    let errors = results.iter().map(|r| r.0).collect();
    Ok(StudyReport {
        name: format!("switching time, t_c = {t_c}"),
        meshes: meshes.to_vec(),
        series: vec![Series::new("switch-time", &h, errors, CROSSING_MIN_SLOPE)],
        h,
        reference_steps: 0,
    })
}
