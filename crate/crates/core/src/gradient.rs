//! Reduced gradients with respect to piecewise-constant controls.

use std::io::Write;

use crate::adjoint::{backward_sweep, AdjointRecord, JumpFormula};
use crate::error::{Error, Result};
use crate::forward::{integrate, IntegratorOptions, TrajectoryRecord};
use crate::model::{phase_field_u, ControlGrid, Functional, HybridModel, Vector};
use crate::tableau::Tableau;

/// `∂φ/∂u_n` for every interval and channel, stored interval-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedGradient {
    pub functional: String,
    pub n_intervals: usize,
    pub n_u: usize,
    pub values: Vec<f64>,
}

impl ReducedGradient {
    pub fn get(&self, n: usize, channel: usize) -> f64 {
        self.values[n * self.n_u + channel]
    }
}

/// Assembles `∂φ/∂u_n = −Σ_k h(k) Σ_i b_i f_u(x_i(k+1), u_n)ᵀ λ_fi(k)` over
/// the steps of interval `n`, plus `π ∂e/∂u` for transitions whose event
/// function depends on the control.
pub fn assemble(
    model: &dyn HybridModel,
    tab: &Tableau,
    traj: &TrajectoryRecord,
    adj: &AdjointRecord,
    name: &str,
) -> Result<ReducedGradient> {
    if adj.stage_f.len() != traj.steps.len() {
        return Err(Error::Dimension(format!(
            "adjoint has {} steps, trajectory {}",
            adj.stage_f.len(),
            traj.steps.len()
        )));
    }
    let n_u = traj.grid.n_u();
    let mut values = vec![0.0; traj.grid.n_intervals() * n_u];
    for (step, lf) in traj.steps.iter().zip(&adj.stage_f) {
        let u = &traj.grid.values[step.n];
        let mut acc = Vector::zeros(n_u);
        for i in 0..tab.stages {
            let fu = phase_field_u(model, step.phase, &step.xs[i], u);
            acc -= fu.transpose() * &lf[i] * (step.h * tab.b[i]);
        }
        for c in 0..n_u {
            values[step.n * n_u + c] += acc[c];
        }
    }
    for jump in &adj.jumps {
        for c in 0..n_u {
            values[jump.n * n_u + c] += jump.pi * jump.e_u[c];
        }
    }
    Ok(ReducedGradient {
        functional: name.to_string(),
        n_intervals: traj.grid.n_intervals(),
        n_u,
        values,
    })
}

/// Everything needed to evaluate endpoint functionals of a control grid.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub model: &'a dyn HybridModel,
    pub tableau: &'a Tableau,
    pub x0: &'a Vector,
    pub options: &'a IntegratorOptions,
    pub jump: JumpFormula,
}

impl Evaluator<'_> {
    pub fn trajectory(&self, grid: &ControlGrid) -> Result<TrajectoryRecord> {
        integrate(self.model, self.tableau, grid, self.x0, self.options)
    }

    /// Adjoint gradient of `f` on an already integrated trajectory.
    pub fn gradient_on(&self, traj: &TrajectoryRecord, f: &Functional) -> Result<(ReducedGradient, AdjointRecord)> {
        let adj = backward_sweep(self.model, self.tableau, traj, &f.gradient(&traj.x_final), self.jump)?;
        let g = assemble(self.model, self.tableau, traj, &adj, &f.name)?;
        Ok((g, adj))
    }

    /// `(φ, number of transitions)` for the given controls.
    pub fn value(&self, grid: &ControlGrid, f: &Functional) -> Result<(f64, usize)> {
        let traj = self.trajectory(grid)?;
        Ok((f.value(&traj.x_final), traj.transitions.len()))
    }
}

/// Default finite-difference step for a parameter value.
pub fn fd_step(u: f64) -> f64 {
    1e-6 * (1.0 + u.abs())
}

/// Central difference of `f` with respect to flat control parameter `index`.
///
/// Both perturbed trajectories must have the same number of transitions,
/// otherwise the objective is not differentiable across the stencil and the
/// oracle is rejected.
pub fn fd_oracle(ev: &Evaluator, f: &Functional, grid: &ControlGrid, index: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("finite-difference step must be positive, got {delta}")));
    }
    let flat = grid.to_flat();
    if index >= flat.len() {
        return Err(Error::Dimension(format!("parameter {index} out of range")));
    }
    let mut plus = flat.clone();
    plus[index] += delta;
    let mut minus = flat;
    minus[index] -= delta;
    let (fp, np) = ev.value(&grid.with_flat(&plus)?, f)?;
    let (fm, nm) = ev.value(&grid.with_flat(&minus)?, f)?;
    if np != nm {
        return Err(Error::OracleInvalid { index, minus: nm, plus: np });
    }
    Ok((fp - fm) / (2.0 * delta))
}

/// One row of a gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckRow {
    pub n: usize,
    pub channel: usize,
    pub adjoint: f64,
    /// `None` when the oracle was rejected for this parameter.
    pub fd: Option<f64>,
    pub rel_err: Option<f64>,
}

/// Floor of the error normalization for gradients that vanish identically.
pub const ABS_FLOOR: f64 = 1e-10;

/// Relative error normalized by `max(|fd|, 1e-3·scale, ABS_FLOOR)`, where
/// `scale` is the largest finite-difference component. The floors keep
/// components that vanish analytically from dominating the report through
/// rounding noise.
pub fn relative_error(adjoint: f64, fd: f64, scale: f64) -> f64 {
    let denom = fd.abs().max(1e-3 * scale).max(ABS_FLOOR);
    (adjoint - fd).abs() / denom
}

/// Compares the adjoint gradient of `f` with the finite-difference oracle in
/// every parameter, evaluating the oracle in parallel.
pub fn check_gradient(ev: &Evaluator, f: &Functional, grid: &ControlGrid) -> Result<Vec<GradientCheckRow>> {
    check_gradient_with(ev, f, grid, fd_step)
}

/// `check_gradient` with a caller-chosen difference step per parameter.
pub fn check_gradient_with(
    ev: &Evaluator,
    f: &Functional,
    grid: &ControlGrid,
    step: impl Fn(f64) -> f64 + Sync + Send,
) -> Result<Vec<GradientCheckRow>> {
    let traj = ev.trajectory(grid)?;
    let (g, _) = ev.gradient_on(&traj, f)?;
    let flat = grid.to_flat();
    let fds: Vec<Result<f64>> = crate::par::map_range(flat.len(), |i| fd_oracle(ev, f, grid, i, step(flat[i])));
    let mut fd_vals = Vec::with_capacity(fds.len());
    for r in fds {
        match r {
            Ok(v) => fd_vals.push(Some(v)),
            Err(Error::OracleInvalid { .. }) => fd_vals.push(None),
            Err(e) => return Err(e),
        }
    }
    let scale = fd_vals.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(fd_vals
        .into_iter()
        .enumerate()
        .map(|(i, fd)| GradientCheckRow {
            n: i / g.n_u,
            channel: i % g.n_u,
            adjoint: g.values[i],
            fd,
            rel_err: fd.map(|v| relative_error(g.values[i], v, scale)),
        })
        .collect())
}

pub fn max_rel_err(rows: &[GradientCheckRow]) -> f64 {
    rows.iter().filter_map(|r| r.rel_err).fold(0.0, f64::max)
}

/// Writes `n, channel, adjoint_grad, fd_grad, rel_err`.
pub fn write_report(rows: &[GradientCheckRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "n,channel,adjoint_grad,fd_grad,rel_err")?;
    for r in rows {
        let fd = r.fd.map_or("nan".to_string(), |v| format!("{v:.17e}"));
        let re = r.rel_err.map_or("nan".to_string(), |v| format!("{v:.6e}"));
        writeln!(w, "{},{},{:.17e},{},{}", r.n, r.channel, r.adjoint, fd, re)?;
    }
    Ok(())
}
