//! Radau IIA stage solves for ODE and sliding-DAE steps.

#![allow(clippy::too_many_arguments)]

use crate::error::{Error, Result};
use crate::model::{f2, f2_x, HybridModel, Matrix, PhaseLabel, Vector};
use crate::tableau::Tableau;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on the ∞-norm of the stage residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 25,
        }
    }
}

/// Converged stage values of one step.
#[derive(Clone, Debug)]
pub struct StageSolution {
    pub xs: Vec<Vector>,
    /// Empty for ODE steps.
    pub zs: Vec<Vector>,
    pub x_next: Vector,
    /// Empty for ODE steps.
    pub z_next: Vector,
    pub iterations: usize,
    pub residual: f64,
}

fn stage_field(
    model: &dyn HybridModel,
    phase: PhaseLabel,
    x: &Vector,
    z: Option<&Vector>,
    u: &Vector,
) -> Vector {
    match (phase.ode_field(), z) {
        (Some(which), _) => model.field(which, x, u),
        (None, Some(z)) => f2(model, x, z, u),
        (None, None) => unreachable!("sliding stage without algebraic value"),
    }
}

fn stage_field_x(
    model: &dyn HybridModel,
    phase: PhaseLabel,
    x: &Vector,
    z: Option<&Vector>,
    u: &Vector,
) -> Matrix {
    match (phase.ode_field(), z) {
        (Some(which), _) => model.field_x(which, x, u),
        (None, Some(z)) => f2_x(model, x, z, u),
        (None, None) => unreachable!("sliding stage without algebraic value"),
    }
}

/// Jacobian of the stacked stage residual.
///
/// Unknowns are ordered `(x_1..x_s, h·z_1..h·z_s)`; scaling the algebraic
/// unknowns by `h` keeps both column groups O(1).
pub(crate) fn stage_jacobian(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    xs: &[Vector],
    zs: &[Vector],
    u: &Vector,
    h: f64,
) -> Matrix {
    let s = tab.stages;
    let n = model.n_x();
    let m = if phase.is_sliding() { model.n_z() } else { 0 };
    let dim = s * (n + m);
    let mut jac = Matrix::zeros(dim, dim);
    for j in 0..s {
        let fx = stage_field_x(model, phase, &xs[j], zs.get(j), u);
        let gx = if m > 0 { Some(model.surface_x(&xs[j])) } else { None };
        for i in 0..s {
            let a = tab.a[(i, j)];
            let mut blk = jac.view_mut((i * n, j * n), (n, n));
            blk -= &fx * (h * a);
            if i == j {
                for d in 0..n {
                    blk[(d, d)] += 1.0;
                }
            }
            if let Some(gx) = &gx {
                let mut zb = jac.view_mut((i * n, s * n + j * m), (n, m));
                zb -= gx.transpose() * a;
            }
        }
        if let Some(gx) = &gx {
            jac.view_mut((s * n + j * m, j * n), (m, n)).copy_from(gx);
        }
    }
    jac
}

fn stage_residual(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    x: &Vector,
    xs: &[Vector],
    zs: &[Vector],
    u: &Vector,
    h: f64,
) -> Vector {
    let s = tab.stages;
    let n = model.n_x();
    let m = if phase.is_sliding() { model.n_z() } else { 0 };
    let fs: Vec<Vector> = (0..s)
        .map(|j| stage_field(model, phase, &xs[j], zs.get(j), u))
        .collect();
    let mut r = Vector::zeros(s * (n + m));
    for i in 0..s {
        let mut ri = &xs[i] - x;
        for j in 0..s {
            ri.axpy(-h * tab.a[(i, j)], &fs[j], 1.0);
        }
        r.rows_mut(i * n, n).copy_from(&ri);
        if m > 0 {
            r.rows_mut(s * n + i * m, m).copy_from(&model.surface(&xs[i]));
        }
    }
    r
}

fn solve_stages(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    t: f64,
    x: &Vector,
    z: &Vector,
    u: &Vector,
    h: f64,
    opts: &NewtonOptions,
) -> Result<StageSolution> {
    let s = tab.stages;
    let n = model.n_x();
    let m = if phase.is_sliding() { model.n_z() } else { 0 };
    if m > 0 && z.len() != m {
        return Err(Error::Dimension(format!(
            "sliding step needs z of length {m}, got {}",
            z.len()
        )));
    }
    let mut xs = vec![x.clone(); s];
    let mut zs = if m > 0 { vec![z.clone(); s] } else { Vec::new() };
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    // After the tolerance is met one more correction is applied, which takes
    // the stage values to roundoff and keeps finite-difference checks clean.
    while iterations < opts.max_iter {
        let r = stage_residual(model, tab, phase, x, &xs, &zs, u, h);
        residual = r.amax();
        if !residual.is_finite() {
            break;
        }
        if converged {
            break;
        }
        if residual <= opts.tol {
            converged = true;
        }
        let jac = stage_jacobian(model, tab, phase, &xs, &zs, u, h);
        let delta = jac.lu().solve(&(-r)).ok_or_else(|| {
            Error::IndexCondition(format!("singular stage Jacobian at t = {t}"))
        })?;
        for i in 0..s {
            xs[i] += delta.rows(i * n, n);
            if m > 0 {
                zs[i] += delta.rows(s * n + i * m, m) / h;
            }
        }
        iterations += 1;
    }
    if !converged {
        return Err(Error::NewtonFailure {
            t,
            residual,
            iterations,
        });
    }
    let mut x_next = x.clone();
    for i in 0..s {
        let fi = stage_field(model, phase, &xs[i], zs.get(i), u);
        x_next.axpy(h * tab.b[i], &fi, 1.0);
    }
    let z_next = if m > 0 {
        let mut zn = z.clone();
        for i in 0..s {
            zn.axpy(tab.b_minus[i], &(&zs[i] - z), 1.0);
        }
        zn
    } else {
        Vector::zeros(0)
    };
    Ok(StageSolution {
        xs,
        zs,
        x_next,
        z_next,
        iterations,
        residual,
    })
}

/// One Radau IIA step of an ODE phase.
pub fn step_ode(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    x: &Vector,
    u: &Vector,
    h: f64,
    opts: &NewtonOptions,
) -> Result<StageSolution> {
    if phase.is_sliding() {
        return Err(Error::Precondition("step_ode called for a sliding phase".into()));
    }
    solve_stages(model, tab, phase, f64::NAN, x, &Vector::zeros(0), u, h, opts)
}

/// One Radau IIA step of the sliding DAE.
///
/// `z` only enters the update `z(k+1) = z(k) + Σ b⁻_i (z_i − z(k))` and the
/// Newton starting guess; the stage system itself does not depend on it.
pub fn step_dae(
    model: &dyn HybridModel,
    tab: &Tableau,
    x: &Vector,
    z: &Vector,
    u: &Vector,
    h: f64,
    opts: &NewtonOptions,
) -> Result<StageSolution> {
    solve_stages(model, tab, PhaseLabel::Sliding, f64::NAN, x, z, u, h, opts)
}

/// Dispatches on the phase and tags failures with the step start time.
pub fn step(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    t: f64,
    x: &Vector,
    z: &Vector,
    u: &Vector,
    h: f64,
    opts: &NewtonOptions,
) -> Result<StageSolution> {
    solve_stages(model, tab, phase, t, x, z, u, h, opts)
}

/// Sensitivity of a converged step with respect to its length.
///
/// Returns `w` with `dx(k+1)/dh = −w`, obtained from `F_{X⁺} w = F_h` where
/// `F` stacks the stage equations and the update for `x(k+1)`.
pub fn step_length_sensitivity(
    model: &dyn HybridModel,
    tab: &Tableau,
    phase: PhaseLabel,
    xs: &[Vector],
    zs: &[Vector],
    u: &Vector,
    h: f64,
) -> Result<Vector> {
    let s = tab.stages;
    let n = model.n_x();
    let m = if phase.is_sliding() { model.n_z() } else { 0 };
    let fs: Vec<Vector> = (0..s)
        .map(|j| stage_field(model, phase, &xs[j], zs.get(j), u))
        .collect();
    let mut rhs = Vector::zeros(s * (n + m));
    for i in 0..s {
        let mut ri = Vector::zeros(n);
        for j in 0..s {
            ri.axpy(-tab.a[(i, j)], &fs[j], 1.0);
        }
        rhs.rows_mut(i * n, n).copy_from(&ri);
    }
    let jac = stage_jacobian(model, tab, phase, xs, zs, u, h);
    let w = jac
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IndexCondition("singular stage Jacobian in sensitivity".into()))?;
    let mut last = Vector::zeros(n);
    for i in 0..s {
        last.axpy(-tab.b[i], &fs[i], 1.0);
        let fx = stage_field_x(model, phase, &xs[i], zs.get(i), u);
        last += (&fx * w.rows(i * n, n)) * (h * tab.b[i]);
        if m > 0 {
            // the algebraic block of w is already scaled by h
            let gx = model.surface_x(&xs[i]);
            last += gx.transpose() * w.rows(s * n + i * m, m) * tab.b[i];
        }
    }
    Ok(last)
}
