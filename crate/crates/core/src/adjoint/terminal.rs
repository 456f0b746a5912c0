//! Consistent terminal values of the adjoint variables on a sliding end.

use crate::error::{Error, Result};
use crate::model::{f2, f2_x, Field, HybridModel, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalSolution {
    pub lambda_f: Vector,
    /// Empty when the trajectory does not end in sliding.
    pub lambda_g: Vector,
    pub nu: f64,
    /// ∞-norm residual of the solved linear system.
    pub residual: f64,
}

/// Terminal values `(λ_f, λ_g, ν_1)` at `t_f`.
///
/// With a sliding end (`z = Some(..)`) the system
///
/// ```text
/// φ_xᵀ + λ_f = ν_1 g_xᵀ
/// 0 = g_x λ_f
/// 0 = (g_x)' λ_f − g_x (f_F)_xᵀ λ_f − g_x (g_xᵀ z)_xᵀ λ_f + g_x g_xᵀ λ_g
/// ```
///
/// is solved, where `(g_x)' = (∇²g · f²)ᵀ` is evaluated from the model's
/// curvature contraction. Otherwise `λ_f = −φ_xᵀ`.
pub fn terminal_conditions(
    model: &dyn HybridModel,
    x: &Vector,
    z: Option<&Vector>,
    u: &Vector,
    phi_x: &Vector,
) -> Result<TerminalSolution> {
    let Some(z) = z else {
        return Ok(TerminalSolution {
            lambda_f: -phi_x,
            lambda_g: Vector::zeros(0),
            nu: 0.0,
            residual: 0.0,
        });
    };
    let n = model.n_x();
    if model.n_z() != 1 || z.len() != 1 {
        return Err(Error::Config("terminal solve supports scalar surfaces only".into()));
    }
    let gx = model.surface_x(x).row(0).transpose();
    let f = f2(model, x, z, u);
    let hess = model.surface_curvature(x, &Vector::from_element(1, 1.0));
    // (g_x)' as a row: fᵀ ∇²g
    let gx_dot = &hess * &f;
    let fx = model.field_x(Field::Filippov, x, u);
    let curv = model.surface_curvature(x, z);
    // row of the hidden constraint acting on λ_f
    let hidden = gx_dot - fx * &gx - curv * &gx;
    let dim = n + 2;
    let mut a = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    // unknowns: λ_f (n), λ_g, ν_1
    for i in 0..n {
        a[(i, i)] = 1.0;
        a[(i, n + 1)] = -gx[i];
        rhs[i] = -phi_x[i];
        a[(n, i)] = gx[i];
        a[(n + 1, i)] = hidden[i];
    }
    a[(n + 1, n)] = gx.norm_squared();
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IndexCondition("singular terminal adjoint system".into()))?;
    let residual = (&a * &sol - &rhs).amax();
    Ok(TerminalSolution {
        lambda_f: sol.rows(0, n).into_owned(),
        lambda_g: Vector::from_element(1, sol[n]),
        nu: sol[n + 1],
        residual,
    })
}

/// Residuals of the three terminal equations at a candidate solution; used
/// by tests as an independent check on the assembled matrix.
pub fn terminal_residual(
    model: &dyn HybridModel,
    x: &Vector,
    z: &Vector,
    u: &Vector,
    phi_x: &Vector,
    sol: &TerminalSolution,
) -> f64 {
    let gx = model.surface_x(x);
    let lf = &sol.lambda_f;
    let r1 = phi_x + lf - gx.transpose() * sol.nu;
    let r2 = (&gx * lf)[0];
    let f = f2(model, x, z, u);
    let hess = model.surface_curvature(x, &Vector::from_element(1, 1.0));
    let gx_dot = (hess * f).transpose();
    // full f²_x, minus the base Jacobian, is the curvature term
    let curv = f2_x(model, x, z, u) - model.field_x(Field::Filippov, x, u);
    let r3 = (gx_dot * lf)[0] - (&gx * model.field_x(Field::Filippov, x, u).transpose() * lf)[0]
        - (&gx * curv.transpose() * lf)[0]
        + (&gx * gx.transpose())[(0, 0)] * sol.lambda_g[0];
    r1.amax().max(r2.abs()).max(r3.abs())
}
