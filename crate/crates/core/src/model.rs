//! The hybrid-system contract and the control parameterization.
//!
//! A model has two ODE regions separated by a scalar switching surface
//! `g(x) = 0` (region 1 where `g < 0`, region 2 where `g > 0`) and a sliding
//! mode described by the index-2 Hessenberg DAE
//!
//! ```text
//! x' = f_F(x, u) + g_x(x)ᵀ z,    0 = g(x).
//! ```

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Which vector field of a hybrid model to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    /// `f¹`, active where `g(x) < 0`.
    Region1,
    /// The ODE field active where `g(x) > 0`.
    Region2,
    /// `f_F`, the base field of the sliding DAE.
    Filippov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhaseLabel {
    OdeRegion1,
    OdeRegion2,
    Sliding,
}

impl PhaseLabel {
    pub fn is_sliding(self) -> bool {
        self == PhaseLabel::Sliding
    }

    /// The ODE field used in this phase; `None` while sliding.
    pub fn ode_field(self) -> Option<Field> {
        match self {
            PhaseLabel::OdeRegion1 => Some(Field::Region1),
            PhaseLabel::OdeRegion2 => Some(Field::Region2),
            PhaseLabel::Sliding => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::OdeRegion1 => "region1",
            PhaseLabel::OdeRegion2 => "region2",
            PhaseLabel::Sliding => "sliding",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dynamics of a hybrid system with one switching surface.
///
/// Implementations must be pure: every evaluator takes all state as
/// arguments, so one model can be shared by concurrent integrations.
pub trait HybridModel: Send + Sync {
    fn name(&self) -> &str;
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    /// Number of surface rows. Only scalar surfaces are exercised.
    fn n_z(&self) -> usize {
        1
    }

    fn field(&self, which: Field, x: &Vector, u: &Vector) -> Vector;
    fn field_x(&self, which: Field, x: &Vector, u: &Vector) -> Matrix;
    fn field_u(&self, which: Field, x: &Vector, u: &Vector) -> Matrix;

    /// `g(x)`, length `n_z`.
    fn surface(&self, x: &Vector) -> Vector;
    /// `g_x(x)`, `n_z × n_x`.
    fn surface_x(&self, x: &Vector) -> Matrix;
    /// `(g_x(x)ᵀ z)_x`, i.e. `Σ_j z_j ∇²g_j(x)`, `n_x × n_x`.
    fn surface_curvature(&self, x: &Vector, z: &Vector) -> Matrix;

    /// Residuals that stay positive while sliding is admissible.
    ///
    /// The default is the attractivity condition of the two neighbouring
    /// fields, `(g_x f¹, -g_x f²)`, which is equivalent to bounding the
    /// equivalent control `z` between the friction limits of both shipped
    /// problems. Sliding ends when either residual reaches zero; residual 0
    /// hands over to region 1 and residual 1 to region 2.
    fn slide_residuals(&self, x: &Vector, u: &Vector) -> [f64; 2] {
        let gx = self.surface_x(x);
        let r1 = (&gx * self.field(Field::Region1, x, u))[0];
        let r2 = -(&gx * self.field(Field::Region2, x, u))[0];
        [r1, r2]
    }

    /// Gradients `(∂r/∂x, ∂r/∂u)` of [`HybridModel::slide_residuals`].
    fn slide_residuals_grad(&self, x: &Vector, u: &Vector) -> [(Vector, Vector); 2] {
        let gx = self.surface_x(x);
        let hess = self.surface_curvature(x, &Vector::from_element(1, 1.0));
        let grad = |which: Field, sign: f64| {
            let f = self.field(which, x, u);
            let rx = (gx.row(0) * self.field_x(which, x, u)).transpose() + &hess * &f;
            let ru = (gx.row(0) * self.field_u(which, x, u)).transpose();
            (rx * sign, ru * sign)
        };
        [grad(Field::Region1, 1.0), grad(Field::Region2, -1.0)]
    }
}

/// Sliding field `f²(x, z, u) = f_F(x, u) + g_x(x)ᵀ z`.
pub fn f2(model: &dyn HybridModel, x: &Vector, z: &Vector, u: &Vector) -> Vector {
    model.field(Field::Filippov, x, u) + model.surface_x(x).transpose() * z
}

/// `∂f²/∂x = (f_F)_x + (g_xᵀ z)_x`.
pub fn f2_x(model: &dyn HybridModel, x: &Vector, z: &Vector, u: &Vector) -> Matrix {
    model.field_x(Field::Filippov, x, u) + model.surface_curvature(x, z)
}

/// Field of the given phase; `z` is only read while sliding.
pub fn phase_field(
    model: &dyn HybridModel,
    phase: PhaseLabel,
    x: &Vector,
    z: &Vector,
    u: &Vector,
) -> Vector {
    match phase.ode_field() {
        Some(which) => model.field(which, x, u),
        None => f2(model, x, z, u),
    }
}

/// `∂f/∂x` of the given phase.
pub fn phase_field_x(
    model: &dyn HybridModel,
    phase: PhaseLabel,
    x: &Vector,
    z: &Vector,
    u: &Vector,
) -> Matrix {
    match phase.ode_field() {
        Some(which) => model.field_x(which, x, u),
        None => f2_x(model, x, z, u),
    }
}

/// `∂f/∂u` of the given phase. Sliding uses `(f_F)_u`, which does not depend
/// on `z`.
pub fn phase_field_u(model: &dyn HybridModel, phase: PhaseLabel, x: &Vector, u: &Vector) -> Matrix {
    model.field_u(phase.ode_field().unwrap_or(Field::Filippov), x, u)
}

/// Algebraic variable that makes `f²` tangent to the surface:
/// `z = -(g_x g_xᵀ)⁻¹ g_x f_F(x, u)`.
pub fn consistent_z(model: &dyn HybridModel, x: &Vector, u: &Vector) -> Result<Vector> {
    let gx = model.surface_x(x);
    let gram = &gx * gx.transpose();
    let rhs = -(&gx * model.field(Field::Filippov, x, u));
    gram.lu()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::IndexCondition("g_x g_xᵀ is singular".into()))
}

/// Central finite-difference Jacobian with step `1e-6·(1 + |x_j|)`.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let f0 = f(x);
    let mut jac = Matrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let step = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (f(&xp) - f(&xm)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

/// Largest relative discrepancy between a model's analytic Jacobians and
/// central finite differences at `(x, z, u)`.
pub fn jacobian_discrepancy(model: &dyn HybridModel, x: &Vector, z: &Vector, u: &Vector) -> f64 {
    fn rel(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax() / (1.0 + b.amax())
    }
    let mut worst: f64 = 0.0;
    for which in [Field::Region1, Field::Region2, Field::Filippov] {
        let jx = fd_jacobian(|xx| model.field(which, xx, u), x);
        let ju = fd_jacobian(|uu| model.field(which, x, uu), u);
        worst = worst.max(rel(&model.field_x(which, x, u), &jx));
        worst = worst.max(rel(&model.field_u(which, x, u), &ju));
    }
    let gx = fd_jacobian(|xx| model.surface(xx), x);
    worst = worst.max(rel(&model.surface_x(x), &gx));
    let curv = fd_jacobian(|xx| model.surface_x(xx).transpose() * z, x);
    worst = worst.max(rel(&model.surface_curvature(x, z), &curv));
    let [(r1x, r1u), (r2x, r2u)] = model.slide_residuals_grad(x, u);
    let rx = fd_jacobian(
        |xx| Vector::from_row_slice(&model.slide_residuals(xx, u)),
        x,
    );
    let ru = fd_jacobian(
        |uu| Vector::from_row_slice(&model.slide_residuals(x, uu)),
        u,
    );
    let mut ax = Matrix::zeros(2, x.len());
    ax.set_row(0, &r1x.transpose());
    ax.set_row(1, &r2x.transpose());
    let mut au = Matrix::zeros(2, u.len());
    au.set_row(0, &r1u.transpose());
    au.set_row(1, &r2u.transpose());
    worst.max(rel(&ax, &rx)).max(rel(&au, &ru))
}

/// Piecewise-constant controls on a uniform partition of `[t0, tf]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    pub t0: f64,
    pub tf: f64,
    pub values: Vec<Vector>,
    pub lower: Vector,
    pub upper: Vector,
}

impl ControlGrid {
    pub fn constant(t0: f64, tf: f64, n: usize, value: Vector, lower: Vector, upper: Vector) -> Self {
        ControlGrid {
            t0,
            tf,
            values: vec![value; n],
            lower,
            upper,
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn n_u(&self) -> usize {
        self.lower.len()
    }

    /// `τ_n`, for `n = 0..=N`.
    pub fn boundary(&self, n: usize) -> f64 {
        if n == self.n_intervals() {
            self.tf
        } else {
            self.t0 + (self.tf - self.t0) * n as f64 / self.n_intervals() as f64
        }
    }

    pub fn width(&self, n: usize) -> f64 {
        self.boundary(n + 1) - self.boundary(n)
    }

    /// Flattened decision vector, interval-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    /// Returns a copy with values taken from a flattened vector.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let nu = self.n_u();
        if flat.len() != nu * self.n_intervals() {
            return Err(Error::Dimension(format!(
                "expected {} control parameters, got {}",
                nu * self.n_intervals(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        for (n, v) in out.values.iter_mut().enumerate() {
            *v = Vector::from_row_slice(&flat[n * nu..(n + 1) * nu]);
        }
        Ok(out)
    }

    pub fn lower_flat(&self) -> Vec<f64> {
        (0..self.n_intervals()).flat_map(|_| self.lower.iter().copied()).collect()
    }

    pub fn upper_flat(&self) -> Vec<f64> {
        (0..self.n_intervals()).flat_map(|_| self.upper.iter().copied()).collect()
    }

    pub fn within_bounds(&self) -> bool {
        self.values.iter().all(|v| {
            v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
        })
    }
}

/// An endpoint functional `φ(x(t_f))` with its gradient.
#[derive(Clone)]
pub struct Functional {
    pub name: String,
    value: Arc<dyn Fn(&Vector) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl Functional {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Functional {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// `scale · (x_index - offset)`.
    pub fn component(name: impl Into<String>, index: usize, offset: f64, scale: f64) -> Self {
        Functional::new(
            name,
            move |x| scale * (x[index] - offset),
            move |x| {
                let mut g = Vector::zeros(x.len());
                g[index] = scale;
                g
            },
        )
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional").field("name", &self.name).finish()
    }
}
