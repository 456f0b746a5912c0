//! Linear test systems with closed-form solutions.

use crate::model::{Field, HybridModel, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearKind {
    /// `x' = λx + u`.
    Scalar { lambda: f64 },
    /// `x' = [[−1, ω], [−ω, −1]] x + (0, 1)ᵀ u`.
    Oscillator { omega: f64 },
}

/// A linear system, optionally augmented by the quadrature state
/// `q' = ½ uᵀu`. Both regions carry the same field and the surface is
/// placed far away, so trajectories never switch.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub quadrature: bool,
}

/// Offset of the unreachable switching surface `x_1 = FAR`.
pub const FAR: f64 = 1e2;

impl LinearModel {
    pub fn n_lin(&self) -> usize {
        match self.kind {
            LinearKind::Scalar { .. } => 1,
            LinearKind::Oscillator { .. } => 2,
        }
    }

    pub fn a(&self) -> Matrix {
        match self.kind {
            LinearKind::Scalar { lambda } => Matrix::from_element(1, 1, lambda),
            LinearKind::Oscillator { omega } => Matrix::from_row_slice(2, 2, &[-1.0, omega, -omega, -1.0]),
        }
    }

    pub fn b(&self) -> Matrix {
        match self.kind {
            LinearKind::Scalar { .. } => Matrix::from_element(1, 1, 1.0),
            LinearKind::Oscillator { .. } => Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        }
    }

    /// `e^{At}`.
    pub fn propagator(&self, t: f64) -> Matrix {
        match self.kind {
            LinearKind::Scalar { lambda } => Matrix::from_element(1, 1, (lambda * t).exp()),
            LinearKind::Oscillator { omega } => {
                let (s, c) = (omega * t).sin_cos();
                Matrix::from_row_slice(2, 2, &[c, s, -s, c]) * (-t).exp()
            }
        }
    }

    /// `∫_{t0}^{t1} e^{A(tf − s)} B ds`.
    pub fn influence(&self, t0: f64, t1: f64, tf: f64) -> Vector {
        match self.kind {
            LinearKind::Scalar { lambda } => {
                if lambda == 0.0 {
                    Vector::from_element(1, t1 - t0)
                } else {
                    Vector::from_element(1, ((lambda * (tf - t0)).exp() - (lambda * (tf - t1)).exp()) / lambda)
                }
            }
            LinearKind::Oscillator { omega } => {
                // antiderivatives of e^{−r} sin ωr and e^{−r} cos ωr
                let prim = |r: f64| {
                    let (s, c) = (omega * r).sin_cos();
                    let e = (-r).exp() / (1.0 + omega * omega);
                    Vector::from_vec(vec![e * (-omega * c - s), e * (-c + omega * s)])
                };
                prim(tf - t0) - prim(tf - t1)
            }
        }
    }
}

impl HybridModel for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }
    fn n_x(&self) -> usize {
        self.n_lin() + usize::from(self.quadrature)
    }
    fn n_u(&self) -> usize {
        1
    }

    fn field(&self, _which: Field, x: &Vector, u: &Vector) -> Vector {
        let n = self.n_lin();
        let lin = self.a() * x.rows(0, n) + self.b() * u;
        let mut out = Vector::zeros(self.n_x());
        out.rows_mut(0, n).copy_from(&lin);
        if self.quadrature {
            out[n] = 0.5 * u.norm_squared();
        }
        out
    }

    fn field_x(&self, _which: Field, _x: &Vector, _u: &Vector) -> Matrix {
        let n = self.n_lin();
        let mut j = Matrix::zeros(self.n_x(), self.n_x());
        j.view_mut((0, 0), (n, n)).copy_from(&self.a());
        j
    }

    fn field_u(&self, _which: Field, _x: &Vector, u: &Vector) -> Matrix {
        let n = self.n_lin();
        let mut j = Matrix::zeros(self.n_x(), 1);
        j.view_mut((0, 0), (n, 1)).copy_from(&self.b());
        if self.quadrature {
            j[(n, 0)] = u[0];
        }
        j
    }

    fn surface(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x[0] - FAR)
    }

    fn surface_x(&self, _x: &Vector) -> Matrix {
        let mut g = Matrix::zeros(1, self.n_x());
        g[(0, 0)] = 1.0;
        g
    }

    fn surface_curvature(&self, _x: &Vector, _z: &Vector) -> Matrix {
        Matrix::zeros(self.n_x(), self.n_x())
    }
}

/// `x' = −x + u` in both regions with the surface `x − e^{−t_c}`. From
/// `x(0) = 1` and `u = 0` the trajectory crosses the surface exactly at
/// `t = t_c`, leaving region 2 for region 1 without sliding.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingModel {
    pub t_c: f64,
}

impl HybridModel for CrossingModel {
    fn name(&self) -> &str {
        "crossing"
    }
    fn n_x(&self) -> usize {
        1
    }
    fn n_u(&self) -> usize {
        1
    }
    fn field(&self, _which: Field, x: &Vector, u: &Vector) -> Vector {
        Vector::from_element(1, -x[0] + u[0])
    }
    fn field_x(&self, _which: Field, _x: &Vector, _u: &Vector) -> Matrix {
        Matrix::from_element(1, 1, -1.0)
    }
    fn field_u(&self, _which: Field, _x: &Vector, _u: &Vector) -> Matrix {
        Matrix::from_element(1, 1, 1.0)
    }
    fn surface(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x[0] - (-self.t_c).exp())
    }
    fn surface_x(&self, _x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, 1.0)
    }
    fn surface_curvature(&self, _x: &Vector, _z: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }
}

/// Fast rotation constrained to the unit circle.
///
/// `f_F = (ω + u) J x + (δ, 0)ᵀ` with `J` the rotation by π/2, and the
/// regions add `±βx`. With `β > δ` every point of the circle is attractive,
/// so a trajectory started on it slides for the whole horizon while the
/// algebraic variable `z = −δ x_1` keeps changing.
#[derive(Clone, Debug, PartialEq)]
pub struct SlidingCircle {
    pub omega: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for SlidingCircle {
    fn default() -> Self {
        SlidingCircle {
            omega: 6.0,
            beta: 1.0,
            delta: 0.5,
        }
    }
}

impl SlidingCircle {
    fn radial(&self, which: Field) -> f64 {
        match which {
            Field::Region1 => self.beta,
            Field::Region2 => -self.beta,
            Field::Filippov => 0.0,
        }
    }
}

impl HybridModel for SlidingCircle {
    fn name(&self) -> &str {
        "sliding-circle"
    }
    fn n_x(&self) -> usize {
        2
    }
    fn n_u(&self) -> usize {
        1
    }

    fn field(&self, which: Field, x: &Vector, u: &Vector) -> Vector {
        let w = self.omega + u[0];
        let r = self.radial(which);
        Vector::from_vec(vec![-w * x[1] + self.delta + r * x[0], w * x[0] + r * x[1]])
    }

    fn field_x(&self, which: Field, _x: &Vector, u: &Vector) -> Matrix {
        let w = self.omega + u[0];
        let r = self.radial(which);
        Matrix::from_row_slice(2, 2, &[r, -w, w, r])
    }

    fn field_u(&self, _which: Field, x: &Vector, _u: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 1, &[-x[1], x[0]])
    }

    fn surface(&self, x: &Vector) -> Vector {
        Vector::from_element(1, 0.5 * (x.norm_squared() - 1.0))
    }

    fn surface_x(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(1, 2, &[x[0], x[1]])
    }

    fn surface_curvature(&self, _x: &Vector, z: &Vector) -> Matrix {
        Matrix::identity(2, 2) * z[0]
    }
}
