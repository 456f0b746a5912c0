//! Mass on a moving belt with Coulomb–Stribeck friction.

use crate::model::{Field, HybridModel, Matrix, Vector};

/// States `(position, velocity, actuator)`, control `u = x_3'`.
///
/// `fs` is the lumped static friction `F_s/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MassSpring {
    pub m: f64,
    pub k: f64,
    pub fs: f64,
    pub delta: f64,
    pub v_dr: f64,
}

impl Default for MassSpring {
    fn default() -> Self {
        MassSpring {
            m: 1.0,
            k: 1.0,
            fs: 2.0,
            delta: 3.0,
            v_dr: 0.3,
        }
    }
}

impl MassSpring {
    /// `+1` in region 1 (mass slower than the belt), `−1` in region 2, `0`
    /// for the frictionless base field.
    fn friction_sign(which: Field) -> f64 {
        match which {
            Field::Region1 => 1.0,
            Field::Region2 => -1.0,
            Field::Filippov => 0.0,
        }
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl HybridModel for MassSpring {
    fn name(&self) -> &str {
        "mass-spring"
    }
    fn n_x(&self) -> usize {
        3
    }
    fn n_u(&self) -> usize {
        1
    }

    fn field(&self, which: Field, x: &Vector, u: &Vector) -> Vector {
        let sigma = Self::friction_sign(which);
        let rel = x[1] - self.v_dr;
        let friction = sigma * self.fs / (1.0 + self.delta * rel.abs());
        Vector::from_vec(vec![x[1], -self.k / self.m * x[0] + friction + x[2], u[0]])
    }

    fn field_x(&self, which: Field, x: &Vector, _u: &Vector) -> Matrix {
        let sigma = Self::friction_sign(which);
        let rel = x[1] - self.v_dr;
        let den = 1.0 + self.delta * rel.abs();
        let d_friction = -sigma * self.fs * self.delta * sign0(rel) / (den * den);
        #[rustfmt::skip]
        let j = Matrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            -self.k / self.m, d_friction, 1.0,
            0.0, 0.0, 0.0,
        ]);
        j
    }

    fn field_u(&self, _which: Field, _x: &Vector, _u: &Vector) -> Matrix {
        Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0])
    }

    fn surface(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x[1] - self.v_dr)
    }

    fn surface_x(&self, _x: &Vector) -> Matrix {
        Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0])
    }

    fn surface_curvature(&self, _x: &Vector, _z: &Vector) -> Matrix {
        Matrix::zeros(3, 3)
    }
}
