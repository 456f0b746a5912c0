//! Planar car with lateral dry friction.

use crate::model::{Field, HybridModel, Matrix, Vector};

/// States `(x_1, x_2, v_1, v_2, θ)`, controls `(a, s)`.
///
/// The switching surface is `n(θ)ᵀv = −v_1 sin θ + v_2 cos θ`. Off the
/// surface the lateral friction `F n(θ)` has magnitude `μN` and opposes the
/// drift; the base field of the sliding mode is frictionless.
#[derive(Clone, Debug, PartialEq)]
pub struct RaceCar {
    pub mu_n: f64,
}

impl Default for RaceCar {
    fn default() -> Self {
        RaceCar { mu_n: 0.5 }
    }
}

impl RaceCar {
    /// `F` in each field: `−μN sign(nᵀv)`.
    fn friction(&self, which: Field) -> f64 {
        match which {
            Field::Region1 => self.mu_n,
            Field::Region2 => -self.mu_n,
            Field::Filippov => 0.0,
        }
    }
}

impl HybridModel for RaceCar {
    fn name(&self) -> &str {
        "race-car"
    }
    fn n_x(&self) -> usize {
        5
    }
    fn n_u(&self) -> usize {
        2
    }

    fn field(&self, which: Field, x: &Vector, u: &Vector) -> Vector {
        let f = self.friction(which);
        let (s, c) = x[4].sin_cos();
        let tv = x[2] * c + x[3] * s;
        Vector::from_vec(vec![
            x[2],
            x[3],
            u[0] * c - f * s,
            u[0] * s + f * c,
            u[1] * tv,
        ])
    }

    fn field_x(&self, which: Field, x: &Vector, u: &Vector) -> Matrix {
        let f = self.friction(which);
        let (s, c) = x[4].sin_cos();
        let nv = -x[2] * s + x[3] * c;
        let mut j = Matrix::zeros(5, 5);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j[(2, 4)] = -u[0] * s - f * c;
        j[(3, 4)] = u[0] * c - f * s;
        j[(4, 2)] = u[1] * c;
        j[(4, 3)] = u[1] * s;
        j[(4, 4)] = u[1] * nv;
        j
    }

    fn field_u(&self, _which: Field, x: &Vector, _u: &Vector) -> Matrix {
        let (s, c) = x[4].sin_cos();
        let mut j = Matrix::zeros(5, 2);
        j[(2, 0)] = c;
        j[(3, 0)] = s;
        j[(4, 1)] = x[2] * c + x[3] * s;
        j
    }

    fn surface(&self, x: &Vector) -> Vector {
        let (s, c) = x[4].sin_cos();
        Vector::from_element(1, -x[2] * s + x[3] * c)
    }

    fn surface_x(&self, x: &Vector) -> Matrix {
        let (s, c) = x[4].sin_cos();
        Matrix::from_row_slice(1, 5, &[0.0, 0.0, -s, c, -(x[2] * c + x[3] * s)])
    }

    fn surface_curvature(&self, x: &Vector, z: &Vector) -> Matrix {
        let (s, c) = x[4].sin_cos();
        let mut hm = Matrix::zeros(5, 5);
        hm[(2, 4)] = -c;
        hm[(4, 2)] = -c;
        hm[(3, 4)] = -s;
        hm[(4, 3)] = -s;
        hm[(4, 4)] = x[2] * s - x[3] * c;
        hm * z[0]
    }
}
