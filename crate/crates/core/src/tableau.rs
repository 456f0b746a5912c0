//! Runge–Kutta coefficient sets.
//!
//! The forward integrator uses the three-stage Radau IIA collocation scheme.
//! Its discrete adjoint is a Radau IA-type scheme with coefficients
//! `ā_ij = a_ji b_j / b_i`, `b̄ = b`, `c̄ = 1 - c`; both are carried here
//! together with the inverse stage matrix and the weights `b⁻ = bᵀA⁻¹` used by
//! the algebraic-variable update of the DAE scheme.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance used when validating coefficient identities.
pub const COEFF_TOL: f64 = 1e-12;

/// A Runge–Kutta tableau with the derived quantities needed by the DAE and
/// adjoint algebra.
#[derive(Clone, Debug)]
pub struct Tableau {
    pub stages: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub a_inv: DMatrix<f64>,
    /// `b⁻_i = Σ_j b_j a⁻_ji`.
    pub b_minus: DVector<f64>,
    /// Adjoint stage matrix `ā_ij = a_ji b_j / b_i`.
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub c_bar: DVector<f64>,
    /// `R(∞) = 1 - bᵀA⁻¹𝟙`.
    pub stability_radius: f64,
}

/// Three-stage Radau IIA (order 5, stage order 3).
///
/// Only `stages == 3` is supported. The coefficient set is checked against
/// the order conditions before it is returned.
pub fn radau_iia(stages: usize) -> Result<Tableau> {
    if stages != 3 {
        return Err(Error::Config(format!(
            "Radau IIA is only available with 3 stages (requested {stages})"
        )));
    }
    let s6 = 6f64.sqrt();
    let c = DVector::from_vec(vec![(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0]);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(3, 3, &[
        (88.0 - 7.0 * s6) / 360.0,    (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0,
        (296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0,    (-2.0 - 3.0 * s6) / 225.0,
        (16.0 - s6) / 36.0,           (16.0 + s6) / 36.0,            1.0 / 9.0,
    ]);
    let b = a.row(2).transpose();
    let t = from_abc(a, b, c)?;
    check_order_conditions(&t, 5)?;
    Ok(t)
}

/// Builds a tableau from `(A, b, c)` and fills in every derived field.
pub fn from_abc(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Tableau> {
    let s = b.len();
    if a.nrows() != s || a.ncols() != s || c.len() != s {
        return Err(Error::Config("tableau dimensions disagree".into()));
    }
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("stage matrix A is singular".into()))?;
    let b_minus = a_inv.transpose() * &b;
    let ones = DVector::from_element(s, 1.0);
    let stability_radius = 1.0 - b.dot(&(&a_inv * &ones));
    let a_bar = reflect(&a, &b)?;
    let c_bar = c.map(|ci| 1.0 - ci);
    Ok(Tableau {
        stages: s,
        b_bar: b.clone(),
        a,
        b,
        c,
        a_inv,
        b_minus,
        a_bar,
        c_bar,
        stability_radius,
    })
}

fn reflect(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DMatrix<f64>> {
    if let Some(i) = b.iter().position(|bi| bi.abs() < f64::EPSILON) {
        return Err(Error::Config(format!(
            "degenerate tableau: weight b_{} is zero",
            i + 1
        )));
    }
    let s = b.len();
    Ok(DMatrix::from_fn(s, s, |i, j| a[(j, i)] * b[j] / b[i]))
}

/// Returns the adjoint scheme `(ā, b̄, c̄)` of `t` as a standalone tableau.
///
/// Applying the transform twice returns the original coefficients.
pub fn adjoint_tableau(t: &Tableau) -> Result<Tableau> {
    from_abc(t.a_bar.clone(), t.b_bar.clone(), t.c_bar.clone())
}

/// Checks the quadrature conditions `Σ b_i c_i^{k-1} = 1/k` for `k = 1..=order`
/// and the reflection identity `ā_ij b_i = a_ji b_j`.
pub fn check_order_conditions(t: &Tableau, order: u32) -> Result<()> {
    for k in 1..=order {
        let sum: f64 = t
            .b
            .iter()
            .zip(t.c.iter())
            .map(|(bi, ci)| bi * ci.powi(k as i32 - 1))
            .sum();
        if (sum - 1.0 / f64::from(k)).abs() > COEFF_TOL {
            return Err(Error::Config(format!(
                "order condition k={k} violated: {sum} != {}",
                1.0 / f64::from(k)
            )));
        }
    }
    for i in 0..t.stages {
        for j in 0..t.stages {
            if (t.a_bar[(i, j)] * t.b[i] - t.a[(j, i)] * t.b[j]).abs() > COEFF_TOL {
                return Err(Error::Config("adjoint coefficient identity violated".into()));
            }
        }
    }
    Ok(())
}
