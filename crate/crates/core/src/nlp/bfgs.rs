//! Damped BFGS update of the quasi-Newton Hessian approximation.

use crate::error::{Error, Result};
use crate::model::{Matrix, Vector};

/// Whether and how much the secant pair was damped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateInfo {
    pub theta: f64,
    pub skipped: bool,
}

/// BFGS update with Powell's damping.
///
/// `y` is replaced by `θy + (1 − θ)Hs`, with `θ = 1` when
/// `sᵀy ≥ damping · sᵀHs` and otherwise the largest `θ` that makes the
/// damped curvature equal to `damping · sᵀHs`. The result stays symmetric
/// positive definite.
pub fn bfgs_powell_update(h: &Matrix, s: &Vector, y: &Vector, damping: f64) -> Result<(Matrix, UpdateInfo)> {
    let hs = h * s;
    let shs = s.dot(&hs);
    if s.norm() == 0.0 {
        return Ok((h.clone(), UpdateInfo { theta: 1.0, skipped: true }));
    }
    if !(shs > 0.0) {
        return Err(Error::Precondition(format!("quasi-Newton matrix is not positive definite (sᵀHs = {shs:e})")));
    }
    let sy = s.dot(y);
    let theta = if sy >= damping * shs {
        1.0
    } else {
        (1.0 - damping) * shs / (shs - sy)
    };
    let r = y * theta + &hs * (1.0 - theta);
    let sr = s.dot(&r);
    if !(sr > 0.0) || !sr.is_finite() {
        return Ok((h.clone(), UpdateInfo { theta, skipped: true }));
    }
    let mut out = h - &hs * hs.transpose() / shs + &r * r.transpose() / sr;
    // restore exact symmetry lost to rounding
    out = (&out + out.transpose()) * 0.5;
    Ok((out, UpdateInfo { theta, skipped: false }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd(n: usize, seed: &[f64]) -> Matrix {
        let l = Matrix::from_fn(n, n, |i, j| if i >= j { seed[(i * n + j) % seed.len()] } else { 0.0 });
        &l * l.transpose() + Matrix::identity(n, n)
    }

    #[test]
    fn secant_pair_of_the_current_matrix_is_a_fixed_point() {
        let h = spd(3, &[0.3, -0.2, 0.5, 1.1, 0.7]);
        let s = Vector::from_vec(vec![0.4, -1.0, 0.2]);
        let y = &h * &s;
        let (h1, info) = bfgs_powell_update(&h, &s, &y, 0.2).unwrap();
        assert_eq!(info.theta, 1.0);
        assert!((h1 - h).amax() < 1e-12);
    }

    #[test]
    fn damping_inactive_for_sufficient_curvature() {
        let h = Matrix::identity(2, 2);
        let s = Vector::from_vec(vec![1.0, 0.0]);
        let y = Vector::from_vec(vec![0.5, 0.3]);
        let (h1, info) = bfgs_powell_update(&h, &s, &y, 0.2).unwrap();
        assert_eq!(info.theta, 1.0);
        // secant equation holds for the undamped pair
        assert!((&h1 * &s - &y).amax() < 1e-14);
    }

    #[test]
    fn negative_curvature_is_damped() {
        let h = Matrix::identity(2, 2);
        let s = Vector::from_vec(vec![1.0, 0.0]);
        let y = Vector::from_vec(vec![-1.0, 0.0]);
        let (h1, info) = bfgs_powell_update(&h, &s, &y, 0.2).unwrap();
        assert!(info.theta < 1.0);
        assert!((s.dot(&(&h1 * &s)) - 0.2).abs() < 1e-14);
        assert!(h1.clone().cholesky().is_some());
    }

    #[test]
    fn quadratic_termination_along_independent_directions() {
        let b = spd(4, &[0.9, -0.4, 0.3, 0.2, -0.8, 0.5, 0.1]);
        let mut h = Matrix::identity(4, 4);
        // conjugate directions of b give exact recovery after n updates
        let mut dirs: Vec<Vector> = Vec::new();
        for i in 0..4 {
            let mut d = Vector::zeros(4);
            d[i] = 1.0;
            d[(i + 1) % 4] = 0.5;
            for p in &dirs {
                let c = p.dot(&(&b * &d)) / p.dot(&(&b * p));
                d -= p * c;
            }
            dirs.push(d);
        }
        for s in &dirs {
            let y = &b * s;
            h = bfgs_powell_update(&h, s, &y, 0.2).unwrap().0;
        }
        assert!((h - b).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn update_stays_positive_definite(
            seed in proptest::collection::vec(-1.0f64..1.0, 9),
            s in proptest::collection::vec(-1.0f64..1.0, 3),
            y in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let h = spd(3, &seed);
            let s = Vector::from_vec(s);
            prop_assume!(s.norm() > 1e-3);
            let y = Vector::from_vec(y);
            let (h1, _) = bfgs_powell_update(&h, &s, &y, 0.2).unwrap();
            prop_assert!((&h1 - h1.transpose()).amax() == 0.0);
            prop_assert!(h1.symmetric_eigenvalues().min() > 0.0);
        }
    }
}
