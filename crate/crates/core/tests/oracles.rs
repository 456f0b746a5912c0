//! Linear problems with closed-form trajectories, adjoints and gradients.

use std::sync::Arc;

use proptest::prelude::*;
use slidopt::adjoint::JumpFormula;
use slidopt::forward::IntegratorOptions;
use slidopt::gradient::{check_gradient_with, max_rel_err, Evaluator};
use slidopt::problems::{self, LinearKind, LinearModel, ProblemSpec};
use slidopt::{radau_iia, ControlGrid, Functional, Vector};

fn scalar_problem(lambda: f64, u: &[f64]) -> ProblemSpec {
    let mut spec = problems::analytic_linear();
    spec.model = Arc::new(LinearModel {
        kind: LinearKind::Scalar { lambda },
        quadrature: false,
    });
    spec.x0 = Vector::from_element(1, 1.0);
    spec.grid = ControlGrid::constant(
        0.0,
        2.0,
        u.len(),
        Vector::zeros(1),
        Vector::from_element(1, -10.0),
        Vector::from_element(1, 10.0),
    );
    for (v, &x) in spec.grid.values.iter_mut().zip(u) {
        v[0] = x;
    }
    spec.objective = Functional::component("x(tf)", 0, 0.0, 1.0);
    spec
}

fn with_evaluator<R>(spec: &ProblemSpec, steps: usize, f: impl FnOnce(&Evaluator) -> R) -> R {
    let tab = radau_iia(3).unwrap();
    let opts = IntegratorOptions {
        steps,
        ..IntegratorOptions::default()
    };
    let ev = Evaluator {
        model: spec.model.as_ref(),
        tableau: &tab,
        x0: &spec.x0,
        options: &opts,
        jump: JumpFormula::Discrete,
    };
    f(&ev)
}

#[test]
fn pure_quadrature_gradient_is_interval_width() {
    let spec = scalar_problem(0.0, &[0.3, -1.0, 2.0, 0.0, 0.5]);
    with_evaluator(&spec, 50, |ev| {
        let traj = ev.trajectory(&spec.grid).unwrap();
        let (g, _) = ev.gradient_on(&traj, &spec.objective).unwrap();
        for n in 0..5 {
            assert!((g.get(n, 0) - spec.grid.width(n)).abs() < 1e-13, "interval {n}: {}", g.get(n, 0));
        }
        let expect = 1.0 + 0.4 * (0.3 - 1.0 + 2.0 + 0.0 + 0.5);
        assert!((traj.x_final[0] - expect).abs() < 1e-13);
    });
}

#[test]
fn decay_under_zero_control() {
    let spec = scalar_problem(-1.0, &[0.0; 4]);
    with_evaluator(&spec, 100, |ev| {
        let (phi, transitions) = ev.value(&spec.grid, &spec.objective).unwrap();
        assert_eq!(transitions, 0);
        assert!((phi - (-2.0f64).exp()).abs() < 1e-12);
    });
}

#[test]
fn decay_adjoint_is_negative_exponential() {
    let spec = scalar_problem(-1.0, &[0.5, -0.2, 0.1, 0.0]);
    with_evaluator(&spec, 100, |ev| {
        let traj = ev.trajectory(&spec.grid).unwrap();
        let (_, adj) = ev.gradient_on(&traj, &spec.objective).unwrap();
        let times = traj.times();
        assert_eq!(adj.lambda_f.len(), times.len());
        let worst = times
            .iter()
            .zip(&adj.lambda_f)
            .map(|(t, l)| (l[0] + (-(2.0 - t)).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "adjoint error {worst:e}");
    });
}

#[test]
fn oscillator_endpoint_and_gradient_match_closed_form() {
    let mut spec = problems::analytic_linear();
    for (i, v) in spec.grid.values.iter_mut().enumerate() {
        v[0] = (1.3 * i as f64).cos();
    }
    let model = problems::analytic_model();
    let exact = problems::linear_endpoint(&model, &spec.grid, &spec.x0);
    with_evaluator(&spec, 200, |ev| {
        let traj = ev.trajectory(&spec.grid).unwrap();
        assert!((traj.x_final.rows(0, 2) - &exact).amax() < 1e-10);
        let q: f64 = (0..10).map(|n| 0.5 * spec.grid.width(n) * spec.grid.values[n][0].powi(2)).sum();
        assert!((traj.x_final[2] - q).abs() < 1e-13);

        // ∂φ/∂u_n = Δτ_n u_n + w G_nᵀ (x(t_f) − r)
        let (g, _) = ev.gradient_on(&traj, &spec.objective).unwrap();
        let r = Vector::from_row_slice(&problems::ANALYTIC_TARGET);
        let resid = (&exact - r) * problems::ANALYTIC_WEIGHT;
        for n in 0..10 {
            let col = model.influence(spec.grid.boundary(n), spec.grid.boundary(n + 1), spec.grid.tf);
            let expect = spec.grid.width(n) * spec.grid.values[n][0] + col.dot(&resid);
            assert!((g.get(n, 0) - expect).abs() < 1e-8, "interval {n}");
        }
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analytic_gradient_matches_exact_difference(u in prop::collection::vec(-3.0f64..3.0, 10)) {
        let mut spec = problems::analytic_linear();
        for (v, x) in spec.grid.values.iter_mut().zip(&u) {
            v[0] = *x;
        }
        let err = with_evaluator(&spec, 60, |ev| {
            max_rel_err(&check_gradient_with(ev, &spec.objective, &spec.grid, |_| 1e-3).unwrap())
        });
        prop_assert!(err <= 1e-8, "relative error {err:e}");
    }
}
