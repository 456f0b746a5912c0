//! Trajectories with transitions: adjoint jumps against finite differences.

use slidopt::adjoint::{jump::hamiltonian_defect, JumpFormula};
use slidopt::forward::{IntegratorOptions, NewtonOptions, TransitionKind};
use slidopt::gradient::{check_gradient, max_rel_err, Evaluator};
use slidopt::problems::{self, ProblemSpec};
use slidopt::{radau_iia, PhaseLabel};

fn with_evaluator<R>(spec: &ProblemSpec, jump: JumpFormula, f: impl FnOnce(&Evaluator) -> R) -> R {
    let tab = radau_iia(3).unwrap();
    let opts = IntegratorOptions {
        steps: spec.steps,
        newton: NewtonOptions {
            tol: 1e-12,
            ..NewtonOptions::default()
        },
        ..IntegratorOptions::default()
    };
    let ev = Evaluator {
        model: spec.model.as_ref(),
        tableau: &tab,
        x0: &spec.x0,
        options: &opts,
        jump,
    };
    f(&ev)
}

#[test]
fn mass_spring_sticks_to_the_belt() {
    let spec = problems::mass_spring_entry();
    with_evaluator(&spec, JumpFormula::Discrete, |ev| {
        let traj = ev.trajectory(&spec.grid).unwrap();
        let kinds: Vec<_> = traj.transitions.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, vec![TransitionKind::EnterSliding]);
        assert!(traj.phase_final.is_sliding());
        // the belt drags the mass at its own speed
        let v_end = traj.x_final[1];
        assert!((v_end - 0.3).abs() < 1e-9, "v(tf) = {v_end}");
    });
}

#[test]
fn gradient_across_sliding_entry() {
    let spec = problems::mass_spring_entry();
    let err = with_evaluator(&spec, JumpFormula::Discrete, |ev| max_rel_err(&check_gradient(ev, &spec.objective, &spec.grid).unwrap()));
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn gradient_across_region_crossing_with_both_jump_formulas() {
    let spec = problems::race_car_drift();
    for jump in [JumpFormula::Discrete, JumpFormula::Simple] {
        with_evaluator(&spec, jump, |ev| {
            let traj = ev.trajectory(&spec.grid).unwrap();
            assert!(traj.transitions.iter().any(|t| t.kind == TransitionKind::CrossRegion));
            for f in spec.functionals() {
                let err = max_rel_err(&check_gradient(ev, f, &spec.grid).unwrap());
                // the simple multiplier carries an O(h^p) defect
                let tol = if jump == JumpFormula::Discrete { 1e-6 } else { 1e-4 };
                assert!(err < tol, "{jump} {}: {err:e}", f.name);
            }
        });
    }
}

#[test]
fn hamiltonian_is_continuous_across_crossing() {
    let spec = problems::race_car_drift();
    with_evaluator(&spec, JumpFormula::Discrete, |ev| {
        let traj = ev.trajectory(&spec.grid).unwrap();
        let (_, adj) = ev.gradient_on(&traj, &spec.objective).unwrap();
        assert!(!adj.jumps.is_empty());
        for j in &adj.jumps {
            let d = hamiltonian_defect(spec.model.as_ref(), &traj, j.k_t, &j.lambda_pre, &j.lambda_post);
            assert!(d.abs() < 1e-6, "defect {d:e} at t = {}", j.t_t);
        }
    });
}

#[test]
fn sliding_invariants_hold_for_the_whole_horizon() {
    for spec in [problems::sliding_circle(), problems::race_car_sliding()] {
        with_evaluator(&spec, JumpFormula::Discrete, |ev| {
            let traj = ev.trajectory(&spec.grid).unwrap();
            assert!(traj.transitions.is_empty(), "{}", spec.name);
            assert!(traj.steps.iter().all(|s| s.phase == PhaseLabel::Sliding));
            let err = max_rel_err(&check_gradient(ev, &spec.objective, &spec.grid).unwrap());
            assert!(err < 1e-6, "{}: {err:e}", spec.name);
            let (_, adj) = ev.gradient_on(&traj, &spec.objective).unwrap();
            assert!(adj.max_algebraic_residual(spec.model.as_ref(), &traj) < 1e-10);
        });
    }
}

#[test]
fn every_problem_evaluates() {
    for name in problems::NAMES {
        let spec = problems::by_name(name).unwrap();
        with_evaluator(&spec, JumpFormula::Discrete, |ev| {
            let traj = ev.trajectory(&spec.grid).unwrap();
            assert!(traj.x_final.iter().all(|v| v.is_finite()), "{name}");
        });
    }
    assert!(problems::by_name("pendulum").is_err());
}
