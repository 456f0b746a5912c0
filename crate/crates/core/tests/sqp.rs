use slidopt::adjoint::JumpFormula;
use slidopt::forward::IntegratorOptions;
use slidopt::gradient::Evaluator;
use slidopt::nlp::{solve, write_log, Nlp, SqpOptions};
use slidopt::problems::{self, ProblemSpec};
use slidopt::{radau_iia, Vector};

fn run(spec: &ProblemSpec, opts: &SqpOptions) -> slidopt::nlp::SolveReport {
    let tab = radau_iia(3).unwrap();
    let iopts = IntegratorOptions {
        steps: spec.steps,
        ..IntegratorOptions::default()
    };
    let nlp = Nlp {
        evaluator: Evaluator {
            model: spec.model.as_ref(),
            tableau: &tab,
            x0: &spec.x0,
            options: &iopts,
            jump: JumpFormula::Discrete,
        },
        objective: spec.objective.clone(),
        equalities: spec.equalities.clone(),
        inequalities: spec.inequalities.clone(),
    };
    solve(&nlp, &spec.grid, opts).unwrap()
}

#[test]
fn analytic_problem_reaches_exact_minimizer() {
    let spec = problems::analytic_linear();
    // σ is quadratic in the gradient, so control accuracy 1e-8 needs σ
    // resolved near rounding level
    let rep = run(
        &spec,
        &SqpOptions {
            eps: 1e-16,
            ..SqpOptions::default()
        },
    );
    assert!(rep.converged, "{:?}", rep.stop_reason);
    assert!(rep.iterations <= 10, "{} iterations", rep.iterations);
    let exact = problems::analytic_minimizer(&spec);
    let got = Vector::from_vec(rep.grid.to_flat());
    let diff = (got - exact).amax();
    assert!(diff < 1e-8, "max deviation {diff:e}");
}

#[test]
fn log_records_every_iteration() {
    let spec = problems::mass_spring();
    let rep = run(&spec, &SqpOptions::default());
    assert!(rep.converged);
    assert_eq!(rep.log.len(), rep.iterations + 1);
    assert!(rep.log.iter().enumerate().all(|(i, r)| r.k == i));
    assert_eq!(rep.log.last().unwrap().step, 0.0);
    assert!(rep.log.last().unwrap().sigma >= -1e-6);

    let mut buf = Vec::new();
    write_log(&rep.log, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,objective,max_eq_violation,max_ineq_violation,sigma,step_length,transitions");
    assert_eq!(lines.count(), rep.log.len());
}

#[test]
fn iteration_limit_is_reported() {
    let spec = problems::race_car();
    let rep = run(
        &spec,
        &SqpOptions {
            max_iter: 2,
            ..SqpOptions::default()
        },
    );
    assert!(!rep.converged);
    assert_eq!(rep.iterations, 2);
    assert!(rep.stop_reason.unwrap().contains("maximum"));
}

#[test]
fn infeasible_start_is_rejected() {
    let mut spec = problems::mass_spring();
    spec.grid.values[0][0] = 3.0;
    let tab = radau_iia(3).unwrap();
    let iopts = IntegratorOptions::default();
    let nlp = Nlp {
        evaluator: Evaluator {
            model: spec.model.as_ref(),
            tableau: &tab,
            x0: &spec.x0,
            options: &iopts,
            jump: JumpFormula::Discrete,
        },
        objective: spec.objective.clone(),
        equalities: spec.equalities.clone(),
        inequalities: spec.inequalities.clone(),
    };
    assert!(solve(&nlp, &spec.grid, &SqpOptions::default()).is_err());
}
