//! SQP for the discretized optimal control problem.

pub mod bfgs;
pub mod qp;

use std::io::Write;

use crate::error::{Error, Result};
use crate::forward::TrajectoryRecord;
use crate::gradient::Evaluator;
use crate::model::{ControlGrid, Functional, Matrix, Vector};

pub use bfgs::{bfgs_powell_update, UpdateInfo};
pub use qp::{l1_qp, plain_qp, qp_step, QpProblem, QpSolution};

/// `min φ(x(t_f))` over the control grid subject to endpoint equalities,
/// endpoint inequalities `c ≤ 0` and the grid's box bounds.
#[derive(Clone)]
pub struct Nlp<'a> {
    pub evaluator: Evaluator<'a>,
    pub objective: Functional,
    pub equalities: Vec<Functional>,
    pub inequalities: Vec<Functional>,
}

#[derive(Clone, Debug)]
pub struct SqpOptions {
    /// Stopping tolerance for σ and the constraint residuals.
    pub eps: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub damping: f64,
    /// Upper limit of the ℓ1 penalty parameter relative to `1 + ‖∇φ‖∞`.
    pub max_penalty: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            eps: 1e-6,
            max_iter: 200,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-10,
            damping: 0.2,
            max_penalty: 1e1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub k: usize,
    pub objective: f64,
    pub max_eq: f64,
    pub max_ineq: f64,
    pub sigma: f64,
    /// Accepted step length, 0 on the final iterate.
    pub step: f64,
    pub transitions: usize,
}

#[derive(Clone, Debug)]
pub struct SqpState {
    pub u: Vec<f64>,
    pub h: Matrix,
    pub penalty: f64,
    pub iteration: usize,
    pub mult_eq: Vector,
    pub mult_in: Vector,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub grid: ControlGrid,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub max_eq: f64,
    pub max_ineq: f64,
    pub sigma: f64,
    pub log: Vec<IterationLog>,
    pub trajectory: TrajectoryRecord,
    /// Why the iteration stopped short of convergence.
    pub stop_reason: Option<String>,
}

/// Functional values and gradients at one control grid.
struct Point {
    grid: ControlGrid,
    traj: TrajectoryRecord,
    phi: f64,
    c_eq: Vector,
    c_in: Vector,
    grad: Vector,
    j_eq: Matrix,
    j_in: Matrix,
}

impl Point {
    fn violation(&self) -> f64 {
        self.c_eq.abs().sum() + self.c_in.iter().map(|v| v.max(0.0)).sum::<f64>()
    }

    fn max_eq(&self) -> f64 {
        self.c_eq.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn max_ineq(&self) -> f64 {
        self.c_in.iter().fold(0.0, |m, v| m.max(v.max(0.0)))
    }

    fn merit(&self, penalty: f64) -> f64 {
        self.phi + penalty * self.violation()
    }

    fn lagrangian_gradient(&self, mult_eq: &Vector, mult_in: &Vector) -> Vector {
        &self.grad + self.j_eq.transpose() * mult_eq + self.j_in.transpose() * mult_in
    }
}

impl Nlp<'_> {
    fn functionals(&self) -> Vec<&Functional> {
        std::iter::once(&self.objective)
            .chain(&self.equalities)
            .chain(&self.inequalities)
            .collect()
    }

    /// Trajectory and functional values; the derivative fields stay empty.
    fn values(&self, grid: &ControlGrid) -> Result<Point> {
        let traj = self.evaluator.trajectory(grid)?;
        let xf = &traj.x_final;
        let (me, mi) = (self.equalities.len(), self.inequalities.len());
        Ok(Point {
            phi: self.objective.value(xf),
            c_eq: Vector::from_iterator(me, self.equalities.iter().map(|f| f.value(xf))),
            c_in: Vector::from_iterator(mi, self.inequalities.iter().map(|f| f.value(xf))),
            grad: Vector::zeros(0),
            j_eq: Matrix::zeros(0, 0),
            j_in: Matrix::zeros(0, 0),
            grid: grid.clone(),
            traj,
        })
    }

    /// Adds the adjoint gradients of all functionals to `p`.
    fn differentiate(&self, mut p: Point) -> Result<Point> {
        let fs = self.functionals();
        let grads = crate::par::map(&fs, |f| self.evaluator.gradient_on(&p.traj, f).map(|(g, _)| g.values));
        let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
        let np = p.grid.n_intervals() * p.grid.n_u();
        let rows = |range: std::ops::Range<usize>| {
            let mut m = Matrix::zeros(range.len(), np);
            for (r, i) in range.enumerate() {
                m.set_row(r, &Vector::from_column_slice(&grads[i]).transpose());
            }
            m
        };
        let (me, mi) = (self.equalities.len(), self.inequalities.len());
        p.grad = Vector::from_column_slice(&grads[0]);
        p.j_eq = rows(1..1 + me);
        p.j_in = rows(1 + me..1 + me + mi);
        Ok(p)
    }
}

fn converged(p: &Point, sigma: f64, eps: f64) -> bool {
    sigma >= -eps && p.max_eq() <= eps && p.max_ineq() <= eps
}

/// Runs SQP from the controls in `u0`.
///
/// Each iteration solves the direction QP with the current damped-BFGS
/// matrix, backtracks on the ℓ1 merit function and updates the matrix with
/// the change of the Lagrangian gradient. The iteration stops when the QP
/// value σ satisfies `σ ≥ −ε` and the constraints hold to `ε`.
pub fn solve(nlp: &Nlp, u0: &ControlGrid, opts: &SqpOptions) -> Result<SolveReport> {
    if !u0.within_bounds() {
        return Err(Error::Precondition("initial controls violate the box bounds".into()));
    }
    let lo = Vector::from_vec(u0.lower_flat());
    let hi = Vector::from_vec(u0.upper_flat());
    let np = lo.len();
    let mut point = nlp.differentiate(nlp.values(u0)?)?;
    let mut state = SqpState {
        u: u0.to_flat(),
        h: Matrix::identity(np, np),
        penalty: 0.0,
        iteration: 0,
        mult_eq: Vector::zeros(nlp.equalities.len()),
        mult_in: Vector::zeros(nlp.inequalities.len()),
    };
    let mut scaled = false;
    let mut log = Vec::new();
    let mut stop_reason = None;

    let sigma = loop {
        let u = Vector::from_column_slice(&state.u);
        let (j_eq, c_eq, basis) = reduce_equalities(&point.j_eq, &point.c_eq);
        let qp = QpProblem {
            h: state.h.clone(),
            g: point.grad.clone(),
            j_eq,
            c_eq,
            j_in: point.j_in.clone(),
            c_in: point.c_in.clone(),
            lower: &lo - &u,
            upper: &hi - &u,
        };
        let sol = match direction(&qp, &mut state.penalty, opts.max_penalty) {
            Ok(mut sol) => {
                sol.mult_eq = &basis * &sol.mult_eq;
                sol.violation = linearized_violation(&point, &sol.d);
                sol
            }
            Err(Error::Qp(_)) if !is_scaled_identity(&state.h) => {
                state.h = reset(&state.h);
                continue;
            }
            Err(e) => return Err(e),
        };
        let sigma = sol.value + state.penalty * (sol.violation - point.violation());
        let mut row = IterationLog {
            k: state.iteration,
            objective: point.phi,
            max_eq: point.max_eq(),
            max_ineq: point.max_ineq(),
            sigma,
            step: 0.0,
            transitions: point.traj.transitions.len(),
        };
        if converged(&point, sigma, opts.eps) {
            log.push(row);
            break sigma;
        }
        if state.iteration >= opts.max_iter {
            log.push(row);
            stop_reason = Some(format!("maximum of {} iterations reached", opts.max_iter));
            break sigma;
        }

        let merit0 = point.merit(state.penalty);
        let slope = (sigma - 0.5 * sol.d.dot(&(&state.h * &sol.d))).min(0.0);

        // decreases below the rounding level of the merit value are not
        // observable, so a few ulps of increase are tolerated
        let noise = 4.0 * f64::EPSILON * merit0.abs();
        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = (0..np).map(|i| (u[i] + alpha * sol.d[i]).clamp(lo[i], hi[i])).collect();
            if let Ok(p) = nlp.values(&u0.with_flat(&trial)?) {
                if p.merit(state.penalty) <= merit0 + opts.armijo * alpha * slope + noise {
                    break Some((trial, p));
                }
            }
            alpha *= opts.backtrack;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some((trial, new_point)) = accepted else {
            if !is_scaled_identity(&state.h) {
                state.h = reset(&state.h);
                continue;
            }
            log.push(row);
            stop_reason = Some("line search failed".into());
            break sigma;
        };
        let new_point = nlp.differentiate(new_point)?;
        row.step = alpha;
        log.push(row);

        let s = Vector::from_column_slice(&trial) - &u;
        let y = new_point.lagrangian_gradient(&sol.mult_eq, &sol.mult_in) - point.lagrangian_gradient(&sol.mult_eq, &sol.mult_in);
        if !scaled {
            let sy = s.dot(&y);
            if sy > 0.0 {
                state.h = Matrix::identity(np, np) * (y.norm_squared() / sy);
                scaled = true;
            }
        }
        // across a change of the switching structure the gradient jumps
        // and the difference carries no curvature information
        if s.norm() > 0.0 && same_structure(&point.traj, &new_point.traj) {
            state.h = bfgs_powell_update(&state.h, &s, &y, opts.damping)?.0;
        }
        state.u = trial;
        state.mult_eq = sol.mult_eq;
        state.mult_in = sol.mult_in;
        state.iteration += 1;
        point = new_point;
    };

    Ok(SolveReport {
        converged: stop_reason.is_none(),
        iterations: state.iteration,
        objective: point.phi,
        max_eq: point.max_eq(),
        max_ineq: point.max_ineq(),
        sigma,
        log,
        grid: point.grid,
        trajectory: point.traj,
        stop_reason,
    })
}

/// Rank-revealing rotation of the equality linearization. Directions of
/// `J_E` with singular values below `1e-6·σ_max` stem from constraints that
/// are dependent on the current switching structure (sliding ties `v_2` to
/// `θ` in the race car) and are dropped; `basis` maps the reduced
/// multipliers back.
fn reduce_equalities(j: &Matrix, c: &Vector) -> (Matrix, Vector, Matrix) {
    let me = j.nrows();
    if me == 0 {
        return (j.clone(), c.clone(), Matrix::zeros(0, 0));
    }
    let svd = j.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.amax();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > 1e-6 * smax).collect();
    if keep.len() == me {
        return (j.clone(), c.clone(), Matrix::identity(me, me));
    }
    let basis = Matrix::from_fn(me, keep.len(), |i, k| u[(i, keep[k])]);
    (basis.transpose() * j, basis.transpose() * c, basis)
}

fn linearized_violation(p: &Point, d: &Vector) -> f64 {
    (&p.c_eq + &p.j_eq * d).abs().sum() + (&p.c_in + &p.j_in * d).iter().map(|v| v.max(0.0)).sum::<f64>()
}

fn same_structure(a: &TrajectoryRecord, b: &TrajectoryRecord) -> bool {
    a.transitions.len() == b.transitions.len() && a.transitions.iter().zip(&b.transitions).all(|(p, q)| p.kind == q.kind && p.post == q.post)
}

fn mult_norm(sol: &QpSolution) -> f64 {
    sol.mult_eq.iter().chain(sol.mult_in.iter()).fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves the direction-finding problem for the ℓ1 penalty function with
/// parameter `penalty`, raising the parameter to twice the QP multipliers
/// first. The parameter is capped: beyond the cap
/// the multipliers stem from nearly dependent constraint gradients, and the
/// ℓ1 problem then leaves a tiny residual instead of taking a long step.
fn direction(qp: &QpProblem, penalty: &mut f64, max_penalty: f64) -> Result<QpSolution> {
    let cap = max_penalty * (1.0 + qp.g.amax());
    let plain = qp::plain_qp(qp)?;
    let wanted = plain.as_ref().map_or(cap, |s| 2.0 * mult_norm(s));
    *penalty = penalty.max(wanted.min(cap));
    match plain {
        Some(sol) if mult_norm(&sol) <= *penalty => Ok(sol),
        _ => qp::l1_qp(qp, penalty.max(f64::MIN_POSITIVE)),
    }
}

/// Discards the curvature information, keeping the average scale.
fn reset(h: &Matrix) -> Matrix {
    let scale = h.diagonal().mean();
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    Matrix::identity(h.nrows(), h.ncols()) * scale
}

fn is_scaled_identity(h: &Matrix) -> bool {
    let d = h[(0, 0)];
    h.iter().enumerate().all(|(idx, &v)| {
        let (i, j) = (idx % h.nrows(), idx / h.nrows());
        if i == j {
            v == d
        } else {
            v == 0.0
        }
    })
}

/// Writes `k, objective, max_eq_violation, max_ineq_violation, sigma,
/// step_length, transitions`.
pub fn write_log(log: &[IterationLog], mut w: impl Write) -> Result<()> {
    writeln!(w, "k,objective,max_eq_violation,max_ineq_violation,sigma,step_length,transitions")?;
    for r in log {
        writeln!(
            w,
            "{},{:.17e},{:.6e},{:.6e},{:.6e},{:.6e},{}",
            r.k, r.objective, r.max_eq, r.max_ineq, r.sigma, r.step, r.transitions
        )?;
    }
    Ok(())
}
