//! Discrete adjoint of the hybrid Radau IIA recursion.
//!
//! The backward step is the adjoint of one forward step. On an ODE step the
//! stage adjoints solve
//!
//! ```text
//! λ_fi − h Σ_j ā_ij f_x(x_j)ᵀ λ_fj = λ_f(k+1)
//! λ_f(k) = λ_f(k+1) + h Σ_i b_i f_x(x_i)ᵀ λ_fi
//! ```
//!
//! with `ā_ij = a_ji b_j / b_i`. On a sliding step `f_x` is `∂f²/∂x`, the
//! terms `g_x(x_j)ᵀ λ_gj` join both sums and the stages satisfy
//! `g_x(x_i) λ_fi = 0`. Jacobians are evaluated at the stored forward stage
//! values. At a located transition `λ_f` jumps by `−π e_xᵀ`, where `e` is the
//! event function that fixed the transition time.

pub mod jump;
pub mod terminal;

use std::io::Write;

use crate::error::{Error, Result};
use crate::forward::{EventKind, StepRecord, TrajectoryRecord};
use crate::model::{f2_x, HybridModel, Matrix, Vector};
use crate::tableau::Tableau;

pub use jump::{apply_jump, jump_pi_discrete, jump_pi_simple, JumpFormula};
pub use terminal::{terminal_conditions, TerminalSolution};

/// Stage adjoints of one step and the resulting `λ` at its left end.
#[derive(Clone, Debug)]
pub struct BackwardStep {
    /// `λ_f(k)` before any jump at mesh point `k` is applied.
    pub lambda_f: Vector,
    /// `λ_g(k) = Σ_i b⁻_i λ_gi`; empty outside sliding.
    pub lambda_g: Vector,
    pub stage_f: Vec<Vector>,
    pub stage_g: Vec<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    pub k_t: usize,
    pub t_t: f64,
    pub event: EventKind,
    pub pi: f64,
    /// `λ_f(t_t⁺)`, the value reached from the right.
    pub lambda_post: Vector,
    /// `λ_f(t_t⁻) = λ_f(t_t⁺) − π e_xᵀ`.
    pub lambda_pre: Vector,
    /// `∂e/∂u` at the transition, non-zero only for exit events.
    pub e_u: Vector,
    /// Control interval of the step that ends at the transition.
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct AdjointRecord {
    /// `λ_f` on mesh points `0..=K`, left-sided at transitions.
    pub lambda_f: Vec<Vector>,
    /// Per step; empty vectors outside sliding.
    pub lambda_g: Vec<Vector>,
    pub stage_f: Vec<Vec<Vector>>,
    pub stage_g: Vec<Vec<Vector>>,
    pub jumps: Vec<JumpRecord>,
    /// Consistent terminal values; reported but not used to start the sweep,
    /// which starts from `λ_f(K) = −φ_xᵀ` as the discrete recursion demands.
    pub terminal: TerminalSolution,
}

fn linear_stage_solve(
    model: &dyn HybridModel,
    tab: &Tableau,
    step: &StepRecord,
    u: &Vector,
    lambda_next: &Vector,
) -> Result<BackwardStep> {
    let s = tab.stages;
    let n = model.n_x();
    let sliding = step.phase.is_sliding();
    let m = if sliding { model.n_z() } else { 0 };
    let h = step.h;
    let fx: Vec<Matrix> = (0..s)
        .map(|j| match step.phase.ode_field() {
            Some(which) => model.field_x(which, &step.xs[j], u),
            None => f2_x(model, &step.xs[j], &step.zs[j], u),
        })
        .collect();
    let gx: Vec<Matrix> = if sliding {
        step.xs.iter().map(|x| model.surface_x(x)).collect()
    } else {
        Vec::new()
    };
    // unknowns (λ_f1..λ_fs, h·λ_g1..h·λ_gs)
    let dim = s * (n + m);
    let mut a = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    for i in 0..s {
        rhs.rows_mut(i * n, n).copy_from(lambda_next);
        for j in 0..s {
            let abar = tab.a_bar[(i, j)];
            let mut blk = a.view_mut((i * n, j * n), (n, n));
            blk -= fx[j].transpose() * (h * abar);
            if i == j {
                for d in 0..n {
                    blk[(d, d)] += 1.0;
                }
            }
            if sliding {
                let mut zb = a.view_mut((i * n, s * n + j * m), (n, m));
                zb -= gx[j].transpose() * abar;
            }
        }
        if sliding {
            a.view_mut((s * n + i * m, i * n), (m, n)).copy_from(&gx[i]);
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| {
        Error::IndexCondition(format!("singular adjoint stage system at t = {}", step.t))
    })?;
    let stage_f: Vec<Vector> = (0..s).map(|i| sol.rows(i * n, n).into_owned()).collect();
    let stage_g: Vec<Vector> = (0..s)
        .map(|i| {
            if sliding {
                sol.rows(s * n + i * m, m) / h
            } else {
                Vector::zeros(0)
            }
        })
        .collect();
    let mut lambda_f = lambda_next.clone();
    for i in 0..s {
        lambda_f += fx[i].transpose() * &stage_f[i] * (h * tab.b[i]);
        if sliding {
            lambda_f += gx[i].transpose() * &stage_g[i] * (h * tab.b[i]);
        }
    }
    let lambda_g = if sliding {
        let mut lg = Vector::zeros(m);
        for i in 0..s {
            lg.axpy(tab.b_minus[i], &stage_g[i], 1.0);
        }
        lg
    } else {
        Vector::zeros(0)
    };
    Ok(BackwardStep {
        lambda_f,
        lambda_g,
        stage_f,
        stage_g,
    })
}

/// Adjoint of one ODE step.
pub fn backward_step_ode(
    model: &dyn HybridModel,
    tab: &Tableau,
    step: &StepRecord,
    u: &Vector,
    lambda_next: &Vector,
) -> Result<BackwardStep> {
    if step.phase.is_sliding() {
        return Err(Error::Precondition("backward_step_ode on a sliding step".into()));
    }
    linear_stage_solve(model, tab, step, u, lambda_next)
}

/// Adjoint of one sliding step.
///
/// `λ_g(k+1)` does not enter: the stage system and `λ_f(k)` only involve the
/// stage multipliers, and `λ_g(k)` follows from them with weights `b⁻`.
pub fn backward_step_dae(
    model: &dyn HybridModel,
    tab: &Tableau,
    step: &StepRecord,
    u: &Vector,
    lambda_next: &Vector,
) -> Result<BackwardStep> {
    if !step.phase.is_sliding() {
        return Err(Error::Precondition("backward_step_dae on an ODE step".into()));
    }
    linear_stage_solve(model, tab, step, u, lambda_next)
}

/// Full backward sweep for the endpoint functional with gradient `φ_x`.
pub fn backward_sweep(
    model: &dyn HybridModel,
    tab: &Tableau,
    traj: &TrajectoryRecord,
    phi_x: &Vector,
    formula: JumpFormula,
) -> Result<AdjointRecord> {
    let big_k = traj.steps.len();
    let u_last = traj.grid.values.last().expect("non-empty grid");
    let terminal = terminal_conditions(model, &traj.x_final, traj.z_final.as_ref(), u_last, phi_x)?;

    let mut lambda_f = vec![Vector::zeros(0); big_k + 1];
    let mut lambda_g = vec![Vector::zeros(0); big_k];
    let mut stage_f = vec![Vec::new(); big_k];
    let mut stage_g = vec![Vec::new(); big_k];
    let mut jumps = Vec::new();

    // located transitions, latest first
    let mut pending: Vec<_> = traj.located_transitions().collect();
    pending.reverse();

    let mut current = -phi_x;
    // λ that entered the backward step starting at mesh point k + 1
    let mut entering: Option<Vector> = None;
    let mut k = big_k;
    loop {
        while let Some(tr) = pending.first().filter(|tr| tr.k_t == k) {
            let tr = (*tr).clone();
            pending.remove(0);
            if k == 0 {
                break;
            }
            let pre = &traj.steps[k - 1];
            let event = tr.event.expect("located transition");
            let pi = match formula {
                JumpFormula::Discrete => jump_pi_discrete(model, tab, traj, k, event, &current, entering.as_ref())?,
                JumpFormula::Simple => jump_pi_simple(model, traj, k, event, &current)?,
            };
            let u_pre = &traj.grid.values[pre.n];
            let (e_x, e_u) = event.gradient(model, traj.state(k), u_pre);
            let lambda_pre = apply_jump(&current, pi, &e_x);
            jumps.push(JumpRecord {
                k_t: k,
                t_t: tr.t_t,
                event,
                pi,
                lambda_post: current.clone(),
                lambda_pre: lambda_pre.clone(),
                e_u,
                n: pre.n,
            });
            current = lambda_pre;
        }
        lambda_f[k] = current.clone();
        if k == 0 {
            break;
        }
        let step = &traj.steps[k - 1];
        let u = &traj.grid.values[step.n];
        let back = linear_stage_solve(model, tab, step, u, &current)?;
        entering = Some(current.clone());
        current = back.lambda_f;
        lambda_g[k - 1] = back.lambda_g;
        stage_f[k - 1] = back.stage_f;
        stage_g[k - 1] = back.stage_g;
        k -= 1;
    }
    jumps.reverse();
    Ok(AdjointRecord {
        lambda_f,
        lambda_g,
        stage_f,
        stage_g,
        jumps,
        terminal,
    })
}

impl AdjointRecord {
    /// Largest `|g_x(x_i) λ_fi|` over all sliding stages.
    pub fn max_algebraic_residual(&self, model: &dyn HybridModel, traj: &TrajectoryRecord) -> f64 {
        traj.steps
            .iter()
            .zip(&self.stage_f)
            .filter(|(s, _)| s.phase.is_sliding())
            .flat_map(|(s, lf)| {
                s.xs.iter()
                    .zip(lf)
                    .map(|(x, l)| (model.surface_x(x) * l).amax())
            })
            .fold(0.0, f64::max)
    }

    /// Writes `t, λ_f…, λ_g…`; at a jump the post value is written first,
    /// then the pre value.
    pub fn write_csv(&self, traj: &TrajectoryRecord, mut w: impl Write) -> Result<()> {
        let n_x = traj.x_final.len();
        let n_z = 1;
        let mut header = vec!["t".to_string()];
        header.extend((0..n_x).map(|i| format!("lambda_f{i}")));
        header.extend((0..n_z).map(|i| format!("lambda_g{i}")));
        writeln!(w, "{}", header.join(","))?;
        let times = traj.times();
        for (k, t) in times.iter().enumerate() {
            let lg = if k < self.lambda_g.len() {
                self.lambda_g[k].clone()
            } else {
                self.terminal.lambda_g.clone()
            };
            let mut rows: Vec<&Vector> = self.jumps.iter().filter(|j| j.k_t == k).map(|j| &j.lambda_post).collect();
            rows.push(&self.lambda_f[k]);
            for lf in rows {
                let mut cells = vec![format!("{t:.17e}")];
                cells.extend(lf.iter().map(|v| format!("{v:.17e}")));
                cells.extend((0..n_z).map(|i| lg.get(i).map_or("nan".to_string(), |v| format!("{v:.17e}"))));
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Ok(())
    }
}
