//! Adjoint jumps at located transitions.

use crate::error::{Error, Result};
use crate::forward::{step_length_sensitivity, EventKind, TrajectoryRecord};
use crate::model::{phase_field, HybridModel, Vector};
use crate::tableau::Tableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum JumpFormula {
    /// Exact jump of the discrete recursion, from the step-length
    /// sensitivities of the two steps adjacent to the transition.
    #[default]
    Discrete,
    /// `π̂ = −λ_f⁺ᵀ (f_post − f_pre) / (e_x f_pre)` at the transition state.
    Simple,
}

impl std::str::FromStr for JumpFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(JumpFormula::Discrete),
            "simple" => Ok(JumpFormula::Simple),
            other => Err(Error::Config(format!("unknown jump formula `{other}`"))),
        }
    }
}

impl std::fmt::Display for JumpFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JumpFormula::Discrete => "discrete",
            JumpFormula::Simple => "simple",
        })
    }
}

fn check_denominator(t: f64, denom: f64, scale: f64) -> Result<()> {
    if !(denom.abs() > 1e-12 * scale) {
        return Err(Error::TangentialCrossing { t, denominator: denom });
    }
    Ok(())
}

/// Jump multiplier of the discrete adjoint at mesh point `k_t`.
///
/// With `dx(k+1)/dh = −w` for the step ending at the transition (`w_pre`)
/// and the step starting there (`w_post`),
///
/// ```text
/// π = (λ_f⁺ᵀ w_pre − λ_f(k_t+1)ᵀ w_post) / (e_x w_pre)
/// ```
///
/// where `λ_f(k_t+1)` is the value that entered the backward step of the
/// post step. A transition at `t_f` has no post step and the second term
/// vanishes.
pub fn jump_pi_discrete(
    model: &dyn HybridModel,
    tab: &Tableau,
    traj: &TrajectoryRecord,
    k_t: usize,
    event: EventKind,
    lambda_post: &Vector,
    lambda_entering: Option<&Vector>,
) -> Result<f64> {
    let pre = &traj.steps[k_t - 1];
    let u = &traj.grid.values[pre.n];
    let w_pre = step_length_sensitivity(model, tab, pre.phase, &pre.xs, &pre.zs, u, pre.h)?;
    let (e_x, _) = event.gradient(model, traj.state(k_t), u);
    let denom = e_x.dot(&w_pre);
    check_denominator(pre.t + pre.h, denom, e_x.norm() * w_pre.norm())?;
    let mut num = lambda_post.dot(&w_pre);
    if let (Some(post), Some(lam)) = (traj.steps.get(k_t), lambda_entering) {
        let u_post = &traj.grid.values[post.n];
        let w_post = step_length_sensitivity(model, tab, post.phase, &post.xs, &post.zs, u_post, post.h)?;
        num -= lam.dot(&w_post);
    }
    Ok(num / denom)
}

/// Jump multiplier from the field difference at the transition state.
pub fn jump_pi_simple(
    model: &dyn HybridModel,
    traj: &TrajectoryRecord,
    k_t: usize,
    event: EventKind,
    lambda_post: &Vector,
) -> Result<f64> {
    let pre = &traj.steps[k_t - 1];
    let u = &traj.grid.values[pre.n];
    let x = traj.state(k_t);
    let (post_phase, z_post) = match traj.steps.get(k_t) {
        Some(s) => (s.phase, s.z.clone()),
        None => (traj.phase_final, traj.z_final.clone().unwrap_or_else(|| Vector::zeros(0))),
    };
    let f_pre = phase_field(model, pre.phase, x, &pre.z_next, u);
    let f_post = phase_field(model, post_phase, x, &z_post, u);
    let (e_x, _) = event.gradient(model, x, u);
    let denom = e_x.dot(&f_pre);
    check_denominator(pre.t + pre.h, denom, e_x.norm() * f_pre.norm())?;
    Ok(-lambda_post.dot(&(f_post - f_pre)) / denom)
}

/// `λ_f⁻ = λ_f⁺ − π e_xᵀ`.
pub fn apply_jump(lambda_post: &Vector, pi: f64, e_x: &Vector) -> Vector {
    lambda_post - e_x * pi
}

/// `λ_f⁻ᵀ f_pre − λ_f⁺ᵀ f_post` at a transition: the Hamiltonian continuity
/// defect, which vanishes for the continuous jump condition.
pub fn hamiltonian_defect(model: &dyn HybridModel, traj: &TrajectoryRecord, k_t: usize, lambda_pre: &Vector, lambda_post: &Vector) -> f64 {
    let pre = &traj.steps[k_t - 1];
    let u = &traj.grid.values[pre.n];
    let x = traj.state(k_t);
    let (post_phase, z_post) = match traj.steps.get(k_t) {
        Some(s) => (s.phase, s.z.clone()),
        None => (traj.phase_final, traj.z_final.clone().unwrap_or_else(|| Vector::zeros(0))),
    };
    let f_pre = phase_field(model, pre.phase, x, &pre.z_next, u);
    let f_post = phase_field(model, post_phase, x, &z_post, u);
    lambda_pre.dot(&f_pre) - lambda_post.dot(&f_post)
}
