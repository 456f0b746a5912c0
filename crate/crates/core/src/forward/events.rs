//! Event functions and switching-time localization.

use crate::error::{Error, Result};
use crate::forward::hermite::Hermite;
use crate::model::{HybridModel, PhaseLabel, Vector};

/// The scalar function whose zero defines a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// `e(x) = g(x)`.
    Surface,
    /// `e(x, u) = r_i(x, u)`, the sliding exit residual `i`.
    Exit(usize),
}

impl EventKind {
    pub fn value(self, model: &dyn HybridModel, x: &Vector, u: &Vector) -> f64 {
        match self {
            EventKind::Surface => model.surface(x)[0],
            EventKind::Exit(i) => model.slide_residuals(x, u)[i],
        }
    }

    /// `(∂e/∂x, ∂e/∂u)`.
    pub fn gradient(self, model: &dyn HybridModel, x: &Vector, u: &Vector) -> (Vector, Vector) {
        match self {
            EventKind::Surface => (
                model.surface_x(x).row(0).transpose(),
                Vector::zeros(u.len()),
            ),
            EventKind::Exit(i) => model.slide_residuals_grad(x, u)[i].clone(),
        }
    }
}

/// Event functions monitored during a phase, each signed so that it is
/// positive while the phase persists.
pub fn monitored(phase: PhaseLabel) -> &'static [(EventKind, f64)] {
    match phase {
        PhaseLabel::OdeRegion1 => &[(EventKind::Surface, -1.0)],
        PhaseLabel::OdeRegion2 => &[(EventKind::Surface, 1.0)],
        PhaseLabel::Sliding => &[(EventKind::Exit(0), 1.0), (EventKind::Exit(1), 1.0)],
    }
}

/// Root of `f` in `[a, b]` given `f(a) > 0 ≥ f(b)`, by the Illinois
/// variant of regula falsi. Stops when `|f| ≤ tol` or the bracket collapses.
pub fn bracketed_root(f: impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, tol: f64) -> Result<f64> {
    if !(fa.signum() != fb.signum() || fb == 0.0) {
        return Err(Error::Precondition(format!(
            "no sign change on [{a}, {b}]: f = ({fa:e}, {fb:e})"
        )));
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut a, mut fa, mut b, mut fb) = (a, fa, b, fb);
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { a } else { b };
    for _ in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        best = c;
        if fc.abs() <= tol || (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}

/// A detected transition inside one step, at `τ = (t − t(k))/h(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub event: EventKind,
    pub tau: f64,
}

/// Scans a step's interpolant for the earliest event of `phase`.
///
/// The monitored functions are sampled at `samples` interior points and at
/// the step end, and a sample counts as a crossing when it is `≤ 0`. When a
/// function starts within `margin` of zero (the step begins on the event
/// manifold, typically right after a transition) a sample only counts once
/// it drops below `-margin`.
pub fn locate_switch(
    model: &dyn HybridModel,
    phase: PhaseLabel,
    interp: &Hermite,
    u: &Vector,
    samples: usize,
    margin: f64,
    root_tol: f64,
) -> Result<Option<Crossing>> {
    let mut earliest: Option<Crossing> = None;
    for &(event, sign) in monitored(phase) {
        let e = |tau: f64| sign * event.value(model, &interp.eval(tau), u);
        let mut prev_tau = 0.0;
        let mut prev = e(0.0);
        let threshold = if prev.abs() <= margin { -margin } else { 0.0 };
        for j in 1..=samples + 1 {
            let tau = j as f64 / (samples + 1) as f64;
            if earliest.is_some_and(|c| c.tau < prev_tau) {
                break;
            }
            let cur = e(tau);
            let crossed = if threshold < 0.0 { cur < threshold } else { cur <= 0.0 };
            if crossed {
                let root = if prev > 0.0 {
                    bracketed_root(e, prev_tau, prev, tau, cur, root_tol)?
                } else {
                    // a start on the manifold may rise briefly before
                    // returning; probe towards the start for the hump
                    let mut hi = (tau, cur);
                    let mut hump = None;
                    for k in 1..=40 {
                        let p = prev_tau + (tau - prev_tau) * 0.5f64.powi(k);
                        let ep = e(p);
                        if ep > 0.0 {
                            hump = Some((p, ep));
                            break;
                        }
                        hi = (p, ep);
                    }
                    match hump {
                        Some((p, ep)) => bracketed_root(e, p, ep, hi.0, hi.1, root_tol)?,
                        // heads the wrong way from the start
                        None => prev_tau,
                    }
                };
                if earliest.map_or(true, |c| root < c.tau) {
                    earliest = Some(Crossing { event, tau: root });
                }
                break;
            }
            prev_tau = tau;
            prev = cur;
        }
    }
    Ok(earliest)
}
