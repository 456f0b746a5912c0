//! Forward integration of hybrid trajectories.
//!
//! ODE phases and sliding phases are both advanced with three-stage Radau
//! IIA on a fixed base mesh that is split at control boundaries. Transitions
//! are detected by sign changes of the monitored event functions on the
//! step's Hermite interpolant, located with a bracketing secant iteration and
//! then landed on exactly by re-taking the step.

pub mod events;
pub mod hermite;
pub mod stage;

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{consistent_z, phase_field, ControlGrid, HybridModel, PhaseLabel, Vector};
use crate::tableau::Tableau;

pub use events::{locate_switch, Crossing, EventKind};
pub use hermite::Hermite;
pub use stage::{step, step_dae, step_length_sensitivity, step_ode, NewtonOptions, StageSolution};

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Number of base steps on `[t0, tf]`.
    pub steps: usize,
    pub newton: NewtonOptions,
    /// `|g(x)|` below which a state counts as on the surface.
    pub surface_tol: f64,
    /// Target `|e|` of the located root on the interpolant.
    pub root_tol: f64,
    /// Fragments shorter than this fraction of the base step are merged.
    pub min_fraction: f64,
    /// Interior samples of the interpolant when scanning for events.
    pub event_samples: usize,
    /// Refine the re-taken step length so that the event function vanishes
    /// on the discrete state, not only on the interpolant.
    pub polish: bool,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            steps: 200,
            newton: NewtonOptions::default(),
            surface_tol: 1e-9,
            root_tol: 1e-12,
            min_fraction: 0.1,
            event_samples: 8,
            polish: true,
            max_steps: 1_000_000,
        }
    }
}

/// One accepted step `t(k) → t(k) + h(k)` with its converged stages.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub h: f64,
    pub phase: PhaseLabel,
    /// Control interval.
    pub n: usize,
    pub x: Vector,
    /// `z(k)`; empty outside sliding.
    pub z: Vector,
    pub xs: Vec<Vector>,
    pub zs: Vec<Vector>,
    pub x_next: Vector,
    pub z_next: Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    EnterSliding,
    LeaveSliding,
    CrossRegion,
}

/// A phase change at mesh point `k_t`: step `k_t − 1` belongs to `pre` and
/// step `k_t` to `post`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub k_t: usize,
    pub t_t: f64,
    pub kind: TransitionKind,
    pub pre: PhaseLabel,
    pub post: PhaseLabel,
    /// Event that fixed the transition time. `None` when the phase changed at
    /// a control boundary because the new control value made sliding
    /// inadmissible; such a transition time does not depend on the state.
    pub event: Option<EventKind>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    pub transitions: Vec<TransitionRecord>,
    pub x_final: Vector,
    /// `z(t_f)` when the trajectory ends in sliding.
    pub z_final: Option<Vector>,
    pub phase_final: PhaseLabel,
    pub grid: ControlGrid,
    pub base_step: f64,
}

impl TrajectoryRecord {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Mesh times `t(0), …, t(K)`.
    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.steps.iter().map(|s| s.t).collect();
        ts.push(self.grid.tf);
        ts
    }

    /// State at mesh point `k`, `k = 0..=K`.
    pub fn state(&self, k: usize) -> &Vector {
        if k == self.steps.len() {
            &self.x_final
        } else {
            &self.steps[k].x
        }
    }

    /// Located transitions, i.e. those whose time depends on the state.
    pub fn located_transitions(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.transitions.iter().filter(|tr| tr.event.is_some())
    }

    pub fn has_sliding(&self) -> bool {
        self.steps.iter().any(|s| s.phase.is_sliding())
    }

    /// Maximal runs of sliding steps as `(first, last)` step indices.
    pub fn sliding_segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (k, s) in self.steps.iter().enumerate() {
            match (s.phase.is_sliding(), start) {
                (true, None) => start = Some(k),
                (false, Some(a)) => {
                    out.push((a, k - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            out.push((a, self.steps.len() - 1));
        }
        out
    }

    /// Writes `t, phase, x…, z…, u…`, one row per mesh point.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n_x = self.x_final.len();
        let n_u = self.grid.n_u();
        let n_z = self
            .steps
            .iter()
            .map(|s| s.z.len())
            .chain(self.z_final.iter().map(|z| z.len()))
            .max()
            .unwrap_or(0)
            .max(1);
        let mut header = vec!["t".to_string(), "phase".to_string()];
        header.extend((0..n_x).map(|i| format!("x{i}")));
        header.extend((0..n_z).map(|i| format!("z{i}")));
        header.extend((0..n_u).map(|i| format!("u{i}")));
        writeln!(w, "{}", header.join(","))?;
        let row = |w: &mut dyn Write, t: f64, phase: PhaseLabel, x: &Vector, z: &Vector, u: &Vector| -> Result<()> {
            let mut cells = vec![format!("{t:.17e}"), phase.to_string()];
            cells.extend(x.iter().map(|v| format!("{v:.17e}")));
            cells.extend((0..n_z).map(|i| z.get(i).map_or("nan".to_string(), |v| format!("{v:.17e}"))));
            cells.extend(u.iter().map(|v| format!("{v:.17e}")));
            writeln!(w, "{}", cells.join(","))?;
            Ok(())
        };
        for s in &self.steps {
            row(&mut w, s.t, s.phase, &s.x, &s.z, &self.grid.values[s.n])?;
        }
        let empty = Vector::zeros(0);
        row(
            &mut w,
            self.grid.tf,
            self.phase_final,
            &self.x_final,
            self.z_final.as_ref().unwrap_or(&empty),
            self.grid.values.last().expect("non-empty grid"),
        )
    }
}

/// Phase at a starting point: sliding if the state is on the surface and
/// both exit residuals are positive, otherwise the region the fields point
/// into.
pub fn initial_phase(model: &dyn HybridModel, x: &Vector, u: &Vector, surface_tol: f64) -> PhaseLabel {
    let g = model.surface(x)[0];
    if g.abs() <= surface_tol {
        let [r1, r2] = model.slide_residuals(x, u);
        if attracts(r1, r2) {
            PhaseLabel::Sliding
        } else if r1 <= 0.0 {
            PhaseLabel::OdeRegion1
        } else {
            PhaseLabel::OdeRegion2
        }
    } else if g < 0.0 {
        PhaseLabel::OdeRegion1
    } else {
        PhaseLabel::OdeRegion2
    }
}

/// Both fields point towards the surface, or one is tangent to it while
/// the other points towards it.
fn attracts(r1: f64, r2: f64) -> bool {
    r1 >= 0.0 && r2 >= 0.0 && r1 + r2 > 0.0
}

/// Phase entered after `event` fires during `pre` at state `x`.
fn post_phase(model: &dyn HybridModel, pre: PhaseLabel, event: EventKind, x: &Vector, u: &Vector) -> (PhaseLabel, TransitionKind) {
    match (pre, event) {
        (PhaseLabel::Sliding, EventKind::Exit(0)) => (PhaseLabel::OdeRegion1, TransitionKind::LeaveSliding),
        (PhaseLabel::Sliding, _) => (PhaseLabel::OdeRegion2, TransitionKind::LeaveSliding),
        (ode, _) => {
            let [r1, r2] = model.slide_residuals(x, u);
            if attracts(r1, r2) {
                (PhaseLabel::Sliding, TransitionKind::EnterSliding)
            } else if ode == PhaseLabel::OdeRegion1 {
                (PhaseLabel::OdeRegion2, TransitionKind::CrossRegion)
            } else {
                (PhaseLabel::OdeRegion1, TransitionKind::CrossRegion)
            }
        }
    }
}

/// Mesh breakpoints with a flag marking control boundaries and `t_f`.
fn breakpoints(grid: &ControlGrid, steps: usize, min_fraction: f64) -> Vec<(f64, bool)> {
    let big_h = (grid.tf - grid.t0) / steps as f64;
    let controls: Vec<f64> = (0..=grid.n_intervals()).map(|n| grid.boundary(n)).collect();
    let mut pts: Vec<(f64, bool)> = controls.iter().map(|&t| (t, true)).collect();
    for j in 1..steps {
        let t = grid.t0 + big_h * j as f64;
        let near = controls.iter().any(|&c| (c - t).abs() < min_fraction * big_h);
        if !near {
            pts.push((t, false));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn control_interval(grid: &ControlGrid, t: f64) -> usize {
    let n = grid.n_intervals();
    let frac = (t - grid.t0) / (grid.tf - grid.t0) * n as f64;
    // a time within rounding of a boundary belongs to the interval it opens
    let idx = (frac + 1e-9).floor();
    (idx.max(0.0) as usize).min(n - 1)
}

struct StepContext<'a> {
    model: &'a dyn HybridModel,
    tab: &'a Tableau,
    opts: &'a IntegratorOptions,
}

impl StepContext<'_> {
    fn take(&self, phase: PhaseLabel, t: f64, x: &Vector, z: &Vector, u: &Vector, h: f64) -> Result<StageSolution> {
        step(self.model, self.tab, phase, t, x, z, u, h, &self.opts.newton)
    }

    fn interpolant(&self, phase: PhaseLabel, x: &Vector, z: &Vector, sol: &StageSolution, u: &Vector, h: f64) -> Hermite {
        let s = self.tab.stages;
        let f0 = phase_field(self.model, phase, x, z, u);
        let zs = sol.zs.get(s - 1).cloned().unwrap_or_else(|| Vector::zeros(0));
        let f1 = phase_field(self.model, phase, &sol.xs[s - 1], &zs, u);
        Hermite::new(x.clone(), &f0, sol.xs[s - 1].clone(), &f1, h)
    }

    /// Newton on the step length so that the event vanishes at `x(k+1)`.
    fn polish(
        &self,
        phase: PhaseLabel,
        t: f64,
        x: &Vector,
        z: &Vector,
        u: &Vector,
        event: EventKind,
        h0: f64,
        sol0: StageSolution,
    ) -> Result<(f64, StageSolution)> {
        let (mut h, mut sol) = (h0, sol0);
        let mut e = event.value(self.model, &sol.x_next, u);
        for _ in 0..8 {
            if e == 0.0 {
                break;
            }
            let w = step_length_sensitivity(self.model, self.tab, phase, &sol.xs, &sol.zs, u, h)?;
            let (ex, _) = event.gradient(self.model, &sol.x_next, u);
            let de = -ex.dot(&w);
            if de == 0.0 || !de.is_finite() {
                break;
            }
            let dh = -e / de;
            if dh.abs() > 0.5 * h {
                break;
            }
            let h_new = h + dh;
            let sol_new = self.take(phase, t, x, z, u, h_new)?;
            let e_new = event.value(self.model, &sol_new.x_next, u);
            if e_new.abs() >= e.abs() {
                break;
            }
            h = h_new;
            sol = sol_new;
            e = e_new;
            if dh.abs() <= 4.0 * f64::EPSILON * (t.abs() + h.abs()) {
                break;
            }
        }
        Ok((h, sol))
    }
}

/// Integrates the hybrid system from `x0` under the piecewise-constant
/// controls of `grid`.
pub fn integrate(
    model: &dyn HybridModel,
    tab: &Tableau,
    grid: &ControlGrid,
    x0: &Vector,
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord> {
    if x0.len() != model.n_x() {
        return Err(Error::Dimension(format!("x0 has length {}, model needs {}", x0.len(), model.n_x())));
    }
    if grid.n_u() != model.n_u() || grid.values.iter().any(|v| v.len() != model.n_u()) {
        return Err(Error::Dimension("control grid width does not match the model".into()));
    }
    if model.n_z() != 1 {
        return Err(Error::Config("only scalar switching surfaces are supported".into()));
    }
    if opts.steps == 0 || grid.n_intervals() == 0 || !(grid.tf > grid.t0) {
        return Err(Error::Config("empty horizon, mesh or control grid".into()));
    }
    let ctx = StepContext { model, tab, opts };
    let big_h = (grid.tf - grid.t0) / opts.steps as f64;
    let bps = breakpoints(grid, opts.steps, opts.min_fraction);

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut transitions: Vec<TransitionRecord> = Vec::new();
    let mut t = grid.t0;
    let mut x = x0.clone();
    let mut phase = initial_phase(model, &x, &grid.values[0], opts.surface_tol);
    let mut z = if phase.is_sliding() {
        consistent_z(model, &x, &grid.values[0])?
    } else {
        Vector::zeros(0)
    };
    let mut bp = 1;
    let mut split: Option<f64> = None;

    let push = |steps: &mut Vec<StepRecord>, t: f64, h: f64, phase: PhaseLabel, n: usize, x: &Vector, z: &Vector, sol: &StageSolution| {
        steps.push(StepRecord {
            k: steps.len(),
            t,
            h,
            phase,
            n,
            x: x.clone(),
            z: z.clone(),
            xs: sol.xs.clone(),
            zs: sol.zs.clone(),
            x_next: sol.x_next.clone(),
            z_next: sol.z_next.clone(),
        });
    };

    while bp < bps.len() {
        if steps.len() >= opts.max_steps {
            return Err(Error::Divergence(format!("step limit {} reached at t = {t}", opts.max_steps)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite state at t = {t}")));
        }
        let (t_target, fixed) = bps[bp];
        let n = control_interval(grid, t);
        let u = &grid.values[n];
        let h_full = t_target - t;
        let h = split.map_or(h_full, |s| s.min(h_full));
        let sol = match ctx.take(phase, t, &x, &z, u, h) {
            Ok(sol) => sol,
            Err(Error::NewtonFailure { .. }) if 0.5 * h >= opts.min_fraction * big_h => {
                split = Some(0.5 * h);
                continue;
            }
            Err(e) => return Err(e),
        };
        let interp = ctx.interpolant(phase, &x, &z, &sol, u, h);
        let crossing = locate_switch(model, phase, &interp, u, opts.event_samples, opts.surface_tol, opts.root_tol)?;

        let Some(Crossing { event, tau }) = crossing else {
            push(&mut steps, t, h, phase, n, &x, &z, &sol);
            x = sol.x_next;
            z = sol.z_next;
            if h == h_full {
                t = t_target;
                bp += 1;
                split = None;
                if fixed && bp < bps.len() && phase.is_sliding() {
                    let u_next = &grid.values[control_interval(grid, t)];
                    let [r1, r2] = model.slide_residuals(&x, u_next);
                    if r1 <= 0.0 || r2 <= 0.0 {
                        let post = if r1 <= 0.0 { PhaseLabel::OdeRegion1 } else { PhaseLabel::OdeRegion2 };
                        transitions.push(TransitionRecord {
                            k_t: steps.len(),
                            t_t: t,
                            kind: TransitionKind::LeaveSliding,
                            pre: phase,
                            post,
                            event: None,
                        });
                        phase = post;
                        z = Vector::zeros(0);
                    }
                }
            } else {
                t += h;
            }
            continue;
        };

        let mut h1 = tau * h;
        if h1 > 1e-9 * big_h {
            let mut sol1 = ctx.take(phase, t, &x, &z, u, h1)?;
            if opts.polish {
                (h1, sol1) = ctx.polish(phase, t, &x, &z, u, event, h1, sol1)?;
            }
            let lands_on_target = h1 >= h_full;
            if lands_on_target {
                h1 = h_full;
                sol1 = ctx.take(phase, t, &x, &z, u, h1)?;
            }
            push(&mut steps, t, h1, phase, n, &x, &z, &sol1);
            x = sol1.x_next;
            if lands_on_target {
                t = t_target;
                bp += 1;
            } else {
                t += h1;
            }
            split = None;
        }
        let (post, kind) = post_phase(model, phase, event, &x, u);
        let stalled = transitions.iter().rev().take_while(|tr| tr.t_t == t).count();
        if stalled >= 3 {
            return Err(Error::Divergence(format!("repeated transitions without progress at t = {t}")));
        }
        transitions.push(TransitionRecord {
            k_t: steps.len(),
            t_t: t,
            kind,
            pre: phase,
            post,
            event: Some(event),
        });
        phase = post;
        z = if phase.is_sliding() {
            consistent_z(model, &x, u)?
        } else {
            Vector::zeros(0)
        };
        if bp < bps.len() {
            let (next, next_fixed) = bps[bp];
            if !next_fixed && next - t < opts.min_fraction * big_h {
                bp += 1;
            }
        }
    }

    let z_final = phase.is_sliding().then(|| z.clone());
    Ok(TrajectoryRecord {
        steps,
        transitions,
        x_final: x,
        z_final,
        phase_final: phase,
        grid: grid.clone(),
        base_step: big_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Field, Matrix};
    use crate::tableau::radau_iia;

    /// `x' = −x + u` in region 1, `x' = −x + u − 2` in region 2, surface
    /// `x − c`. With `u = 2`, region 1 is attracted towards `x = 2`, region 2
    /// towards 0, so the trajectory from 0 slides on `x = c` for `0 < c < 2`.
    struct Relay {
        c: f64,
    }

    impl HybridModel for Relay {
        fn name(&self) -> &str {
            "relay"
        }
        fn n_x(&self) -> usize {
            1
        }
        fn n_u(&self) -> usize {
            1
        }
        fn field(&self, which: Field, x: &Vector, u: &Vector) -> Vector {
            let shift = match which {
                Field::Region1 => 0.0,
                Field::Region2 => -2.0,
                Field::Filippov => -1.0,
            };
            Vector::from_element(1, -x[0] + u[0] + shift)
        }
        fn field_x(&self, _: Field, _: &Vector, _: &Vector) -> Matrix {
            Matrix::from_element(1, 1, -1.0)
        }
        fn field_u(&self, _: Field, _: &Vector, _: &Vector) -> Matrix {
            Matrix::from_element(1, 1, 1.0)
        }
        fn surface(&self, x: &Vector) -> Vector {
            Vector::from_element(1, x[0] - self.c)
        }
        fn surface_x(&self, _: &Vector) -> Matrix {
            Matrix::from_element(1, 1, 1.0)
        }
        fn surface_curvature(&self, _: &Vector, _: &Vector) -> Matrix {
            Matrix::zeros(1, 1)
        }
    }

    fn grid(n: usize, u: f64) -> ControlGrid {
        let b = Vector::from_element(1, 10.0);
        ControlGrid::constant(0.0, 2.0, n, Vector::from_element(1, u), -b.clone(), b)
    }

    #[test]
    fn no_surface_interaction_gives_no_transitions() {
        let tab = radau_iia(3).unwrap();
        let traj = integrate(&Relay { c: 5.0 }, &tab, &grid(4, 1.0), &Vector::zeros(1), &IntegratorOptions { steps: 20, ..Default::default() }).unwrap();
        assert!(traj.transitions.is_empty());
        let exact = 1.0 - (-2.0f64).exp();
        assert!((traj.x_final[0] - exact).abs() < 1e-9);
    }

    #[test]
    fn relay_enters_sliding_at_analytic_time() {
        let tab = radau_iia(3).unwrap();
        let c = 1.0;
        let traj = integrate(&Relay { c }, &tab, &grid(4, 2.0), &Vector::zeros(1), &IntegratorOptions { steps: 40, ..Default::default() }).unwrap();
        assert_eq!(traj.transitions.len(), 1);
        let tr = &traj.transitions[0];
        assert_eq!(tr.kind, TransitionKind::EnterSliding);
        // x = 2(1 − e^{−t}) reaches 1 at t = ln 2
        assert!((tr.t_t - 2f64.ln()).abs() < 1e-10, "t_t = {}", tr.t_t);
        assert_eq!(traj.phase_final, PhaseLabel::Sliding);
        for s in traj.steps.iter().filter(|s| s.phase.is_sliding()) {
            assert!((s.x[0] - c).abs() < 1e-12);
            assert!(s.xs.iter().all(|xi| (xi[0] - c).abs() < 1e-12));
        }
        // the equivalent control cancels the base field: z = c + 1 − u
        assert!((traj.z_final.as_ref().unwrap()[0] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn steps_do_not_straddle_control_boundaries() {
        let tab = radau_iia(3).unwrap();
        let g = grid(3, 2.0);
        let traj = integrate(&Relay { c: 1.0 }, &tab, &g, &Vector::zeros(1), &IntegratorOptions { steps: 10, ..Default::default() }).unwrap();
        for s in &traj.steps {
            let a = g.boundary(s.n);
            let b = g.boundary(s.n + 1);
            assert!(s.t >= a - 1e-14 && s.t + s.h <= b + 1e-14);
            assert!(s.h >= 1e-9 * traj.base_step);
        }
        let ts = traj.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*ts.last().unwrap(), 2.0);
    }

    #[test]
    fn control_switch_leaves_sliding_at_fixed_time() {
        let tab = radau_iia(3).unwrap();
        let mut g = grid(2, 2.0);
        // u = 3.5 makes region 2's field point up at x = 1: r2 = −(−1 + 3.5 − 2) < 0
        g.values[1] = Vector::from_element(1, 3.5);
        let traj = integrate(&Relay { c: 1.0 }, &tab, &g, &Vector::zeros(1), &IntegratorOptions { steps: 20, ..Default::default() }).unwrap();
        let kinds: Vec<_> = traj.transitions.iter().map(|t| (t.kind, t.event)).collect();
        assert_eq!(
            kinds,
            vec![
                (TransitionKind::EnterSliding, Some(EventKind::Surface)),
                (TransitionKind::LeaveSliding, None)
            ]
        );
        assert_eq!(traj.transitions[1].t_t, 1.0);
        assert_eq!(traj.phase_final, PhaseLabel::OdeRegion2);
    }

    #[test]
    fn deterministic_records() {
        let tab = radau_iia(3).unwrap();
        let opts = IntegratorOptions { steps: 30, ..Default::default() };
        let a = integrate(&Relay { c: 1.0 }, &tab, &grid(4, 2.0), &Vector::zeros(1), &opts).unwrap();
        let b = integrate(&Relay { c: 1.0 }, &tab, &grid(4, 2.0), &Vector::zeros(1), &opts).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("t,phase,x0,z0,u0\n"));
        assert!(text.contains(",sliding,"));
    }
}
