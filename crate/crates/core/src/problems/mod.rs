//! Shipped problems: the mass–spring and race-car benchmarks, and linear
//! problems with closed-form oracles.

pub mod analytic;
pub mod mass_spring;
pub mod race_car;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ControlGrid, Functional, HybridModel, Vector};

pub use analytic::{CrossingModel, LinearKind, LinearModel, SlidingCircle};
pub use mass_spring::MassSpring;
pub use race_car::RaceCar;

/// Where a numeric value of a problem comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Stated in the problem's published description.
    Published,
    /// Chosen for this repository because the description leaves it open.
    RepoDefault,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub model: Arc<dyn HybridModel>,
    pub x0: Vector,
    /// Control grid holding the initial guess.
    pub grid: ControlGrid,
    pub objective: Functional,
    /// `c(x(t_f)) = 0`.
    pub equalities: Vec<Functional>,
    /// `c(x(t_f)) ≤ 0`.
    pub inequalities: Vec<Functional>,
    /// Default number of base integration steps.
    pub steps: usize,
    pub provenance: Vec<(&'static str, Source)>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("n_intervals", &self.grid.n_intervals())
            .field("steps", &self.steps)
            .finish()
    }
}

impl ProblemSpec {
    /// Every endpoint functional: objective, equalities, inequalities.
    pub fn functionals(&self) -> Vec<&Functional> {
        std::iter::once(&self.objective)
            .chain(&self.equalities)
            .chain(&self.inequalities)
            .collect()
    }

    /// Copy with `n` control intervals, resampling the initial guess.
    pub fn with_intervals(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("at least one control interval is required".into()));
        }
        let mut out = self.clone();
        let old = &self.grid;
        out.grid.values = (0..n)
            .map(|i| {
                let mid = old.t0 + (old.tf - old.t0) * (i as f64 + 0.5) / n as f64;
                let j = (((mid - old.t0) / (old.tf - old.t0)) * old.n_intervals() as f64) as usize;
                old.values[j.min(old.n_intervals() - 1)].clone()
            })
            .collect();
        if out.steps % n != 0 {
            out.steps = n * out.steps.div_ceil(n);
        }
        Ok(out)
    }
}

pub const NAMES: [&str; 4] = ["mass-spring", "race-car", "analytic-linear", "sliding-circle"];

pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "mass-spring" => Ok(mass_spring()),
        "race-car" => Ok(race_car()),
        "analytic-linear" => Ok(analytic_linear()),
        "sliding-circle" => Ok(sliding_circle()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}

pub fn mass_spring() -> ProblemSpec {
    let model = MassSpring::default();
    let n = 100;
    let grid = ControlGrid::constant(0.0, 1.0, n, scalar(0.0), scalar(-2.5), scalar(2.5));
    ProblemSpec {
        name: "mass-spring".into(),
        model: Arc::new(model),
        x0: Vector::from_vec(vec![0.0, 1.0, 0.0]),
        grid,
        objective: Functional::component("x2(tf)", 1, 0.0, 1.0),
        equalities: vec![Functional::component("x1(tf)-0.6", 0, 0.6, 1.0)],
        inequalities: Vec::new(),
        steps: 200,
        provenance: vec![
            ("fields, surface, objective, constraint, bounds, t_f, N", Source::Published),
            ("m = 1, k = 1, F_s/m = 2, delta = 3, v_dr = 0.3, x0 = (0, 1, 0)", Source::RepoDefault),
            ("initial control, K = 200", Source::RepoDefault),
        ],
    }
}

/// Initial guess for the race-car problem: light throttle and a slow
/// left-right steering oscillation.
pub fn race_car_initial_control(n: usize) -> Vec<Vector> {
    (0..n)
        .map(|i| {
            let t = 3.0 * (i as f64 + 0.5) / n as f64;
            Vector::from_vec(vec![0.1, 0.6 * (2.0 * t).cos()])
        })
        .collect()
}

/// Full acceleration with a hard left turn that makes the car drift, then
/// a right turn. The trajectory crosses the surface once, transversally.
pub fn race_car_drift_control(n: usize) -> Vec<Vector> {
    (0..n)
        .map(|i| {
            let t = 3.0 * (i as f64 + 0.5) / n as f64;
            let s = if t < 1.5 { 1.0 } else { -0.5 };
            Vector::from_vec(vec![0.3, s])
        })
        .collect()
}

pub fn race_car() -> ProblemSpec {
    let n = 10;
    let grid = ControlGrid {
        t0: 0.0,
        tf: 3.0,
        values: race_car_initial_control(n),
        lower: Vector::from_vec(vec![-0.3, -1.0]),
        upper: Vector::from_vec(vec![0.3, 1.0]),
    };
    ProblemSpec {
        name: "race-car".into(),
        model: Arc::new(RaceCar::default()),
        x0: Vector::from_vec(vec![0.0, 1.0, 1.0, 0.0, 0.0]),
        grid,
        objective: Functional::component("x1(tf)", 0, 0.0, 1.0),
        equalities: vec![
            Functional::component("x2(tf)", 1, 0.0, 1.0),
            Functional::component("v2(tf)", 3, 0.0, 1.0),
            Functional::component("theta(tf)", 4, 0.0, 1.0),
        ],
        inequalities: vec![Functional::component("-v1(tf)", 2, 0.0, -1.0)],
        steps: 300,
        provenance: vec![
            ("equations of motion, surface, mu N = 0.5, t_f = 3, x(0), v(0), N = 10, bounds", Source::Published),
            ("theta(0) = 0, initial control, K = 300", Source::RepoDefault),
        ],
    }
}

/// Weight and target of the analytic objective `q(t_f) + ½ w ‖x(t_f) − r‖²`.
pub const ANALYTIC_WEIGHT: f64 = 10.0;
pub const ANALYTIC_TARGET: [f64; 2] = [0.0, 0.5];
pub const ANALYTIC_OMEGA: f64 = 6.0;

pub fn analytic_model() -> LinearModel {
    LinearModel {
        kind: LinearKind::Oscillator { omega: ANALYTIC_OMEGA },
        quadrature: true,
    }
}

pub fn analytic_objective() -> Functional {
    let w = ANALYTIC_WEIGHT;
    let r = ANALYTIC_TARGET;
    Functional::new(
        "q(tf)+w/2|x(tf)-r|^2",
        move |x| x[2] + 0.5 * w * ((x[0] - r[0]).powi(2) + (x[1] - r[1]).powi(2)),
        move |x| Vector::from_vec(vec![w * (x[0] - r[0]), w * (x[1] - r[1]), 1.0]),
    )
}

pub fn analytic_linear() -> ProblemSpec {
    let n = 10;
    let grid = ControlGrid::constant(0.0, 1.0, n, scalar(0.0), scalar(-10.0), scalar(10.0));
    ProblemSpec {
        name: "analytic-linear".into(),
        model: Arc::new(analytic_model()),
        x0: Vector::from_vec(vec![1.0, 0.0, 0.0]),
        grid,
        objective: analytic_objective(),
        equalities: Vec::new(),
        inequalities: Vec::new(),
        steps: 100,
        provenance: vec![("all values", Source::RepoDefault)],
    }
}

/// Closed-form endpoint `x(t_f)` of a linear model under piecewise-constant
/// controls (without the quadrature state).
pub fn linear_endpoint(model: &LinearModel, grid: &ControlGrid, x0: &Vector) -> Vector {
    let n = model.n_lin();
    let mut x = model.propagator(grid.tf - grid.t0) * x0.rows(0, n);
    for (i, u) in grid.values.iter().enumerate() {
        x += model.influence(grid.boundary(i), grid.boundary(i + 1), grid.tf) * u[0];
    }
    x
}

/// Exact minimizer of the analytic objective over unbounded controls.
///
/// With `x(t_f) = Φx_0 + G u` the objective is
/// `½ Σ Δτ_n u_n² + ½ w ‖Φx_0 + Gu − r‖²`, minimized by
/// `(diag(Δτ) + w GᵀG) u = w Gᵀ (r − Φx_0)`.
pub fn analytic_minimizer(spec: &ProblemSpec) -> Vector {
    let model = analytic_model();
    let grid = &spec.grid;
    let n = grid.n_intervals();
    let mut g = crate::model::Matrix::zeros(2, n);
    for i in 0..n {
        g.set_column(i, &model.influence(grid.boundary(i), grid.boundary(i + 1), grid.tf));
    }
    let free = model.propagator(grid.tf - grid.t0) * spec.x0.rows(0, 2);
    let r = Vector::from_row_slice(&ANALYTIC_TARGET);
    let mut h = g.transpose() * &g * ANALYTIC_WEIGHT;
    for i in 0..n {
        h[(i, i)] += grid.width(i);
    }
    let rhs = g.transpose() * (r - free) * ANALYTIC_WEIGHT;
    h.lu().solve(&rhs).expect("positive definite")
}

/// Crossing-time problem: the exact switching time is `t_c`.
pub fn crossing(t_c: f64, steps: usize) -> ProblemSpec {
    let grid = ControlGrid::constant(0.0, 1.0, 1, scalar(0.0), scalar(-1.0), scalar(1.0));
    ProblemSpec {
        name: "crossing".into(),
        model: Arc::new(CrossingModel { t_c }),
        x0: scalar(1.0),
        grid,
        objective: Functional::component("x(tf)", 0, 0.0, 1.0),
        equalities: Vec::new(),
        inequalities: Vec::new(),
        steps,
        provenance: vec![("all values", Source::RepoDefault)],
    }
}

/// Trajectory on the unit circle that slides for the whole horizon, with
/// a control that varies from interval to interval.
pub fn sliding_circle() -> ProblemSpec {
    let n = 10;
    let mut grid = ControlGrid::constant(0.0, 1.0, n, scalar(0.0), scalar(-2.0), scalar(2.0));
    for (i, v) in grid.values.iter_mut().enumerate() {
        v[0] = (i as f64 * 0.7).sin();
    }
    ProblemSpec {
        name: "sliding-circle".into(),
        model: Arc::new(SlidingCircle::default()),
        x0: Vector::from_vec(vec![1.0, 0.0]),
        grid,
        objective: Functional::component("x1(tf)", 0, 0.0, 1.0),
        equalities: Vec::new(),
        inequalities: Vec::new(),
        steps: 100,
        provenance: vec![("all values", Source::RepoDefault)],
    }
}

/// The race car under [`race_car_drift_control`], with one region crossing.
pub fn race_car_drift() -> ProblemSpec {
    let mut spec = race_car();
    spec.name = "race-car-drift".into();
    spec.grid.values = race_car_drift_control(spec.grid.n_intervals());
    spec
}

/// Race car that starts in sliding and stays there: constant `a = 0.2`,
/// `s = 0.15`, so that `s (tᵀv)² < μN` over the whole horizon.
pub fn race_car_sliding() -> ProblemSpec {
    let mut spec = race_car();
    spec.name = "race-car-sliding".into();
    for v in &mut spec.grid.values {
        *v = Vector::from_vec(vec![0.2, 0.15]);
    }
    spec
}

/// Mass–spring under zero control: friction slows the mass down to belt
/// speed and it sticks, giving one entry into sliding.
pub fn mass_spring_entry() -> ProblemSpec {
    let mut spec = mass_spring();
    spec.name = "mass-spring-entry".into();
    spec.objective = Functional::component("x1(tf)", 0, 0.0, 1.0);
    spec.equalities.clear();
    let n = 10;
    spec.grid.values = vec![scalar(0.0); n];
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{consistent_z, f2, jacobian_discrepancy, Field};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(by_name("no-such"), Err(Error::UnknownProblem(_))));
        for n in NAMES {
            assert_eq!(by_name(n).unwrap().name, n);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ms = MassSpring::default();
        let rc = RaceCar::default();
        let lin = analytic_model();
        let circle = SlidingCircle::default();
        for _ in 0..100 {
            // keep the relative belt velocity away from the kink of |·|
            let mut v2 = rng.gen_range(-1.0..1.0);
            if (v2 - ms.v_dr).abs() < 1e-3 {
                v2 += 0.01;
            }
            let x = Vector::from_vec(vec![rng.gen_range(-1.0..1.0), v2, rng.gen_range(-1.0..1.0)]);
            let u = scalar(rng.gen_range(-2.5..2.5));
            let z = scalar(rng.gen_range(-1.0..1.0));
            assert!(jacobian_discrepancy(&ms, &x, &z, &u) < 1e-5);

            let x: Vector = Vector::from_fn(5, |_, _| rng.gen_range(-2.0..2.0));
            let u = Vector::from_vec(vec![rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0)]);
            assert!(jacobian_discrepancy(&rc, &x, &z, &u) < 1e-5);

            let x: Vector = Vector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            assert!(jacobian_discrepancy(&circle, &x, &z, &u.rows(0, 1).into_owned()) < 1e-5);

            let x: Vector = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            assert!(jacobian_discrepancy(&lin, &x, &z, &u.rows(0, 1).into_owned()) < 1e-5);
        }
    }

    #[test]
    fn mass_spring_structure() {
        let ms = MassSpring::default();
        let x = Vector::from_vec(vec![0.1, ms.v_dr, 0.3]);
        let u = scalar(1.2);
        assert_eq!(ms.surface(&x)[0], 0.0);
        let d = ms.field(Field::Region1, &x, &u) - ms.field(Field::Region2, &x, &u);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[2], 0.0);
        assert!((d[1] - 2.0 * ms.fs).abs() < 1e-15);
        assert_eq!(ms.field(Field::Region1, &x, &u)[2], 1.2);
        assert_eq!(ms.field(Field::Region2, &x, &u)[2], 1.2);
        // sliding adds z to the velocity row only
        let z = scalar(0.7);
        let diff = f2(&ms, &x, &z, &u) - ms.field(Field::Filippov, &x, &u);
        assert_eq!(diff, Vector::from_vec(vec![0.0, 0.7, 0.0]));
        // g_x = e_2 gives z = −(f_F)_2
        let zc = consistent_z(&ms, &x, &u).unwrap();
        assert!((zc[0] + ms.field(Field::Filippov, &x, &u)[1]).abs() < 1e-15);
    }

    #[test]
    fn mass_spring_stick_condition_is_friction_bound() {
        // sliding admissible iff |x3 − k x1| < F_s (the spring and actuator
        // force can be held by static friction)
        let ms = MassSpring::default();
        for (x1, x3, stick) in [(0.0, 0.2, true), (0.1, 2.5, false), (0.6, -1.0, true), (0.6, -1.5, false)] {
            let x = Vector::from_vec(vec![x1, ms.v_dr, x3]);
            let [r1, r2] = ms.slide_residuals(&x, &scalar(0.0));
            assert_eq!(r1 > 0.0 && r2 > 0.0, stick, "x1 = {x1}, x3 = {x3}");
        }
    }

    #[test]
    fn race_car_structure() {
        let rc = RaceCar::default();
        let x = Vector::from_vec(vec![0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(rc.surface(&x)[0], 0.0);
        let u = Vector::from_vec(vec![0.1, 0.3]);
        let fr = rc.field(Field::Region1, &x, &u) - rc.field(Field::Filippov, &x, &u);
        assert!((fr.rows(2, 2).norm() - 0.5).abs() < 1e-15);
        // residuals match the published inequalities
        let [r1, r2] = rc.slide_residuals(&x, &u);
        let tv2: f64 = 1.0;
        assert!((r1 - (0.5 - 0.3 * tv2)).abs() < 1e-15);
        assert!((r2 - (0.5 + 0.3 * tv2)).abs() < 1e-15);
        // random states on the surface: consistent z keeps the motion tangent
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let th: f64 = rng.gen_range(-3.0..3.0);
            let speed = rng.gen_range(0.2..2.0);
            let x = Vector::from_vec(vec![rng.gen_range(-1.0..1.0), 0.0, speed * th.cos(), speed * th.sin(), th]);
            let z = consistent_z(&rc, &x, &u).unwrap();
            let tangent = rc.surface_x(&x) * f2(&rc, &x, &z, &u);
            assert!(tangent[0].abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_closed_forms() {
        let m = analytic_model();
        let h = 1e-5;
        let d = (m.propagator(0.3 + h) - m.propagator(0.3 - h)) / (2.0 * h);
        assert!((d - m.a() * m.propagator(0.3)).amax() < 1e-8);
        // influence is the integral of e^{A(tf−s)}B
        let n = 2000;
        let mut quad = Vector::zeros(2);
        for i in 0..n {
            let s = 0.2 + 0.3 * (i as f64 + 0.5) / n as f64;
            quad += m.propagator(1.0 - s) * m.b() * (0.3 / n as f64);
        }
        assert!((quad - m.influence(0.2, 0.5, 1.0)).amax() < 1e-7);
        // zero control: x(tf) = e^{A tf} x0
        let spec = analytic_linear();
        let x = linear_endpoint(&m, &spec.grid, &spec.x0);
        assert!((x - m.propagator(1.0) * spec.x0.rows(0, 2)).amax() < 1e-15);
    }
}
