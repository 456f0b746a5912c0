//! Direction-finding QP of the SQP method.

use crate::error::{Error, Result};
use crate::model::{Matrix, Vector};

/// `min ½dᵀHd + gᵀd` subject to `c_E + J_E d = 0`, `c_I + J_I d ≤ 0` and
/// `lower ≤ d ≤ upper`.
#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: Matrix,
    pub g: Vector,
    pub j_eq: Matrix,
    pub c_eq: Vector,
    pub j_in: Matrix,
    pub c_in: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub d: Vector,
    /// `½dᵀHd + gᵀd` at the solution, without any elastic penalty.
    pub value: f64,
    /// Multipliers with `g + Hd + J_Eᵀμ + J_Iᵀλ + (box terms) = 0`, `λ ≥ 0`.
    pub mult_eq: Vector,
    pub mult_in: Vector,
    /// `Σ|c_E + J_E d| + Σ max(0, c_I + J_I d)`, zero unless elastic.
    pub violation: f64,
    /// The ℓ1 (elastic) problem was solved.
    pub elastic: bool,
}

/// Weight on the elastic variables relative to the gradient scale.
pub const ELASTIC_WEIGHT: f64 = 1e4;

/// Default ℓ1 weight for a problem, `ELASTIC_WEIGHT·(1 + ‖g‖∞)`.
pub fn elastic_weight(p: &QpProblem) -> f64 {
    ELASTIC_WEIGHT * (1.0 + p.g.amax())
}

/// Solves the QP, falling back to the ℓ1 problem with the default weight
/// when the linearization is infeasible.
pub fn qp_step(p: &QpProblem) -> Result<QpSolution> {
    match plain_qp(p)? {
        Some(sol) => Ok(sol),
        None => l1_qp(p, elastic_weight(p)),
    }
}

/// The QP with hard linearized constraints; `None` if they are infeasible.
pub fn plain_qp(p: &QpProblem) -> Result<Option<QpSolution>> {
    check(p)?;
    match solve_plain(p, p.g.len()) {
        Ok(sol) => Ok(Some(sol)),
        Err(quadprog::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::Qp(e.to_string())),
    }
}

/// `min ½dᵀHd + gᵀd + w (Σ|c_E + J_E d| + Σ max(0, c_I + J_I d))` over the
/// box. The multipliers are bounded by `w` in magnitude.
pub fn l1_qp(p: &QpProblem, weight: f64) -> Result<QpSolution> {
    check(p)?;
    if !(weight > 0.0) {
        return Err(Error::Precondition(format!("ℓ1 weight must be positive, got {weight}")));
    }
    solve_elastic(p, p.g.len(), weight)
}

fn check(p: &QpProblem) -> Result<()> {
    let n = p.g.len();
    let ok = p.h.shape() == (n, n)
        && p.j_eq.shape() == (p.c_eq.len(), n)
        && p.j_in.shape() == (p.c_in.len(), n)
        && p.lower.len() == n
        && p.upper.len() == n;
    if !ok {
        return Err(Error::Dimension("inconsistent QP data".into()));
    }
    if p.lower.iter().zip(p.upper.iter()).any(|(lo, hi)| lo > hi) {
        return Err(Error::Qp("empty box".into()));
    }
    Ok(())
}

/// Row-major constraint data for `quadprog`: equalities first, then
/// inequalities of the form `a x ≤ b`.
struct Rows {
    a: Vec<f64>,
    b: Vec<f64>,
    meq: usize,
}

impl Rows {
    fn push(&mut self, row: impl IntoIterator<Item = f64>, b: f64) {
        self.a.extend(row);
        self.b.push(b);
    }
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Objective scale: the dual method is run on `(H, g)/scale` so that the
/// Hessian diagonal is at most one, and the multipliers are scaled back.
fn objective_scale(h: &Matrix) -> f64 {
    h.diagonal().amax().max(1.0)
}

/// Equality multipliers from stationarity on the coordinates strictly
/// inside the box, `J_E,Fᵀ μ = −(g + Hd + J_Iᵀλ)_F`. `quadprog` reports
/// equality multipliers without their sign. Nearly dependent constraint
/// gradients get the minimum-norm solution.
fn equality_multipliers(p: &QpProblem, d: &Vector, mult_in: &Vector) -> Vector {
    let me = p.c_eq.len();
    if me == 0 {
        return Vector::zeros(0);
    }
    let r = &p.g + &p.h * d + p.j_in.transpose() * mult_in;
    let inside = |i: usize| {
        let tol = 1e-9 * (1.0 + p.lower[i].abs().max(p.upper[i].abs()));
        d[i] > p.lower[i] + tol && d[i] < p.upper[i] - tol
    };
    let free: Vec<usize> = (0..d.len()).filter(|&i| inside(i)).collect();
    if free.is_empty() {
        return Vector::zeros(me);
    }
    let a = Matrix::from_fn(free.len(), me, |k, j| p.j_eq[(j, free[k])]);
    let b = Vector::from_iterator(free.len(), free.iter().map(|&i| -r[i]));
    let svd = a.svd(true, true);
    let cut = 1e-7 * svd.singular_values.amax();
    svd.solve(&b, cut).unwrap_or_else(|_| Vector::zeros(me))
}

fn solve_plain(p: &QpProblem, n: usize) -> std::result::Result<QpSolution, quadprog::Error> {
    let (me, mi) = (p.c_eq.len(), p.c_in.len());
    let mut rows = Rows { a: Vec::new(), b: Vec::new(), meq: me };
    for i in 0..me {
        rows.push(p.j_eq.row(i).iter().copied(), -p.c_eq[i]);
    }
    for i in 0..mi {
        rows.push(p.j_in.row(i).iter().copied(), -p.c_in[i]);
    }
    push_box(&mut rows, n, n, &p.lower, &p.upper);
    let scale = objective_scale(&p.h);
    let mut q = row_major(&(&p.h / scale));
    let g: Vec<f64> = p.g.iter().map(|v| v / scale).collect();
    let sol = quadprog::solve_qp(&mut q, &g, &rows.a, &rows.b, rows.meq, false)?;
    let d = Vector::from_vec(sol.sol);
    let mult_in = Vector::from_iterator(mi, sol.lagr[me..me + mi].iter().map(|v| v * scale));
    Ok(QpSolution {
        value: 0.5 * d.dot(&(&p.h * &d)) + p.g.dot(&d),
        mult_eq: equality_multipliers(p, &d, &mult_in),
        mult_in,
        d,
        violation: 0.0,
        elastic: false,
    })
}

fn push_box(rows: &mut Rows, width: usize, n: usize, lower: &Vector, upper: &Vector) {
    for j in 0..n {
        rows.push((0..width).map(|k| if k == j { 1.0 } else { 0.0 }), upper[j]);
        rows.push((0..width).map(|k| if k == j { -1.0 } else { 0.0 }), -lower[j]);
    }
}

/// Elastic relaxation: every equality gets a pair of nonnegative slacks and
/// every inequality one, penalized linearly (plus a tiny quadratic term so
/// that the Hessian stays positive definite).
fn solve_elastic(p: &QpProblem, n: usize, rho: f64) -> Result<QpSolution> {
    let (me, mi) = (p.c_eq.len(), p.c_in.len());
    let ns = 2 * me + mi;
    let w = n + ns;
    let mut q = Matrix::zeros(w, w);
    q.view_mut((0, 0), (n, n)).copy_from(&p.h);
    let reg = 1e-8 * (1.0 + p.h.diagonal().amax());
    for k in n..w {
        q[(k, k)] = reg;
    }
    let mut c = vec![0.0; w];
    c[..n].copy_from_slice(p.g.as_slice());
    c[n..].iter_mut().for_each(|v| *v = rho);

    let mut rows = Rows { a: Vec::new(), b: Vec::new(), meq: me };
    for i in 0..me {
        let mut r: Vec<f64> = p.j_eq.row(i).iter().copied().collect();
        r.resize(w, 0.0);
        r[n + 2 * i] = -1.0;
        r[n + 2 * i + 1] = 1.0;
        rows.push(r, -p.c_eq[i]);
    }
    for i in 0..mi {
        let mut r: Vec<f64> = p.j_in.row(i).iter().copied().collect();
        r.resize(w, 0.0);
        r[n + 2 * me + i] = -1.0;
        rows.push(r, -p.c_in[i]);
    }
    push_box(&mut rows, w, n, &p.lower, &p.upper);
    for k in n..w {
        rows.push((0..w).map(|j| if j == k { -1.0 } else { 0.0 }), 0.0);
    }
    let scale = objective_scale(&q);
    let mut qm = row_major(&(q / scale));
    let c: Vec<f64> = c.iter().map(|v| v / scale).collect();
    let sol = quadprog::solve_qp(&mut qm, &c, &rows.a, &rows.b, rows.meq, false).map_err(|e| Error::Qp(format!("elastic QP: {e}")))?;
    let d = Vector::from_column_slice(&sol.sol[..n]);
    let eq = &p.c_eq + &p.j_eq * &d;
    let ineq = &p.c_in + &p.j_in * &d;
    let mult_in = Vector::from_iterator(mi, sol.lagr[me..me + mi].iter().map(|v| v * scale));
    Ok(QpSolution {
        value: 0.5 * d.dot(&(&p.h * &d)) + p.g.dot(&d),
        mult_eq: equality_multipliers(p, &d, &mult_in),
        mult_in,
        violation: eq.abs().sum() + ineq.iter().map(|v| v.max(0.0)).sum::<f64>(),
        d,
        elastic: true,
    })
}
