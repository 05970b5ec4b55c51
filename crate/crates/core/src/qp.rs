//! Dense convex quadratic programming by a primal active-set method.
//!
//! Solves `min 1/2 x'Hx + c'x  s.t.  Ex = e, Gx <= g` for symmetric positive semidefinite
//! `H`. The working set is kept linearly independent; steps are taken in the null space of
//! the working constraints. Where the reduced Hessian is singular and the gradient has a
//! component along its kernel, the step follows that component until a constraint blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{PhError, Result};

/// Default KKT tolerance.
pub const DEFAULT_TOL_KKT: f64 = 1e-10;
/// Default iteration cap for one solve.
pub const DEFAULT_MAX_ITER: usize = 2000;

/// Smallest squared pivot ratio for which the Cholesky step is trusted.
const CHOLESKY_PIVOT_RATIO: f64 = 1e-6;

/// Full Newton steps allowed on one working set; the second only refines rounding error.
const NEWTON_REFINEMENTS: usize = 2;

/// Slack allowed on a warm-start point before phase 1 is rerun.
const WARM_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSpec {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    pub tol_kkt: f64,
    pub max_iter: usize,
}

impl QpSpec {
    /// Unconstrained problem; `H` is symmetrized.
    pub fn new(h: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        let h = if h.nrows() == h.ncols() {
            (&h + h.transpose()) * 0.5
        } else {
            h
        };
        Self {
            h,
            c,
            e_mat: DMatrix::zeros(0, n),
            e_vec: DVector::zeros(0),
            g_mat: DMatrix::zeros(0, n),
            g_vec: DVector::zeros(0),
            tol_kkt: DEFAULT_TOL_KKT,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_eq(mut self, e_mat: DMatrix<f64>, e_vec: DVector<f64>) -> Self {
        self.e_mat = e_mat;
        self.e_vec = e_vec;
        self
    }

    pub fn with_ineq(mut self, g_mat: DMatrix<f64>, g_vec: DVector<f64>) -> Self {
        self.g_mat = g_mat;
        self.g_vec = g_vec;
        self
    }

    pub fn with_tol(mut self, tol_kkt: f64) -> Self {
        self.tol_kkt = tol_kkt;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.c.len();
        let bad = |what: &str| Err(PhError::DimensionMismatch(what.to_string()));
        if self.h.shape() != (n, n) {
            return bad("H must be n x n");
        }
        if self.e_mat.ncols() != n || self.e_mat.nrows() != self.e_vec.len() {
            return bad("equality block has inconsistent shape");
        }
        if self.g_mat.ncols() != n || self.g_mat.nrows() != self.g_vec.len() {
            return bad("inequality block has inconsistent shape");
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// Largest violation of any constraint at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.e_mat * x - &self.e_vec).amax();
        let ineq = (&self.g_mat * x - &self.g_vec)
            .iter()
            .fold(0.0f64, |a, &v| a.max(v));
        if self.e_vec.is_empty() {
            ineq
        } else {
            eq.max(ineq)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Infinity-norm KKT residuals. `dual` is scaled by `max(1, |H|, |c|)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_eq
            .max(self.primal_ineq)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Multipliers with `y >= 0`, `y'G + z'E = 0` and `y'g + z'e < 0`: no `x` satisfies both
/// constraint families.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub y_ineq: DVector<f64>,
    pub z_eq: DVector<f64>,
}

impl InfeasibilityCertificate {
    /// `(|y'G + z'E|_inf, y'g + z'e)`; a valid certificate has a tiny first and negative second entry.
    pub fn check(
        &self,
        e_mat: &DMatrix<f64>,
        e_vec: &DVector<f64>,
        g_mat: &DMatrix<f64>,
        g_vec: &DVector<f64>,
    ) -> (f64, f64) {
        let comb = g_mat.tr_mul(&self.y_ineq) + e_mat.tr_mul(&self.z_eq);
        (comb.amax(), self.y_ineq.dot(g_vec) + self.z_eq.dot(e_vec))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// Inequality indices in the final working set, ascending.
    pub active: Vec<usize>,
    pub certificate: Option<InfeasibilityCertificate>,
}

/// Starting point and working-set hint for a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub active: Vec<usize>,
}

impl QpSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            active: self.active.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    Infeasible(InfeasibilityCertificate),
}

pub fn solve_qp(spec: &QpSpec) -> Result<QpSolution> {
    solve_qp_warm(spec, None)
}

/// Solves from `warm` when it is feasible, otherwise from a phase-1 point.
pub fn solve_qp_warm(spec: &QpSpec, warm: Option<&WarmStart>) -> Result<QpSolution> {
    spec.check()?;
    let n = spec.n_vars();
    let eq_rows = independent_rows(&spec.e_mat, 1e-10);

    let usable = warm.filter(|w| {
        w.x.len() == n && spec.max_violation(&w.x) <= WARM_FEAS_TOL * (1.0 + w.x.amax())
    });
    let (x0, hint) = match usable {
        Some(w) => (w.x.clone(), w.active.clone()),
        None => {
            match feasible_point_impl(&spec.e_mat, &spec.e_vec, &spec.g_mat, &spec.g_vec, &eq_rows)
            {
                Feasibility::Feasible(x) => (x, Vec::new()),
                Feasibility::Infeasible(cert) => {
                    return Ok(QpSolution {
                        objective: f64::NAN,
                        x: DVector::zeros(n),
                        eq_multipliers: DVector::zeros(spec.e_vec.len()),
                        ineq_multipliers: DVector::zeros(spec.g_vec.len()),
                        status: QpStatus::Infeasible,
                        kkt: KktResiduals::default(),
                        iterations: 0,
                        active: Vec::new(),
                        certificate: Some(cert),
                    });
                }
            }
        }
    };

    let prob = Problem {
        h: &spec.h,
        c: &spec.c,
        e_mat: &spec.e_mat,
        eq_rows: &eq_rows,
        g_mat: &spec.g_mat,
        g_vec: &spec.g_vec,
    };
    let run = prob.active_set(x0, &hint, spec.max_iter);

    let (eq_mult, ineq_mult) = prob.expand_multipliers(&run);
    let kkt = kkt_residuals(spec, &run.x, &eq_mult, &ineq_mult);
    Ok(QpSolution {
        objective: spec.objective(&run.x),
        x: run.x,
        eq_multipliers: eq_mult,
        ineq_multipliers: ineq_mult,
        status: run.status,
        kkt,
        iterations: run.iterations,
        active: run.working,
        certificate: None,
    })
}

/// A point with `Ex = e`, `Gx <= g` (to `1e-10`), or a certificate that none exists.
pub fn feasible_point(
    e_mat: &DMatrix<f64>,
    e_vec: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
) -> Result<Feasibility> {
    let n = e_mat.ncols().max(g_mat.ncols());
    if e_mat.ncols() != n
        || g_mat.ncols() != n
        || e_mat.nrows() != e_vec.len()
        || g_mat.nrows() != g_vec.len()
    {
        return Err(PhError::DimensionMismatch(
            "constraint blocks disagree".into(),
        ));
    }
    let eq_rows = independent_rows(e_mat, 1e-10);
    Ok(feasible_point_impl(e_mat, e_vec, g_mat, g_vec, &eq_rows))
}

fn feasible_point_impl(
    e_mat: &DMatrix<f64>,
    e_vec: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    eq_rows: &[usize],
) -> Feasibility {
    let n = e_mat.ncols();
    let x0 = if e_vec.is_empty() {
        DVector::zeros(n)
    } else {
        let svd = e_mat.clone().svd(true, true);
        let x = svd
            .solve(e_vec, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(n));
        let r = e_vec - e_mat * &x;
        if r.amax() > 1e-10 * (1.0 + e_vec.amax()) {
            // the residual of the least-squares fit is orthogonal to range(E)
            return Feasibility::Infeasible(InfeasibilityCertificate {
                y_ineq: DVector::zeros(g_vec.len()),
                z_eq: -r,
            });
        }
        x
    };
    let viol = (g_mat * &x0 - g_vec).iter().fold(0.0f64, |a, &v| a.max(v));
    if viol <= 0.0 {
        return Feasibility::Feasible(x0);
    }

    // min t  s.t.  Ex = e, Gx - t <= g, -t <= 0
    let mi = g_vec.len();
    let h = DMatrix::zeros(n + 1, n + 1);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let mut e_aug = DMatrix::zeros(e_mat.nrows(), n + 1);
    e_aug.view_mut((0, 0), (e_mat.nrows(), n)).copy_from(e_mat);
    let mut g_aug = DMatrix::zeros(mi + 1, n + 1);
    g_aug.view_mut((0, 0), (mi, n)).copy_from(g_mat);
    for i in 0..mi {
        g_aug[(i, n)] = -1.0;
    }
    g_aug[(mi, n)] = -1.0;
    let mut g_aug_vec = DVector::zeros(mi + 1);
    g_aug_vec.rows_mut(0, mi).copy_from(g_vec);

    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&x0);
    start[n] = viol;
    let prob = Problem {
        h: &h,
        c: &c,
        e_mat: &e_aug,
        eq_rows,
        g_mat: &g_aug,
        g_vec: &g_aug_vec,
    };
    let run = prob.active_set(start, &[], 50 * (n + mi + 2));
    let t = run.x[n];
    let x = run.x.rows(0, n).into_owned();
    let feas_tol = 1e-10 * (1.0 + g_vec.amax());
    if t <= feas_tol || (g_mat * &x - g_vec).iter().all(|&v| v <= feas_tol) {
        return Feasibility::Feasible(x);
    }
    let (z, y) = prob.expand_multipliers(&run);
    Feasibility::Infeasible(InfeasibilityCertificate {
        y_ineq: y.rows(0, mi).map(|v| v.max(0.0)),
        z_eq: z,
    })
}

/// Greedy selection of linearly independent rows (modified Gram-Schmidt).
fn independent_rows(m: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..m.nrows() {
        let row = m.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.clone();
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let vn = v.norm();
        if vn > tol * norm {
            basis.push(v / vn);
            keep.push(i);
        }
    }
    keep
}

struct Problem<'a> {
    h: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    e_mat: &'a DMatrix<f64>,
    eq_rows: &'a [usize],
    g_mat: &'a DMatrix<f64>,
    g_vec: &'a DVector<f64>,
}

struct Run {
    x: DVector<f64>,
    working: Vec<usize>,
    /// Multipliers for `eq_rows` followed by `working`.
    y: DVector<f64>,
    status: QpStatus,
    iterations: usize,
}

enum Step {
    Newton(DVector<f64>),
    Flat(DVector<f64>),
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn working_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let m = self.eq_rows.len() + working.len();
        let mut a = DMatrix::zeros(m, n);
        for (k, &i) in self.eq_rows.iter().enumerate() {
            a.set_row(k, &self.e_mat.row(i));
        }
        for (k, &i) in working.iter().enumerate() {
            a.set_row(self.eq_rows.len() + k, &self.g_mat.row(i));
        }
        a
    }

    /// Keeps hinted constraints that are active at `x` and independent of those already kept.
    fn initial_working(&self, x: &DVector<f64>, hint: &[usize]) -> Vec<usize> {
        let mut cand: Vec<usize> = hint
            .iter()
            .copied()
            .filter(|&i| i < self.g_vec.len())
            .filter(|&i| {
                let slack = self.g_vec[i] - self.g_mat.row(i).dot(&x.transpose());
                slack.abs() <= 1e-9 * (1.0 + self.g_vec[i].abs())
            })
            .collect();
        cand.sort_unstable();
        cand.dedup();
        let mut working = Vec::new();
        for i in cand {
            let mut trial = working.clone();
            trial.push(i);
            let a = self.working_matrix(&trial);
            if independent_rows(&a, 1e-8).len() == a.nrows() && a.nrows() <= self.n() {
                working = trial;
            }
        }
        working
    }

    fn active_set(&self, mut x: DVector<f64>, hint: &[usize], max_iter: usize) -> Run {
        let n = self.n();
        let mut working = self.initial_working(&x, hint);
        let h_norm = self.h.amax();
        // full Newton steps taken since the working set last changed
        let mut settled = 0;
        for iter in 0..max_iter {
            let a = self.working_matrix(&working);
            let m = a.nrows();
            let mut padded = DMatrix::zeros(n, n);
            padded.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
            let qr = padded.qr();
            let q = qr.q();
            let grad = self.h * &x + self.c;
            let scale = 1.0_f64.max(h_norm * x.amax() + self.c.amax());

            let step = if m < n && settled < NEWTON_REFINEMENTS {
                let z = q.columns(m, n - m).into_owned();
                let hz = z.transpose() * self.h * &z;
                let hz = (&hz + hz.transpose()) * 0.5;
                let gz = z.tr_mul(&grad);
                if let Some(p) = well_conditioned_newton(&hz, &gz) {
                    let p = &z * p;
                    if p.norm() > 1e-12 * (1.0 + x.norm()) {
                        Some(Step::Newton(p))
                    } else {
                        None
                    }
                } else {
                    let eig = SymmetricEigen::new(hz);
                    let lmax = eig.eigenvalues.amax();
                    let tau = 1e-10 * lmax.max(1.0);
                    let mut flat = DVector::zeros(n - m);
                    let mut newton = DVector::zeros(n - m);
                    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                        let v = eig.eigenvectors.column(k);
                        let d = v.dot(&gz);
                        if lam > tau {
                            newton -= v * (d / lam);
                        } else if d.abs() > 1e-11 * scale {
                            flat -= v * d;
                        }
                    }
                    if flat.amax() > 0.0 {
                        Some(Step::Flat(&z * flat))
                    } else {
                        let p = &z * newton;
                        (p.norm() > 1e-12 * (1.0 + x.norm())).then_some(Step::Newton(p))
                    }
                }
            } else {
                None
            };

            match step {
                None => {
                    let y = if m == 0 {
                        DVector::zeros(0)
                    } else {
                        let r = qr.r().view((0, 0), (m, m)).into_owned();
                        let rhs = -q.columns(0, m).tr_mul(&grad);
                        r.solve_upper_triangular(&rhs)
                            .unwrap_or_else(|| DVector::zeros(m))
                    };
                    let ne = self.eq_rows.len();
                    let mut drop: Option<(usize, f64)> = None;
                    for k in 0..working.len() {
                        let mu = y[ne + k];
                        if mu < -1e-12 * scale && drop.is_none_or(|(_, best)| mu < best) {
                            drop = Some((k, mu));
                        }
                    }
                    match drop {
                        Some((k, _)) => {
                            working.remove(k);
                            settled = 0;
                        }
                        None => {
                            return Run {
                                x,
                                working,
                                y,
                                status: QpStatus::Optimal,
                                iterations: iter,
                            };
                        }
                    }
                }
                Some(step) => {
                    let (p, mut t_best) = match &step {
                        Step::Newton(p) => (p, 1.0),
                        Step::Flat(p) => (p, f64::INFINITY),
                    };
                    let p_norm = p.norm();
                    let mut blocking = None;
                    for i in 0..self.g_vec.len() {
                        if working.binary_search(&i).is_ok() {
                            continue;
                        }
                        let row = self.g_mat.row(i);
                        let ap = row.dot(&p.transpose());
                        if ap <= 1e-14 * row.norm() * p_norm {
                            continue;
                        }
                        let slack = self.g_vec[i] - row.dot(&x.transpose());
                        let t = (slack / ap).max(0.0);
                        if t < t_best {
                            t_best = t;
                            blocking = Some(i);
                        }
                    }
                    if !t_best.is_finite() {
                        return Run {
                            x,
                            working,
                            y: DVector::zeros(m),
                            status: QpStatus::Unbounded,
                            iterations: iter,
                        };
                    }
                    x += p * t_best;
                    if let Some(i) = blocking {
                        let pos = working.partition_point(|&w| w < i);
                        working.insert(pos, i);
                        settled = 0;
                    } else if matches!(step, Step::Newton(_)) {
                        settled += 1;
                    }
                }
            }
        }
        let m = self.eq_rows.len() + working.len();
        Run {
            x,
            working,
            y: DVector::zeros(m),
            status: QpStatus::IterLimit,
            iterations: max_iter,
        }
    }

    fn expand_multipliers(&self, run: &Run) -> (DVector<f64>, DVector<f64>) {
        let mut eq = DVector::zeros(self.e_mat.nrows());
        let mut ineq = DVector::zeros(self.g_vec.len());
        if run.y.len() == self.eq_rows.len() + run.working.len() {
            for (k, &i) in self.eq_rows.iter().enumerate() {
                eq[i] = run.y[k];
            }
            for (k, &i) in run.working.iter().enumerate() {
                ineq[i] = run.y[self.eq_rows.len() + k];
            }
        }
        (eq, ineq)
    }
}

/// Newton step `-H^{-1} g` by Cholesky when the pivots show `H` is comfortably positive
/// definite; `None` sends the caller to the eigen-decomposition.
fn well_conditioned_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = h.clone().cholesky()?;
    let l = chol.l_dirty();
    let d = l.diagonal();
    let (dmin, dmax) = (d.min(), d.max());
    if !(dmin > 0.0) || dmin * dmin < CHOLESKY_PIVOT_RATIO * dmax * dmax {
        return None;
    }
    Some(-chol.solve(g))
}

fn kkt_residuals(
    spec: &QpSpec,
    x: &DVector<f64>,
    eq_mult: &DVector<f64>,
    ineq_mult: &DVector<f64>,
) -> KktResiduals {
    let primal_eq = if spec.e_vec.is_empty() {
        0.0
    } else {
        (&spec.e_mat * x - &spec.e_vec).amax()
    };
    let slack = &spec.g_vec - &spec.g_mat * x;
    let primal_ineq = slack.iter().fold(0.0f64, |a, &s| a.max(-s));
    let stat = &spec.h * x + &spec.c + spec.e_mat.tr_mul(eq_mult) + spec.g_mat.tr_mul(ineq_mult);
    let dual_scale = 1.0_f64.max(spec.h.amax()).max(spec.c.amax());
    let neg_mult = ineq_mult.iter().fold(0.0f64, |a, &m| a.max(-m));
    let dual = stat.amax().max(neg_mult) / dual_scale;
    let complementarity = ineq_mult
        .iter()
        .zip(slack.iter())
        .map(|(m, s)| (m * s).abs())
        .fold(0.0, f64::max);
    KktResiduals {
        primal_eq,
        primal_ineq,
        dual,
        complementarity,
    }
}
