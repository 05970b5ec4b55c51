//! Alternating minimization of `F(A, P) = |PA - JP|_F^2`.
//!
//! With `A` fixed the problem in `P` is a convex QP over `{P 1' = 1', beta P >= 0}`; with
//! `P` fixed the problem in `A` is a convex QP over the subgenerator box
//! `{A 1' <= 0, -xi <= a_ii <= 0, 0 <= a_ij <= xi}`. Each QP is warm-started from the
//! previous iterate, which is feasible for it, so `F` never increases after the first step.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PhError, Result};
use crate::jordan::{JordanBlock, ProblemData, RealJordanForm};
use crate::phgen::{sample_ph_instance, GenSpec, Variant};
use crate::qp::{solve_qp_warm, QpSolution, QpSpec, QpStatus, WarmStart};
use crate::verify::{check_validity, ValidityReport};

/// Entries of `beta P` in `(-ALPHA_CLAMP, 0)` are set to zero.
pub const ALPHA_CLAMP: f64 = 1e-8;

/// Factor applied to `tol_term` while polishing.
pub const POLISH_DEPTH: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// `J + 1'1 - I`
    JordanPlusOnesMinusI,
    Jordan,
    /// `-xi I`
    MinusXiI,
    Custom(DMatrix<f64>),
}

impl InitKind {
    pub fn label(&self) -> &'static str {
        match self {
            InitKind::JordanPlusOnesMinusI => "jordan-plus-ones",
            InitKind::Jordan => "jordan",
            InitKind::MinusXiI => "minus-xi-i",
            InitKind::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmConfig {
    pub init: InitKind,
    pub tol_term: f64,
    pub success_threshold_factor: f64,
    pub max_outer_iter: usize,
    pub qp_tol: f64,
    /// Extra iterations allowed after a successful stop; polishing ends once
    /// `|dF| <= tol_term * POLISH_DEPTH`.
    pub polish_iter: usize,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            init: InitKind::JordanPlusOnesMinusI,
            tol_term: 1e-13,
            success_threshold_factor: 1e-10,
            max_outer_iter: 20000,
            qp_tol: 1e-10,
            polish_iter: 2000,
        }
    }
}

impl AmConfig {
    pub fn with_init(init: InitKind) -> Self {
        Self {
            init,
            ..Self::default()
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if !(self.tol_term > 0.0) || self.max_outer_iter == 0 {
            return Err(PhError::InvalidInput(
                "tol_term must be positive and max_outer_iter at least 1".into(),
            ));
        }
        if let InitKind::Custom(m) = &self.init {
            if m.shape() != (n, n) {
                return Err(PhError::DimensionMismatch(format!(
                    "custom initial matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    RepresentationFound,
    NotFound,
    InfeasibleBeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub a: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub f: f64,
    pub iter: usize,
}

/// Counts of QP solves that stopped without an optimality certificate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QpStats {
    pub solves: usize,
    /// Active-set iterations summed over all solves.
    pub qp_iterations: usize,
    pub iter_limit: usize,
    pub max_kkt: f64,
}

impl QpStats {
    fn record(&mut self, sol: &QpSolution) {
        self.solves += 1;
        self.qp_iterations += sol.iterations;
        if sol.status != QpStatus::Optimal {
            self.iter_limit += 1;
        } else {
            self.max_kkt = self.max_kkt.max(sol.kkt.max());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmReport {
    pub outcome: Outcome,
    pub init: String,
    pub final_state: IterateState,
    /// `beta P`, clamped and renormalized; present on success.
    pub alpha: Option<Vec<f64>>,
    /// `F(A_k, P_k)` for `k = 0, 1, ...`; the last entry is the final `F(A_{k+1}, P_k)`.
    pub f_trace: Vec<f64>,
    pub wallclock: Duration,
    pub qp: QpStats,
}

impl AmReport {
    pub fn iterations(&self) -> usize {
        self.final_state.iter
    }

    pub fn f_final(&self) -> f64 {
        self.final_state.f
    }

    /// Largest increase `f_trace[k+1] - f_trace[k]` for `k >= 1`.
    pub fn max_ascent(&self) -> f64 {
        self.f_trace
            .windows(2)
            .skip(1)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn representation(&self) -> Option<PhRepresentation> {
        let alpha = self.alpha.clone()?;
        let diagnostics = check_validity(&alpha, &self.final_state.a);
        Some(PhRepresentation {
            alpha,
            a: self.final_state.a.clone(),
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhRepresentation {
    pub alpha: Vec<f64>,
    pub a: DMatrix<f64>,
    pub diagnostics: ValidityReport,
}

/// `|PA - JP|_F^2` from the dense matrices.
pub fn objective(p: &DMatrix<f64>, a: &DMatrix<f64>, jordan: &RealJordanForm) -> f64 {
    (p * a - &jordan.dense * p).norm_squared()
}

/// Block-diagonal `2 B B'` over the row groups of `P` (row-major vectorization of `P`).
///
/// A real block uses `A - lambda I` on the diagonal and `-I` on the block superdiagonal;
/// a complex block uses `[[A - mu I, -omega I], [omega I, A - mu I]]` on the diagonal.
pub fn hessian_in_p(a: &DMatrix<f64>, jordan: &RealJordanForm) -> DMatrix<f64> {
    let n = jordan.n;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut h = DMatrix::zeros(n * n, n * n);
    for (block, off) in jordan.blocks.iter().zip(jordan.offsets()) {
        let (cell, m) = match *block {
            JordanBlock::Real { lambda, m } => (a - &eye * lambda, m),
            JordanBlock::Complex { mu, omega, m } => {
                let shifted = a - &eye * mu;
                let mut cell = DMatrix::zeros(2 * n, 2 * n);
                cell.view_mut((0, 0), (n, n)).copy_from(&shifted);
                cell.view_mut((n, n), (n, n)).copy_from(&shifted);
                cell.view_mut((0, n), (n, n)).copy_from(&(&eye * -omega));
                cell.view_mut((n, 0), (n, n)).copy_from(&(&eye * omega));
                (cell, m)
            }
        };
        let w = cell.nrows();
        let dim = w * m;
        let mut b = DMatrix::zeros(dim, dim);
        for r in 0..m {
            b.view_mut((r * w, r * w), (w, w)).copy_from(&cell);
            if r + 1 < m {
                b.view_mut((r * w, (r + 1) * w), (w, w))
                    .copy_from(&(-DMatrix::<f64>::identity(w, w)));
            }
        }
        let base = off * n;
        h.view_mut((base, base), (dim, dim))
            .copy_from(&(&b * b.transpose() * 2.0));
    }
    h
}

fn unvec_row_major(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, x.as_slice())
}

/// QP in `P` for fixed `A`: rows of `P` sum to one and `beta P >= 0`.
pub fn op_a_spec(a: &DMatrix<f64>, beta: &[f64], jordan: &RealJordanForm, qp_tol: f64) -> QpSpec {
    let n = jordan.n;
    let mut e = DMatrix::zeros(n, n * n);
    for i in 0..n {
        for j in 0..n {
            e[(i, i * n + j)] = 1.0;
        }
    }
    let mut g = DMatrix::zeros(n, n * n);
    for j in 0..n {
        for i in 0..n {
            g[(j, i * n + j)] = -beta[i];
        }
    }
    QpSpec::new(hessian_in_p(a, jordan), DVector::zeros(n * n))
        .with_eq(e, DVector::repeat(n, 1.0))
        .with_ineq(g, DVector::zeros(n))
        .with_tol(qp_tol)
}

/// QP in `A` for fixed `P` (row-major vectorization of `A`).
pub fn op_p_spec(p: &DMatrix<f64>, xi: f64, jordan: &RealJordanForm, qp_tol: f64) -> QpSpec {
    let n = jordan.n;
    let ptp = p.transpose() * p;
    let target = p.transpose() * (&jordan.dense * p);
    let mut h = DMatrix::zeros(n * n, n * n);
    let mut c = DVector::zeros(n * n);
    for k in 0..n {
        for j in 0..n {
            c[k * n + j] = -2.0 * target[(k, j)];
            for k2 in 0..n {
                h[(k * n + j, k2 * n + j)] = 2.0 * ptp[(k, k2)];
            }
        }
    }
    let rows = n + 2 * n * n;
    let mut g = DMatrix::zeros(rows, n * n);
    let mut gv = DVector::zeros(rows);
    for k in 0..n {
        for j in 0..n {
            g[(k, k * n + j)] = 1.0;
        }
    }
    let mut r = n;
    for k in 0..n {
        for j in 0..n {
            let v = k * n + j;
            if k == j {
                // a_kk <= 0 and -a_kk <= xi
                g[(r, v)] = 1.0;
                g[(r + 1, v)] = -1.0;
                gv[r + 1] = xi;
            } else {
                // a_kj <= xi and -a_kj <= 0
                g[(r, v)] = 1.0;
                gv[r] = xi;
                g[(r + 1, v)] = -1.0;
            }
            r += 2;
        }
    }
    QpSpec::new(h, c).with_ineq(g, gv).with_tol(qp_tol)
}

/// Minimizes over `P` with `A` fixed.
pub fn solve_op_a(
    a: &DMatrix<f64>,
    beta: &[f64],
    jordan: &RealJordanForm,
    qp_tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(DMatrix<f64>, QpSolution)> {
    let spec = op_a_spec(a, beta, jordan, qp_tol);
    let sol = solve_qp_warm(&spec, warm)?;
    if sol.status == QpStatus::Infeasible {
        return Err(PhError::InfeasibleBeta);
    }
    Ok((unvec_row_major(&sol.x, jordan.n), sol))
}

/// Minimizes over `A` with `P` fixed; starts from `A = 0` unless given a warm start.
pub fn solve_op_p(
    p: &DMatrix<f64>,
    xi: f64,
    jordan: &RealJordanForm,
    qp_tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(DMatrix<f64>, QpSolution)> {
    let n = jordan.n;
    let spec = op_p_spec(p, xi, jordan, qp_tol);
    let zero = WarmStart {
        x: DVector::zeros(n * n),
        active: Vec::new(),
    };
    let sol = solve_qp_warm(&spec, Some(warm.unwrap_or(&zero)))?;
    Ok((unvec_row_major(&sol.x, n), sol))
}

pub fn default_init(jordan: &RealJordanForm, kind: &InitKind, xi: f64) -> DMatrix<f64> {
    let n = jordan.n;
    match kind {
        InitKind::JordanPlusOnesMinusI => {
            &jordan.dense + DMatrix::repeat(n, n, 1.0) - DMatrix::identity(n, n)
        }
        InitKind::Jordan => jordan.dense.clone(),
        InitKind::MinusXiI => DMatrix::identity(n, n) * -xi,
        InitKind::Custom(m) => m.clone(),
    }
}

/// `beta P` with entries in `(-1e-8, 0)` clamped to zero, then renormalized.
pub fn extract_alpha(beta: &[f64], p: &DMatrix<f64>) -> Vec<f64> {
    let raw = DVector::from_column_slice(beta).transpose() * p;
    let clamped: Vec<f64> = raw
        .iter()
        .map(|&v| if v < 0.0 && v > -ALPHA_CLAMP { 0.0 } else { v })
        .collect();
    let sum: f64 = clamped.iter().sum();
    if sum > 0.0 {
        clamped.iter().map(|v| v / sum).collect()
    } else {
        clamped
    }
}

/// One alternating-minimization run.
pub fn run_am(problem: &ProblemData, config: &AmConfig) -> Result<AmReport> {
    let start = Instant::now();
    let n = problem.n;
    config.check(n)?;
    let jordan = &problem.jordan;
    let beta = &problem.beta;
    let mut stats = QpStats::default();

    let mut a = default_init(jordan, &config.init, problem.xi);
    let (mut p, sol) = solve_op_a(&a, beta, jordan, config.qp_tol, None)?;
    stats.record(&sol);
    let mut warm_p = sol.warm_start();
    let mut warm_a: Option<WarmStart> = None;
    let mut f = objective(&p, &a, jordan);
    let mut trace = vec![f];
    let mut iter = 0;
    let threshold = (n * n) as f64 * config.success_threshold_factor;
    // stopping tolerance and iteration budget; both tighten once a success is in hand
    let mut tol = config.tol_term;
    let mut budget = config.max_outer_iter;
    let mut found = false;

    loop {
        iter += 1;
        let (a_next, sol) = solve_op_p(&p, problem.xi, jordan, config.qp_tol, warm_a.as_ref())?;
        stats.record(&sol);
        warm_a = Some(sol.warm_start());
        let f_half = objective(&p, &a_next, jordan);
        let stalled = (f_half - f).abs() <= tol;
        if stalled || iter >= budget {
            if !found && stalled && f_half < threshold && config.polish_iter > 0 {
                found = true;
                tol = config.tol_term * POLISH_DEPTH;
                budget = iter + config.polish_iter;
            } else {
                a = a_next;
                f = f_half;
                trace.push(f);
                break;
            }
        }
        let (p_next, sol) = solve_op_a(&a_next, beta, jordan, config.qp_tol, Some(&warm_p))?;
        stats.record(&sol);
        warm_p = sol.warm_start();
        a = a_next;
        p = p_next;
        f = objective(&p, &a, jordan);
        trace.push(f);
    }

    let found = found || f < threshold;
    Ok(AmReport {
        outcome: if found {
            Outcome::RepresentationFound
        } else {
            Outcome::NotFound
        },
        init: config.init.label().to_string(),
        alpha: found.then(|| extract_alpha(beta, &p)),
        final_state: IterateState { a, p, f, iter },
        f_trace: trace,
        wallclock: start.elapsed(),
        qp: stats,
    })
}

/// Random subgenerator scaled so every `|a_ii| <= xi`; feasible for the `A`-subproblem.
pub fn random_feasible_init(n: usize, xi: f64, seed: u64, index: u64) -> DMatrix<f64> {
    let spec = GenSpec::new(n, Variant::Balanced, seed);
    let (_, a) = sample_ph_instance(&spec, index).expect("balanced spec with n >= 1 is valid");
    let dmax = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if dmax > xi {
        a * (xi / dmax)
    } else {
        a
    }
}

/// Result of several independent runs on the same problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartReport {
    pub best: AmReport,
    pub runs: Vec<AmReport>,
}

/// Runs every config (in parallel) and keeps the lowest final `F`, preferring successes;
/// ties go to the earliest config.
pub fn run_multistart(problem: &ProblemData, configs: &[AmConfig]) -> Result<MultiStartReport> {
    if configs.is_empty() {
        return Err(PhError::InvalidInput(
            "at least one configuration is required".into(),
        ));
    }
    let runs: Vec<AmReport> = configs
        .par_iter()
        .map(|c| run_am(problem, c))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        let b = &runs[best];
        let better = match (r.outcome, b.outcome) {
            (Outcome::RepresentationFound, Outcome::RepresentationFound)
            | (_, Outcome::NotFound)
                if r.outcome == b.outcome =>
            {
                r.f_final() < b.f_final()
            }
            (Outcome::RepresentationFound, _) => true,
            _ => false,
        };
        if better {
            best = k;
        }
    }
    Ok(MultiStartReport {
        best: runs[best].clone(),
        runs,
    })
}

/// The three deterministic starts followed by `random` random feasible ones.
pub fn standard_starts(
    problem: &ProblemData,
    random: usize,
    seed: u64,
    base: &AmConfig,
) -> Vec<AmConfig> {
    let mut out = vec![
        AmConfig {
            init: InitKind::JordanPlusOnesMinusI,
            ..base.clone()
        },
        AmConfig {
            init: InitKind::Jordan,
            ..base.clone()
        },
        AmConfig {
            init: InitKind::MinusXiI,
            ..base.clone()
        },
    ];
    for k in 0..random {
        let m = random_feasible_init(problem.n, problem.xi, seed, k as u64);
        out.push(AmConfig {
            init: InitKind::Custom(m),
            ..base.clone()
        });
    }
    out
}

/// Largest violation of the `A`-subproblem constraints.
pub fn op_p_violation(a: &DMatrix<f64>, xi: f64) -> f64 {
    let n = a.nrows();
    let mut v: f64 = 0.0;
    for i in 0..n {
        v = v.max(a.row(i).sum());
        for j in 0..n {
            let x = a[(i, j)];
            if i == j {
                v = v.max(x).max(-xi - x);
            } else {
                v = v.max(-x).max(x - xi);
            }
        }
    }
    v
}

/// Largest violation of the `P`-subproblem constraints.
pub fn op_a_violation(p: &DMatrix<f64>, beta: &[f64]) -> f64 {
    let n = p.nrows();
    let rows = (0..n)
        .map(|i| (p.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let bp = DVector::from_column_slice(beta).transpose() * p;
    rows.max(bp.iter().fold(0.0f64, |a, &x| a.max(-x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jordan::build_jordan;
    use crate::poly::{
        ComplexPair, PartialFractions, PoleMultiset, Polynomial, RationalLst, RealPole, C64,
    };
    use approx::assert_abs_diff_eq;

    fn ex51() -> RationalLst {
        let poles = PoleMultiset::new(
            vec![RealPole {
                value: -1.0,
                mult: 1,
            }],
            vec![ComplexPair {
                re: -2.8,
                im: 0.4,
                mult: 1,
            }],
        )
        .unwrap();
        let pf = PartialFractions {
            real: vec![vec![1.161]],
            complex: vec![vec![C64::new(-0.23, 0.0)]],
        };
        RationalLst::from_partial_fractions(poles, pf).unwrap()
    }

    #[test]
    fn objective_trivial() {
        let j = build_jordan(&ex51().poles);
        let eye = DMatrix::identity(3, 3);
        assert_eq!(objective(&eye, &j.dense, &j), 0.0);
        let mut a = j.dense.clone();
        a[(0, 2)] += 0.1;
        assert_abs_diff_eq!(objective(&eye, &a, &j), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn hessian_scalar() {
        let j =
            RealJordanForm::from_blocks(vec![JordanBlock::Real { lambda: -2.0, m: 1 }]).unwrap();
        let h = hessian_in_p(&DMatrix::from_element(1, 1, -0.5), &j);
        // quadratic form p * (a - lambda)^2 * p, Hessian twice that
        assert_abs_diff_eq!(h[(0, 0)], 2.0 * 1.5f64.powi(2), epsilon = 1e-15);
    }

    #[test]
    fn exponential_runs() {
        let lst =
            RationalLst::from_coeffs(Polynomial::constant(2.0), Polynomial::linear(-2.0)).unwrap();
        let pd = ProblemData::from_lst(&lst).unwrap();
        let rep = run_am(&pd, &AmConfig::default()).unwrap();
        assert_eq!(rep.outcome, Outcome::RepresentationFound);
        assert!(rep.iterations() <= 2);
        assert_abs_diff_eq!(rep.alpha.as_ref().unwrap()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.final_state.a[(0, 0)], -2.0, epsilon = 1e-10);
    }

    #[test]
    fn negative_beta_is_infeasible() {
        let j =
            RealJordanForm::from_blocks(vec![JordanBlock::Real { lambda: -1.0, m: 1 }]).unwrap();
        let pd = ProblemData::new(j, vec![-1.0]).unwrap();
        assert_eq!(
            run_am(&pd, &AmConfig::default()).unwrap_err(),
            PhError::InfeasibleBeta
        );
    }

    #[test]
    fn op_p_projects_diagonal_jordan() {
        let j = RealJordanForm::from_blocks(vec![
            JordanBlock::Real { lambda: -1.0, m: 1 },
            JordanBlock::Real { lambda: -2.0, m: 1 },
        ])
        .unwrap();
        let (a, sol) = solve_op_p(&DMatrix::identity(2, 2), 3.0, &j, 1e-10, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((a - &j.dense).amax() <= 1e-10);
    }

    #[test]
    fn example_complex_run() {
        let pd = ProblemData::from_lst(&ex51()).unwrap();
        let rep = run_am(&pd, &AmConfig::default()).unwrap();
        assert_eq!(
            rep.outcome,
            Outcome::RepresentationFound,
            "F = {}",
            rep.f_final()
        );
        assert!(rep.max_ascent() <= 1e-12);
        assert!(op_p_violation(&rep.final_state.a, pd.xi) <= 1e-9);
        assert!(op_a_violation(&rep.final_state.p, &pd.beta) <= 1e-9);
    }
}
