//! Checks on a claimed representation that do not trust the solver.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{PhError, Result};
use crate::poly::{PoleMultiset, RationalLst, C64};

/// Entry tolerance for PH validity.
pub const VALIDITY_TOL: f64 = 1e-8;
/// Largest accepted spectrum mismatch.
pub const SPECTRUM_TOL: f64 = 1e-4;

/// Deterministic LST sample points.
pub const SAMPLE_POINTS: [f64; 20] = [
    0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0,
    14.0, 15.0,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub min_alpha: f64,
    pub alpha_sum_err: f64,
    pub max_diag: f64,
    pub min_offdiag: f64,
    pub max_row_sum: f64,
    /// Some diagonal entry lies in `(-1e-8, 0]`; reported, not a failure.
    pub weak_diagonal: bool,
    pub valid: bool,
}

/// PH validity of `(alpha, A)` with entry tolerance `1e-8`.
pub fn check_validity(alpha: &[f64], a: &DMatrix<f64>) -> ValidityReport {
    let n = a.nrows();
    let min_alpha = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha_sum_err = (alpha.iter().sum::<f64>() - 1.0).abs();
    let mut max_diag = f64::NEG_INFINITY;
    let mut min_offdiag = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                max_diag = max_diag.max(a[(i, j)]);
            } else {
                min_offdiag = min_offdiag.min(a[(i, j)]);
            }
        }
    }
    let max_row_sum = (0..n)
        .map(|i| a.row(i).sum())
        .fold(f64::NEG_INFINITY, f64::max);
    let shape_ok = a.ncols() == n && alpha.len() == n && n > 0;
    let valid = shape_ok
        && alpha.iter().all(|v| v.is_finite())
        && a.iter().all(|v| v.is_finite())
        && min_alpha >= -VALIDITY_TOL
        && alpha_sum_err <= VALIDITY_TOL
        && max_diag <= VALIDITY_TOL
        && (n == 1 || min_offdiag >= -VALIDITY_TOL)
        && max_row_sum <= VALIDITY_TOL;
    ValidityReport {
        min_alpha,
        alpha_sum_err,
        max_diag,
        min_offdiag: if n == 1 { 0.0 } else { min_offdiag },
        max_row_sum,
        weak_diagonal: max_diag > -VALIDITY_TOL,
        valid,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub validity: ValidityReport,
    /// Max of `|L_rep(s) - L(s)| / (1 + |L(s)|)` over the sample points.
    pub lst_max_rel_err: f64,
    pub lst_ok: bool,
    pub spectrum_max_err: f64,
    pub spectrum_ok: bool,
    pub pass: bool,
}

/// `-v M (sI - M)^{-1} 1'`.
pub fn lst_value(v: &[f64], m: &DMatrix<f64>, s: f64) -> f64 {
    let n = m.nrows();
    let shifted = DMatrix::identity(n, n) * s - m;
    match shifted.lu().solve(&DVector::repeat(n, 1.0)) {
        Some(x) => -DVector::from_column_slice(v).dot(&(m * x)),
        None => f64::NAN,
    }
}

pub fn check_representation(
    alpha: &[f64],
    a: &DMatrix<f64>,
    lst: &RationalLst,
    tol: f64,
) -> VerifyReport {
    let validity = check_validity(alpha, a);
    let dims_ok =
        a.nrows() == lst.order() && a.ncols() == lst.order() && alpha.len() == lst.order();
    let (lst_max_rel_err, spectrum_max_err) = if dims_ok {
        let mut err: f64 = 0.0;
        for &s in &SAMPLE_POINTS {
            if lst.near_pole(C64::new(s, 0.0), 1e-6) {
                continue;
            }
            let want = lst.eval(s);
            let got = lst_value(alpha, a, s);
            let e = (got - want).abs() / (1.0 + want.abs());
            err = if e.is_nan() {
                f64::INFINITY
            } else {
                err.max(e)
            };
        }
        (err, spectrum_error(a, &lst.poles))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let lst_ok = lst_max_rel_err <= tol;
    let spectrum_ok = spectrum_max_err <= SPECTRUM_TOL;
    VerifyReport {
        pass: validity.valid && lst_ok && spectrum_ok,
        validity,
        lst_max_rel_err,
        lst_ok,
        spectrum_max_err,
        spectrum_ok,
    }
}

/// Distance between the eigenvalues of `a` and the poles, aware of multiplicity.
///
/// Eigenvalues are matched to poles greedily by distance. For a pole of multiplicity `m`
/// the error is the larger of the centroid offset and `max_k |lambda_k - pole|^m`, since a
/// perturbation `d` of the matrix splits an `m`-fold eigenvalue by about `d^(1/m)`.
pub fn spectrum_error(a: &DMatrix<f64>, poles: &PoleMultiset) -> f64 {
    let eig: Vec<C64> = a.clone().complex_eigenvalues().iter().copied().collect();
    let targets = poles.roots_with_mult();
    let slots: Vec<usize> = targets
        .iter()
        .enumerate()
        .flat_map(|(k, (_, m))| std::iter::repeat_n(k, *m))
        .collect();
    if slots.len() != eig.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, z) in eig.iter().enumerate() {
        for (s, &k) in slots.iter().enumerate() {
            pairs.push(((z - targets[k].0).norm(), i, s));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut eig_used = vec![false; eig.len()];
    let mut slot_used = vec![false; slots.len()];
    let mut groups: Vec<Vec<C64>> = vec![Vec::new(); targets.len()];
    for (_, i, s) in pairs {
        if !eig_used[i] && !slot_used[s] {
            eig_used[i] = true;
            slot_used[s] = true;
            groups[slots[s]].push(eig[i]);
        }
    }
    let mut worst: f64 = 0.0;
    for ((pole, m), g) in targets.iter().zip(&groups) {
        let centroid = g.iter().sum::<C64>() / g.len() as f64;
        let spread = g
            .iter()
            .map(|z| (z - pole).norm().powi(*m as i32))
            .fold(0.0, f64::max);
        worst = worst.max((centroid - pole).norm()).max(spread);
    }
    worst
}

/// `F(t) = 1 - alpha exp(At) 1'`.
pub fn cdf(alpha: &[f64], a: &DMatrix<f64>, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let e = (a * t).exp();
    let surv = DVector::from_column_slice(alpha).dot(&(e * DVector::repeat(a.nrows(), 1.0)));
    1.0 - surv
}

/// `m_k = k! alpha (-A)^{-k} 1'`.
pub fn moments(alpha: &[f64], a: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || alpha.len() != n {
        return Err(PhError::DimensionMismatch("alpha and A disagree".into()));
    }
    let lu = (-a).lu();
    let mut v = DVector::repeat(n, 1.0);
    let mut fact = 1.0;
    for j in 1..=k {
        v = lu.solve(&v).ok_or(PhError::SingularA)?;
        fact *= j as f64;
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PhError::SingularA);
    }
    Ok(fact * DVector::from_column_slice(alpha).dot(&v))
}
