//! Real Jordan form of a pole multiset, the vector beta tying it to the transform, and
//! the trace budget xi.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PhError, Result};
use crate::poly::{ComplexPair, PartialFractions, PoleMultiset, RationalLst, RealPole, C64};

/// Attempts at the sampling solve before giving up.
pub const BETA_MAX_ATTEMPTS: usize = 5;

/// Reciprocal condition number below which the sample system counts as singular.
const SAMPLE_RCOND_MIN: f64 = 1e-14;

/// One Jordan block. Complex blocks are built from `[[mu, -omega], [omega, mu]]` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JordanBlock {
    Real { lambda: f64, m: usize },
    Complex { mu: f64, omega: f64, m: usize },
}

impl JordanBlock {
    pub fn dim(&self) -> usize {
        match *self {
            JordanBlock::Real { m, .. } => m,
            JordanBlock::Complex { m, .. } => 2 * m,
        }
    }

    /// Sum of the diagonal.
    pub fn trace(&self) -> f64 {
        match *self {
            JordanBlock::Real { lambda, m } => m as f64 * lambda,
            JordanBlock::Complex { mu, m, .. } => 2.0 * m as f64 * mu,
        }
    }
}

/// Block-diagonal real Jordan matrix with its dense realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealJordanForm {
    pub blocks: Vec<JordanBlock>,
    pub n: usize,
    pub dense: DMatrix<f64>,
}

impl RealJordanForm {
    /// Realizes the given blocks in order. `omega` may carry either sign here.
    pub fn from_blocks(blocks: Vec<JordanBlock>) -> Result<Self> {
        for b in &blocks {
            let ok = match *b {
                JordanBlock::Real { lambda, m } => m > 0 && lambda.is_finite(),
                JordanBlock::Complex { mu, omega, m } => {
                    m > 0 && mu.is_finite() && omega.is_finite() && omega != 0.0
                }
            };
            if !ok {
                return Err(PhError::InvalidInput(format!("bad Jordan block {b:?}")));
            }
        }
        let n = blocks.iter().map(JordanBlock::dim).sum();
        let mut dense = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &blocks {
            match *b {
                JordanBlock::Real { lambda, m } => {
                    for r in 0..m {
                        dense[(off + r, off + r)] = lambda;
                        if r > 0 {
                            dense[(off + r, off + r - 1)] = 1.0;
                        }
                    }
                }
                JordanBlock::Complex { mu, omega, m } => {
                    for r in 0..m {
                        let k = off + 2 * r;
                        dense[(k, k)] = mu;
                        dense[(k, k + 1)] = -omega;
                        dense[(k + 1, k)] = omega;
                        dense[(k + 1, k + 1)] = mu;
                        if r > 0 {
                            dense[(k, k - 2)] = 1.0;
                            dense[(k + 1, k - 1)] = 1.0;
                        }
                    }
                }
            }
            off += b.dim();
        }
        Ok(Self { blocks, n, dense })
    }

    /// Starting row of each block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = off;
                off += b.dim();
                o
            })
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(JordanBlock::trace).sum()
    }
}

/// Exact partial fractions of `-beta J (sI - J)^{-1} 1'` for a Jordan form with one block
/// per distinct pole.
///
/// A complex block acts on each cell `(x1, x2)` as multiplication of `x1 + i x2` by
/// `mu + i omega`, so it reduces to a complex Jordan block driven by `1 + i` and read out
/// through `beta_1 - i beta_2`.
pub fn lst_from_jordan(beta: &[f64], jordan: &RealJordanForm) -> Result<RationalLst> {
    if beta.len() != jordan.n {
        return Err(PhError::DimensionMismatch(
            "beta length differs from Jordan dimension".into(),
        ));
    }
    let mut real = Vec::new();
    let mut complex = Vec::new();
    for (block, off) in jordan.blocks.iter().zip(jordan.offsets()) {
        match *block {
            JordanBlock::Real { lambda, m } => {
                let b = &beta[off..off + m];
                let coeffs: Vec<f64> = (0..m)
                    .map(|r| -(1.0 + lambda) * b[r + 1..].iter().sum::<f64>() - lambda * b[r])
                    .collect();
                real.push((
                    RealPole {
                        value: lambda,
                        mult: m,
                    },
                    coeffs,
                ));
            }
            JordanBlock::Complex { mu, omega, m } => {
                let z = C64::new(mu, omega);
                let b: Vec<C64> = (0..m)
                    .map(|i| C64::new(beta[off + 2 * i], -beta[off + 2 * i + 1]))
                    .collect();
                let drive = C64::new(1.0, 1.0);
                let mut coeffs: Vec<C64> = (0..m)
                    .map(|r| {
                        let tail: C64 = b[r + 1..].iter().sum();
                        drive * (-(z + 1.0) * tail - z * b[r]) * 0.5
                    })
                    .collect();
                if omega < 0.0 {
                    coeffs.iter_mut().for_each(|c| *c = c.conj());
                }
                let pair = ComplexPair {
                    re: mu,
                    im: omega.abs(),
                    mult: m,
                };
                complex.push((pair, coeffs));
            }
        }
    }
    let poles = PoleMultiset::new(
        real.iter().map(|(p, _)| *p).collect(),
        complex.iter().map(|(p, _)| *p).collect(),
    )?;
    let pf = PartialFractions {
        real: poles
            .real()
            .iter()
            .map(|p| {
                real.iter()
                    .find(|(q, _)| q.value == p.value)
                    .map(|(_, c)| c.clone())
                    .unwrap()
            })
            .collect(),
        complex: poles
            .complex()
            .iter()
            .map(|p| {
                complex
                    .iter()
                    .find(|(q, _)| q.re == p.re && q.im == p.im)
                    .map(|(_, c)| c.clone())
                    .unwrap()
            })
            .collect(),
    };
    RationalLst::from_partial_fractions(poles, pf)
}

/// One block per distinct pole, in pole-multiset order.
pub fn build_jordan(poles: &PoleMultiset) -> RealJordanForm {
    let mut blocks: Vec<JordanBlock> = poles
        .real()
        .iter()
        .map(|p| JordanBlock::Real {
            lambda: p.value,
            m: p.mult,
        })
        .collect();
    blocks.extend(poles.complex().iter().map(|c| JordanBlock::Complex {
        mu: c.re,
        omega: c.im,
        m: c.mult,
    }));
    RealJordanForm::from_blocks(blocks).expect("pole multiset invariants give valid blocks")
}

/// `xi = -(sum n_i lambda_i + 2 sum n_j mu_j)`.
pub fn compute_xi(poles: &PoleMultiset) -> f64 {
    let real: f64 = poles.real().iter().map(|p| p.mult as f64 * p.value).sum();
    let complex: f64 = poles
        .complex()
        .iter()
        .map(|c| 2.0 * c.mult as f64 * c.re)
        .sum();
    -(real + complex)
}

/// `-J (sI - J)^{-1} 1'` as a column.
pub fn resolvent_column(jordan: &RealJordanForm, s: f64) -> Option<DVector<f64>> {
    let n = jordan.n;
    let shifted = DMatrix::identity(n, n) * s - &jordan.dense;
    let x = shifted.lu().solve(&DVector::repeat(n, 1.0))?;
    Some(-&jordan.dense * x)
}

/// `-b J (sI - J)^{-1} 1'`: the transform of the (possibly signed) vector `b` against `jordan`.
pub fn transform_of(beta: &[f64], jordan: &RealJordanForm, s: f64) -> f64 {
    resolvent_column(jordan, s).map_or(f64::NAN, |col| {
        beta.iter().zip(col.iter()).map(|(b, c)| b * c).sum()
    })
}

/// Sample points used for attempt `attempt` (0-based): `1 + shift, 2 + shift, ...`
/// skipping anything within `0.5` of a pole.
fn sample_points(lst: &RationalLst, n: usize, attempt: usize) -> Vec<f64> {
    let shift = 0.37 * attempt as f64;
    let mut pts = Vec::with_capacity(n);
    let mut k = 1usize;
    while pts.len() < n {
        let s = k as f64 + shift;
        if !lst.near_pole(C64::new(s, 0.0), 0.5) {
            pts.push(s);
        }
        k += 1;
    }
    pts
}

/// Solves `beta M = v` with `M[:, m] = -J (s_m I - J)^{-1} 1'` and `v_m = L(s_m)`.
pub fn compute_beta(lst: &RationalLst, jordan: &RealJordanForm) -> Result<Vec<f64>> {
    let n = jordan.n;
    if lst.order() != n {
        return Err(PhError::DimensionMismatch(format!(
            "transform has order {} but Jordan form has dimension {n}",
            lst.order()
        )));
    }
    for attempt in 0..BETA_MAX_ATTEMPTS {
        let pts = sample_points(lst, n, attempt);
        let mut m = DMatrix::zeros(n, n);
        let mut ok = true;
        for (k, &s) in pts.iter().enumerate() {
            match resolvent_column(jordan, s) {
                Some(col) => m.set_column(k, &col),
                None => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin / smax < SAMPLE_RCOND_MIN {
            continue;
        }
        let v = DVector::from_iterator(n, pts.iter().map(|&s| lst.eval(s)));
        // beta M = v  <=>  M' beta' = v'
        let mt = m.transpose();
        let lu = mt.clone().lu();
        let Some(mut beta) = lu.solve(&v) else {
            continue;
        };
        // one step of iterative refinement
        let resid = &v - &mt * &beta;
        if let Some(corr) = lu.solve(&resid) {
            beta += corr;
        }
        if beta.iter().all(|b| b.is_finite()) {
            return Ok(beta.iter().copied().collect());
        }
    }
    Err(PhError::SingularSampleSystem(BETA_MAX_ATTEMPTS))
}

/// The closed-form recursions for beta, evaluated literally. Kept as a cross-check against
/// [`compute_beta`]; complex blocks disagree with it by a factor of `sqrt(2)`.
pub fn beta_closed_form(lst: &RationalLst, jordan: &RealJordanForm) -> Result<Vec<f64>> {
    let poles = &lst.poles;
    if jordan.blocks.len() != poles.real().len() + poles.complex().len() {
        return Err(PhError::DimensionMismatch(
            "one Jordan block per pole expected".into(),
        ));
    }
    let mut beta = Vec::with_capacity(jordan.n);
    let mut ri = 0;
    let mut ci = 0;
    for b in &jordan.blocks {
        match *b {
            JordanBlock::Real { lambda, m } => {
                if lambda == 0.0 {
                    return Err(PhError::ZeroPole);
                }
                let c = lst.pf.real.get(ri).ok_or_else(|| {
                    PhError::DimensionMismatch("missing real partial fractions".into())
                })?;
                ri += 1;
                for r in 0..m {
                    let tail: f64 = (1..m - r)
                        .map(|l| (-1.0 / lambda).powi(l as i32) * c[r + l])
                        .sum();
                    beta.push(-(c[r] + (lambda + 1.0) * tail) / lambda);
                }
            }
            JordanBlock::Complex { mu, omega, m } => {
                let z = C64::new(mu, omega);
                if z.norm() == 0.0 {
                    return Err(PhError::ZeroPole);
                }
                let c = lst.pf.complex.get(ci).ok_or_else(|| {
                    PhError::DimensionMismatch("missing complex partial fractions".into())
                })?;
                ci += 1;
                let lead = C64::new(1.0, -1.0) / (z * std::f64::consts::SQRT_2);
                for r in 0..m {
                    let tail: C64 = (1..m - r)
                        .map(|l| (-z.inv()).powi(l as i32) * c[r + l])
                        .sum();
                    let w = lead * (c[r] + (z + 1.0) * tail);
                    beta.push(-w.re);
                    beta.push(w.im);
                }
            }
        }
    }
    Ok(beta)
}

/// Everything the alternating minimization needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub jordan: RealJordanForm,
    pub beta: Vec<f64>,
    pub xi: f64,
    pub n: usize,
}

impl ProblemData {
    /// Builds `(J, beta, xi)` from an admissible transform.
    pub fn from_lst(lst: &RationalLst) -> Result<Self> {
        let report = crate::poly::validate_lst(lst);
        if !report.admissible {
            return Err(PhError::Inadmissible(report.summary()));
        }
        let jordan = build_jordan(&lst.poles);
        let beta = compute_beta(lst, &jordan)?;
        let xi = compute_xi(&lst.poles);
        Ok(Self {
            n: jordan.n,
            jordan,
            beta,
            xi,
        })
    }

    /// Takes `J` and `beta` as given, with `xi = -trace(J)`.
    pub fn new(jordan: RealJordanForm, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != jordan.n {
            return Err(PhError::DimensionMismatch(format!(
                "beta has {} entries for a Jordan form of dimension {}",
                beta.len(),
                jordan.n
            )));
        }
        let xi = -jordan.trace();
        Ok(Self {
            n: jordan.n,
            jordan,
            beta,
            xi,
        })
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    /// Largest `|-beta J (sI - J)^{-1} 1' - L(s)| / (1 + |L(s)|)` over the given points.
    pub fn beta_residual(&self, lst: &RationalLst, points: &[f64]) -> f64 {
        points
            .iter()
            .map(|&s| {
                let l = lst.eval(s);
                (transform_of(&self.beta, &self.jordan, s) - l).abs() / (1.0 + l.abs())
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
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

    fn fresh_points() -> Vec<f64> {
        (0..16).map(|k| 0.15 + 0.9 * k as f64).collect()
    }

    #[test]
    fn jordan_example_complex() {
        let j = build_jordan(&ex51().poles);
        let want =
            DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -2.8, -0.4, 0.0, 0.4, -2.8]);
        assert_eq!(j.dense, want);
        assert_eq!(j.offsets(), vec![0, 1]);
    }

    #[test]
    fn jordan_single_and_multiple() {
        let poles = PoleMultiset::new(
            vec![RealPole {
                value: -2.0,
                mult: 1,
            }],
            vec![],
        )
        .unwrap();
        assert_eq!(
            build_jordan(&poles).dense,
            DMatrix::from_element(1, 1, -2.0)
        );

        let poles = PoleMultiset::new(
            vec![
                RealPole {
                    value: -1.0,
                    mult: 1,
                },
                RealPole {
                    value: -1.2,
                    mult: 2,
                },
                RealPole {
                    value: -1.3,
                    mult: 3,
                },
            ],
            vec![],
        )
        .unwrap();
        let j = build_jordan(&poles);
        assert_eq!(j.n, 6);
        for (i, d) in [-1.0, -1.2, -1.2, -1.3, -1.3, -1.3].iter().enumerate() {
            assert_eq!(j.dense[(i, i)], *d);
        }
        let subdiag: Vec<f64> = (1..6).map(|i| j.dense[(i, i - 1)]).collect();
        assert_eq!(subdiag, vec![0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_abs_diff_eq!(compute_xi(&poles), 7.3, epsilon = 1e-15);
        assert_eq!(compute_xi(&poles), -j.trace());
    }

    #[test]
    fn complex_multiple_block_layout() {
        let j = RealJordanForm::from_blocks(vec![JordanBlock::Complex {
            mu: -1.0,
            omega: 2.0,
            m: 2,
        }])
        .unwrap();
        assert_eq!(j.dense[(2, 0)], 1.0);
        assert_eq!(j.dense[(3, 1)], 1.0);
        assert_eq!(j.dense[(2, 1)], 0.0);
        assert_eq!(j.dense[(0, 1)], -2.0);
    }

    #[test]
    fn xi_examples() {
        assert_abs_diff_eq!(compute_xi(&ex51().poles), 6.6, epsilon = 1e-15);
        let poles = PoleMultiset::new(
            vec![RealPole {
                value: -3.0,
                mult: 4,
            }],
            vec![],
        )
        .unwrap();
        assert_eq!(compute_xi(&poles), 12.0);
    }

    #[test]
    fn beta_example_complex() {
        let lst = ex51();
        let pd = ProblemData::from_lst(&lst).unwrap();
        assert_abs_diff_eq!(pd.beta[0], 1.161, epsilon = 1e-12);
        assert_abs_diff_eq!(pd.beta[1], -0.092, epsilon = 1e-12);
        assert_abs_diff_eq!(pd.beta[2], -0.069, epsilon = 1e-12);
        assert!(pd.beta_residual(&lst, &fresh_points()) <= 1e-9);
    }

    #[test]
    fn beta_exponential() {
        let lst =
            RationalLst::from_coeffs(Polynomial::constant(2.0), Polynomial::linear(-2.0)).unwrap();
        let pd = ProblemData::from_lst(&lst).unwrap();
        assert_abs_diff_eq!(pd.beta[0], 1.0, epsilon = 1e-14);
        assert_eq!(beta_closed_form(&lst, &pd.jordan).unwrap(), vec![1.0]);
    }

    #[test]
    fn closed_form_real_block_matches() {
        let lst = ex51();
        let j = build_jordan(&lst.poles);
        let closed = beta_closed_form(&lst, &j).unwrap();
        assert_abs_diff_eq!(closed[0], 1.161, epsilon = 1e-12);
        let sampled = compute_beta(&lst, &j).unwrap();
        // the literal complex-block formulas come out smaller by sqrt(2)
        for k in 1..3 {
            assert_abs_diff_eq!(
                closed[k] * std::f64::consts::SQRT_2,
                sampled[k],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn closed_form_multiple_real_poles() {
        let poles = PoleMultiset::new(
            vec![
                RealPole {
                    value: -1.0,
                    mult: 1,
                },
                RealPole {
                    value: -2.0,
                    mult: 3,
                },
            ],
            vec![],
        )
        .unwrap();
        let pf = PartialFractions {
            real: vec![vec![0.5], vec![0.7, -0.4, 3.2]],
            complex: vec![],
        };
        let lst = RationalLst::from_partial_fractions(poles, pf).unwrap();
        let j = build_jordan(&lst.poles);
        let closed = beta_closed_form(&lst, &j).unwrap();
        let sampled = compute_beta(&lst, &j).unwrap();
        for (a, b) in closed.iter().zip(&sampled) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn transform_of_jordan_matches_sampling() {
        let lst = ex51();
        let j = build_jordan(&lst.poles);
        let beta = compute_beta(&lst, &j).unwrap();
        let back = lst_from_jordan(&beta, &j).unwrap();
        assert_abs_diff_eq!(back.pf.real[0][0], 1.161, epsilon = 1e-12);
        assert_abs_diff_eq!(back.pf.complex[0][0].re, -0.23, epsilon = 1e-12);
        assert_abs_diff_eq!(back.pf.complex[0][0].im, 0.0, epsilon = 1e-12);

        // mixed multiplicities and a flipped rotation sign
        let j = RealJordanForm::from_blocks(vec![
            JordanBlock::Real { lambda: -1.5, m: 3 },
            JordanBlock::Complex {
                mu: -2.0,
                omega: -0.7,
                m: 2,
            },
        ])
        .unwrap();
        let beta = [0.3, -0.2, 0.1, 0.4, 0.25, -0.15, 0.3];
        let lst = lst_from_jordan(&beta, &j).unwrap();
        for s in [0.2, 1.0, 3.5, 7.0] {
            assert_abs_diff_eq!(lst.eval(s), transform_of(&beta, &j, s), epsilon = 1e-12);
            let pf = lst.eval_pf(C64::new(s, 0.0));
            assert_abs_diff_eq!(pf.re, transform_of(&beta, &j, s), epsilon = 1e-12);
        }
    }

    #[test]
    fn problem_rejects_inadmissible() {
        let lst =
            RationalLst::from_coeffs(Polynomial::constant(2.0), Polynomial::quadratic(-1.0, 1.0))
                .unwrap();
        assert!(matches!(
            ProblemData::from_lst(&lst),
            Err(PhError::Inadmissible(_))
        ));
    }
}
