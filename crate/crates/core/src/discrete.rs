//! Discrete-time PH distributions through the substitution `z = 1 / (s + 1)`.
//!
//! A generating function `G(z) = p~(z) / q~(z)` maps to the transform
//! `L0(s) = G(1 / (s + 1))`, which is solved as a continuous problem with the trace
//! budget fixed to 1. A continuous answer `(alpha, A)` lifts back as `(alpha, A + I)`.

use nalgebra::{DMatrix, DVector};

use crate::am::{run_am, run_multistart, AmConfig, AmReport, Outcome};
use crate::error::{PhError, Result};
use crate::jordan::ProblemData;
use crate::phgen::lst_of;
use crate::poly::{roots, validate_lst, Polynomial, RationalLst, C64, DEFAULT_TOL_CLUSTER};

/// Tolerance on `G(1) = 1` and on the constant term of `q~`.
pub const GF_TOL: f64 = 1e-12;

/// `G(z) = p~(z) / q~(z)` with coefficients in ascending powers of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    pub p_tilde: Polynomial,
    pub q_tilde: Polynomial,
}

impl GeneratingFunction {
    pub fn new(p_tilde: Polynomial, q_tilde: Polynomial) -> Self {
        Self { p_tilde, q_tilde }
    }

    /// `max(deg p~, deg q~)`.
    pub fn order(&self) -> usize {
        self.p_tilde
            .degree()
            .unwrap_or(0)
            .max(self.q_tilde.degree().unwrap_or(0))
    }

    pub fn eval_c(&self, z: C64) -> C64 {
        self.p_tilde.eval_c(z) / self.q_tilde.eval_c(z)
    }

    /// Checks the conditions that do not need the continuous transform.
    fn check_shape(&self) -> Result<()> {
        let bad = |m: String| Err(PhError::InvalidGf(m));
        let pc = self.p_tilde.coeffs();
        let qc = self.q_tilde.coeffs();
        if pc.iter().chain(qc).any(|c| !c.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        if self.p_tilde.is_zero() {
            return bad("numerator is zero".into());
        }
        if pc[0] != 0.0 {
            return bad(format!(
                "p~ has constant term {}; mass at zero is unsupported",
                pc[0]
            ));
        }
        if (qc[0] - 1.0).abs() > GF_TOL {
            return bad(format!("q~ has constant term {}, expected 1", qc[0]));
        }
        let g1 = self.p_tilde.eval(1.0) / self.q_tilde.eval(1.0);
        if !((g1 - 1.0).abs() <= GF_TOL) {
            return bad(format!("G(1) = {g1}, expected 1"));
        }
        if self.q_tilde.degree().unwrap_or(0) > 0 {
            let zs = roots(&self.q_tilde, DEFAULT_TOL_CLUSTER)
                .map_err(|e| PhError::InvalidGf(format!("could not factor q~: {e}")))?;
            let all = zs.roots_with_mult();
            let rmin = all
                .iter()
                .map(|(z, _)| z.norm())
                .fold(f64::INFINITY, f64::min);
            let tie = DEFAULT_TOL_CLUSTER * (1.0 + rmin);
            let real_min = all
                .iter()
                .any(|(z, _)| z.im == 0.0 && z.re > 1.0 && (z.norm() - rmin) <= tie);
            if !real_min {
                return bad(format!(
                    "the root of q~ with minimal modulus ({rmin}) is not real and greater than 1"
                ));
            }
        }
        Ok(())
    }
}

/// `sum_r c_r (s + 1)^(n - r)`.
fn shifted(coeffs: &[f64], n: usize) -> Polynomial {
    let base = Polynomial::linear(-1.0);
    let mut acc = Polynomial::zero();
    for (r, &c) in coeffs.iter().enumerate().take(n + 1) {
        if c != 0.0 {
            acc = acc.add(&base.pow(n - r).scale(c));
        }
    }
    acc
}

/// Continuous transform `L0(s) = G(1 / (s + 1))` of a valid generating function.
///
/// `p0(s) = sum_r p~_r (s + 1)^(n - r)` and `q0(s) = sum_r q~_r (s + 1)^(n - r)`, expanded
/// binomially and then normalized. Fails with `InvalidGf` when `G` is not admissible or
/// when `L0` loses order (a shared root) or fails the continuous checks.
pub fn to_continuous(g: &GeneratingFunction) -> Result<RationalLst> {
    g.check_shape()?;
    let n = g.order();
    let p0 = shifted(g.p_tilde.coeffs(), n);
    let q0 = shifted(g.q_tilde.coeffs(), n);
    let lst = RationalLst::from_coeffs(p0, q0).map_err(|e| PhError::InvalidGf(e.to_string()))?;
    if lst.order() != n {
        return Err(PhError::InvalidGf(format!(
            "p~ and q~ share a root; the reduced order is {} instead of {n}",
            lst.order()
        )));
    }
    let report = validate_lst(&lst);
    if !report.admissible {
        return Err(PhError::InvalidGf(format!(
            "L0 is not admissible: {}",
            report.summary()
        )));
    }
    Ok(lst)
}

/// Generating function of a continuous transform under `s = 1/z - 1`; inverse of
/// `to_continuous`.
pub fn from_continuous(lst: &RationalLst) -> GeneratingFunction {
    let n = lst.order();
    // z^n f(1/z - 1) = sum_k f_k (1 - z)^k z^(n - k)
    let back = |f: &Polynomial| {
        let one_minus_z = Polynomial::new(vec![1.0, -1.0]);
        let mut acc = Polynomial::zero();
        for (k, &c) in f.coeffs().iter().enumerate() {
            if c != 0.0 {
                let mut z_pow = vec![0.0; n - k + 1];
                z_pow[n - k] = 1.0;
                acc = acc.add(&one_minus_z.pow(k).mul(&Polynomial::new(z_pow)).scale(c));
            }
        }
        acc
    };
    let p = back(&lst.p);
    let q = back(&lst.q);
    let c0 = q.coeffs()[0];
    GeneratingFunction::new(p.scale(1.0 / c0), q.scale(1.0 / c0))
}

/// Exact generating function of a discrete representation, after cancellation.
pub fn gf_of(alpha_tilde: &[f64], a_tilde: &DMatrix<f64>) -> Result<GeneratingFunction> {
    let n = a_tilde.nrows();
    let a = a_tilde - DMatrix::identity(n, a_tilde.ncols());
    Ok(from_continuous(&lst_of(alpha_tilde, &a)?))
}

/// `z alpha~ (I - z A~)^(-1) (I - A~) 1'` by a direct complex solve.
pub fn gf_value(alpha_tilde: &[f64], a_tilde: &DMatrix<f64>, z: C64) -> C64 {
    let n = a_tilde.nrows();
    let ac = a_tilde.map(|x| C64::new(x, 0.0));
    let exit = (DMatrix::<f64>::identity(n, n) - a_tilde) * DVector::repeat(n, 1.0);
    let exit = exit.map(|x| C64::new(x, 0.0));
    let lhs = DMatrix::<C64>::identity(n, n) - ac * z;
    match lhs.lu().solve(&exit) {
        Some(x) => {
            let dot: C64 = alpha_tilde.iter().zip(x.iter()).map(|(a, v)| v * *a).sum();
            dot * z
        }
        None => C64::new(f64::NAN, f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePhRepresentation {
    pub alpha_tilde: Vec<f64>,
    pub a_tilde: DMatrix<f64>,
}

impl DiscretePhRepresentation {
    /// Largest row sum of `A~`.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.a_tilde.nrows())
            .map(|i| self.a_tilde.row(i).sum())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteReport {
    pub lst: RationalLst,
    pub problem: ProblemData,
    pub am: AmReport,
    pub representation: Option<DiscretePhRepresentation>,
}

/// `(alpha, A + I)`.
pub fn lift(alpha: &[f64], a: &DMatrix<f64>) -> DiscretePhRepresentation {
    let n = a.nrows();
    DiscretePhRepresentation {
        alpha_tilde: alpha.to_vec(),
        a_tilde: a + DMatrix::identity(n, n),
    }
}

/// Problem data of `G` with the trace budget set to 1.
pub fn discrete_problem(g: &GeneratingFunction) -> Result<(RationalLst, ProblemData)> {
    let lst = to_continuous(g)?;
    let problem = ProblemData::from_lst(&lst)?.with_xi(1.0);
    Ok((lst, problem))
}

fn finish(lst: RationalLst, problem: ProblemData, am: AmReport) -> DiscreteReport {
    let representation = match (&am.outcome, &am.alpha) {
        (Outcome::RepresentationFound, Some(alpha)) => Some(lift(alpha, &am.final_state.a)),
        _ => None,
    };
    DiscreteReport {
        lst,
        problem,
        am,
        representation,
    }
}

pub fn solve_discrete(g: &GeneratingFunction, config: &AmConfig) -> Result<DiscreteReport> {
    let (lst, problem) = discrete_problem(g)?;
    let am = run_am(&problem, config)?;
    Ok(finish(lst, problem, am))
}

/// Like `solve_discrete`, keeping the best of several starts.
pub fn solve_discrete_multistart(
    g: &GeneratingFunction,
    configs: &[AmConfig],
) -> Result<DiscreteReport> {
    let (lst, problem) = discrete_problem(g)?;
    let ms = run_multistart(&problem, configs)?;
    Ok(finish(lst, problem, ms.best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example_52() -> GeneratingFunction {
        let den = Polynomial::new(vec![1.0, -0.5]).mul(&Polynomial::new(vec![1.0, -0.2]).pow(2));
        GeneratingFunction::new(Polynomial::new(vec![0.0, 0.0294, -0.5948, 0.8854]), den)
    }

    fn geometric() -> GeneratingFunction {
        GeneratingFunction::new(
            Polynomial::new(vec![0.0, 0.5]),
            Polynomial::new(vec![1.0, -0.5]),
        )
    }

    #[test]
    fn example_52_transform() {
        let lst = to_continuous(&example_52()).unwrap();
        let want_p = [0.32, -0.536, 0.0294];
        let want_q = Polynomial::linear(-0.5).mul(&Polynomial::linear(-0.8).pow(2));
        for (a, b) in lst.p.coeffs().iter().zip(want_p) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        for (a, b) in lst.q.coeffs().iter().zip(want_q.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_eq!(lst.poles.real().len(), 2);
    }

    #[test]
    fn geometric_is_exponential() {
        let lst = to_continuous(&geometric()).unwrap();
        assert_abs_diff_eq!(lst.p.coeffs()[0], 0.5, epsilon = 1e-15);
        assert_eq!(lst.q.coeffs(), &[0.5, 1.0]);
        let rep = solve_discrete(&geometric(), &AmConfig::default()).unwrap();
        let d = rep.representation.unwrap();
        assert_abs_diff_eq!(d.alpha_tilde[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.a_tilde[(0, 0)], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn rejects_mass_at_zero() {
        let g = GeneratingFunction::new(
            Polynomial::new(vec![0.1, 0.4]),
            Polynomial::new(vec![1.0, -0.5]),
        );
        assert!(matches!(to_continuous(&g), Err(PhError::InvalidGf(_))));
    }

    #[test]
    fn rejects_bad_mass() {
        let g = GeneratingFunction::new(
            Polynomial::new(vec![0.0, 0.4]),
            Polynomial::new(vec![1.0, -0.5]),
        );
        assert!(matches!(to_continuous(&g), Err(PhError::InvalidGf(_))));
    }

    #[test]
    fn rejects_complex_minimal_root() {
        // q~ = 1 + 0.5 z^2 has roots at +-i sqrt(2)
        let q = Polynomial::new(vec![1.0, 0.0, 0.5]);
        let g = GeneratingFunction::new(Polynomial::new(vec![0.0, 0.0, 1.5]), q);
        assert!(matches!(to_continuous(&g), Err(PhError::InvalidGf(_))));
    }

    #[test]
    fn round_trip_through_continuous() {
        let g = example_52();
        let back = from_continuous(&to_continuous(&g).unwrap());
        for (a, b) in back.p_tilde.coeffs().iter().zip(g.p_tilde.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        for (a, b) in back.q_tilde.coeffs().iter().zip(g.q_tilde.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gf_value_matches_polynomials() {
        let (alpha, a) = crate::phgen::sample_discrete_ph(3, 11, 0).unwrap();
        let g = gf_of(&alpha, &a).unwrap();
        for z in [C64::new(0.3, 0.2), C64::new(-0.9, 0.0), C64::new(1.0, 0.0)] {
            let d = g.eval_c(z) - gf_value(&alpha, &a, z);
            assert!(d.norm() <= 1e-10, "{z}: {d}");
        }
    }
}
