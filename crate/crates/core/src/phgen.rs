//! Random phase-type instances and the exact transform of a given representation.
//!
//! Every instance owns a `Xoshiro256PlusPlus` stream seeded with `seed + index`, so
//! batches can be generated in any order or in parallel with identical results.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{PhError, Result};
use crate::poly::{Polynomial, RationalLst, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    Balanced,
    /// Off-diagonal entries are zero with this probability.
    Sparse(f64),
    /// Off-diagonal entries are drawn from `U(0, 1000c)` with this probability.
    Stiff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub c: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n: usize, variant: Variant, seed: u64) -> Self {
        Self {
            n,
            c: 1.0,
            variant,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        let p_ok = match self.variant {
            Variant::Balanced => true,
            Variant::Sparse(p) | Variant::Stiff(p) => (0.0..=1.0).contains(&p),
        };
        if self.n == 0 || !(self.c > 0.0) || !p_ok {
            return Err(PhError::InvalidInput(format!(
                "bad generator spec {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn rng_for(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed.wrapping_add(index))
}

/// Stick-breaking: `alpha_i ~ U(0, 1 - sum_{j<i} alpha_j)`, last entry takes the remainder.
pub fn stick_breaking<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(n);
    let mut rest = 1.0;
    for _ in 0..n.saturating_sub(1) {
        let a = rng.random::<f64>() * rest;
        alpha.push(a);
        rest -= a;
    }
    alpha.push(1.0 - alpha.iter().sum::<f64>());
    alpha
}

/// Draws `(alpha, A)` for instance 0 of the spec's stream.
pub fn sample_ph(spec: &GenSpec) -> Result<(Vec<f64>, DMatrix<f64>)> {
    sample_ph_instance(spec, 0)
}

pub fn sample_ph_instance(spec: &GenSpec, index: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    spec.check()?;
    let mut rng = rng_for(spec.seed, index);
    let (n, c) = (spec.n, spec.c);
    let alpha = stick_breaking(n, &mut rng);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            a[(i, j)] = match spec.variant {
                Variant::Balanced => rng.random::<f64>() * c,
                Variant::Sparse(p) => {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        rng.random::<f64>() * c
                    }
                }
                Variant::Stiff(p) => {
                    let scale = if rng.random::<f64>() < p {
                        1000.0 * c
                    } else {
                        c
                    };
                    rng.random::<f64>() * scale
                }
            };
        }
        // theta in (0, c]
        let theta = (1.0 - rng.random::<f64>()) * c;
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = -off - theta;
    }
    Ok((alpha, a))
}

/// Draws a discrete representation: stick-breaking `alpha` and rows of `A` that are
/// uniform on the simplex scaled to a row sum drawn from `U(0.3, 0.95)`.
pub fn sample_discrete_ph(n: usize, seed: u64, index: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if n == 0 {
        return Err(PhError::InvalidInput("order must be positive".into()));
    }
    let mut rng = rng_for(seed, index);
    let alpha = stick_breaking(n, &mut rng);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let total = 0.3 + 0.65 * rng.random::<f64>();
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let sum: f64 = w.iter().sum();
        for j in 0..n {
            a[(i, j)] = total * w[j] / sum;
        }
    }
    Ok((alpha, a))
}

/// Monic characteristic polynomial `det(sI - A)` from the eigenvalues of `A`.
pub fn char_poly(a: &DMatrix<f64>) -> Polynomial {
    let eig = a.clone().complex_eigenvalues();
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for &z in eig.iter() {
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &cf) in coeffs.iter().enumerate() {
            next[k + 1] += cf;
            next[k] -= cf * z;
        }
        coeffs = next;
    }
    Polynomial::new(coeffs.iter().map(|c| c.re).collect())
}

/// Numerator and denominator of `-v M (sI - M)^{-1} 1'` before any cancellation.
pub fn transform_coeffs(v: &[f64], m: &DMatrix<f64>) -> Result<(Polynomial, Polynomial)> {
    let n = m.nrows();
    if m.ncols() != n || v.len() != n {
        return Err(PhError::DimensionMismatch(format!(
            "vector of length {} against a {}x{} matrix",
            v.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let q = char_poly(m);
    let qc = q.coeffs();
    // adj(sI - M) = sum_k B_k s^k with B_{n-1} = I and B_{k-1} = M B_k + q_k I
    let row = DVector::from_column_slice(v).transpose() * m;
    let ones = DVector::repeat(n, 1.0);
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut p = vec![0.0; n];
    for k in (0..n).rev() {
        p[k] = -(&row * &b * &ones)[(0, 0)];
        if k > 0 {
            b = m * &b + DMatrix::identity(n, n) * qc[k];
        }
    }
    Ok((Polynomial::new(p), q))
}

/// Exact transform of `(alpha, A)` after common-root cancellation.
pub fn lst_of(alpha: &[f64], a: &DMatrix<f64>) -> Result<RationalLst> {
    if a.nrows() != a.ncols() || alpha.len() != a.nrows() {
        return Err(PhError::DimensionMismatch("alpha and A disagree".into()));
    }
    if a.clone().lu().determinant().abs() <= f64::EPSILON * a.amax().powi(a.nrows() as i32) {
        return Err(PhError::SingularA);
    }
    let (mut p, q) = transform_coeffs(alpha, a)?;
    // L(0) = alpha 1' holds exactly; remove rounding from the adjugate sum when it is tiny
    let target = alpha.iter().sum::<f64>();
    let l0 = p.eval(0.0) / q.eval(0.0);
    if (l0 - target).abs() <= 1e-8 * target.abs().max(1.0) && l0 != 0.0 {
        p = p.scale(target / l0);
    }
    RationalLst::from_coeffs(p, q)
}

/// Degree of the denominator of `lst_of(alpha, A)`.
pub fn algebraic_degree(alpha: &[f64], a: &DMatrix<f64>) -> Result<usize> {
    Ok(lst_of(alpha, a)?.order())
}

/// Draws instances `index, index + 1, ...` until one has algebraic degree `n`; returns the
/// representation and the index that produced it.
pub fn sample_full_degree(spec: &GenSpec, index: u64) -> Result<(Vec<f64>, DMatrix<f64>, u64)> {
    let mut k = index;
    loop {
        let (alpha, a) = sample_ph_instance(spec, k)?;
        if matches!(algebraic_degree(&alpha, &a), Ok(d) if d == spec.n) {
            return Ok((alpha, a, k));
        }
        k = k.wrapping_add(1_000_003);
    }
}
