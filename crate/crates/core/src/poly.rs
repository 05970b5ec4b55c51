//! Real polynomials, pole extraction and partial fractions for rational transforms.
//!
//! A transform `L(s) = p(s) / q(s)` is carried as a [`RationalLst`]: both coefficient
//! vectors (ascending degree, `q` monic), the clustered pole multiset and the
//! partial-fraction coefficients attached to every pole.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PhError, Result};

pub type C64 = Complex<f64>;

/// Roots closer than `tol * (1 + |root|)` are treated as one root.
pub const DEFAULT_TOL_CLUSTER: f64 = 1e-6;

/// Admissibility tolerance on `|L(0) - 1|`.
pub const L0_TOL: f64 = 1e-12;

/// Real polynomial with ascending coefficients; the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `s - root`
    pub fn linear(root: f64) -> Self {
        Self::new(vec![-root, 1.0])
    }

    /// `(s - mu)^2 + omega^2`
    pub fn quadratic(mu: f64, omega: f64) -> Self {
        Self::new(vec![mu * mu + omega * omega, -2.0 * mu, 1.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_c(&self, s: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn monic(&self) -> Self {
        match self.leading() {
            0.0 => self.clone(),
            lead => self.scale(1.0 / lead),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
            .collect();
        Self::new(coeffs)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Quotient of synthetic division by `s - root`; the remainder is dropped.
    pub fn div_linear(&self, root: f64) -> Self {
        let n = self.coeffs.len();
        if n <= 1 {
            return Self::zero();
        }
        let mut quot = vec![0.0; n - 1];
        let mut carry = 0.0;
        for k in (1..n).rev() {
            carry = self.coeffs[k] + carry * root;
            quot[k - 1] = carry;
        }
        Self::new(quot)
    }

    /// Quotient of division by `(s - mu)^2 + omega^2`; the remainder is dropped.
    pub fn div_quadratic(&self, mu: f64, omega: f64) -> Self {
        let n = self.coeffs.len();
        if n <= 2 {
            return Self::zero();
        }
        let (b, c) = (-2.0 * mu, mu * mu + omega * omega);
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; n - 2];
        for k in (2..n).rev() {
            let t = rem[k];
            quot[k - 2] = t;
            rem[k] = 0.0;
            rem[k - 1] -= t * b;
            rem[k - 2] -= t * c;
        }
        Self::new(quot)
    }

    /// Taylor coefficients `a_j = q^(j)(c) / j!` about `c`.
    pub fn taylor_at(&self, c: C64) -> Vec<C64> {
        let mut work: Vec<C64> = self.coeffs.iter().map(|&x| C64::new(x, 0.0)).collect();
        let n = work.len();
        let mut out = Vec::with_capacity(n);
        for len in (1..=n).rev() {
            // one Horner pass deflates by (s - c) and leaves the remainder in work[0]
            for k in (0..len - 1).rev() {
                let next = work[k + 1];
                work[k] += next * c;
            }
            out.push(work[0]);
            work.remove(0);
        }
        out
    }
}

fn cpoly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// A real pole and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealPole {
    pub value: f64,
    pub mult: usize,
}

/// A conjugate pair `re ± i im` (stored with `im > 0`) and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
    pub mult: usize,
}

impl ComplexPair {
    pub fn upper(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Distinct poles with multiplicities, real poles first (descending), then conjugate
/// pairs (descending real part, ascending imaginary part).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoleMultiset {
    real: Vec<RealPole>,
    complex: Vec<ComplexPair>,
}

impl PoleMultiset {
    pub fn new(mut real: Vec<RealPole>, mut complex: Vec<ComplexPair>) -> Result<Self> {
        for c in complex.iter_mut() {
            c.im = c.im.abs();
            if c.im == 0.0 {
                return Err(PhError::InvalidInput(format!(
                    "conjugate pair at {} has zero imaginary part",
                    c.re
                )));
            }
        }
        if real.iter().any(|p| p.mult == 0) || complex.iter().any(|p| p.mult == 0) {
            return Err(PhError::InvalidInput(
                "pole multiplicity must be positive".into(),
            ));
        }
        if real.iter().any(|p| !p.value.is_finite())
            || complex
                .iter()
                .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(PhError::InvalidInput("non-finite pole".into()));
        }
        real.sort_by(|a, b| b.value.total_cmp(&a.value));
        complex.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
        if real.windows(2).any(|w| w[0].value == w[1].value)
            || complex
                .windows(2)
                .any(|w| w[0].re == w[1].re && w[0].im == w[1].im)
        {
            return Err(PhError::InvalidInput("poles must be distinct".into()));
        }
        Ok(Self { real, complex })
    }

    pub fn real(&self) -> &[RealPole] {
        &self.real
    }

    pub fn complex(&self) -> &[ComplexPair] {
        &self.complex
    }

    /// Total degree `sum n_i + 2 sum n_j`.
    pub fn order(&self) -> usize {
        self.real.iter().map(|p| p.mult).sum::<usize>()
            + 2 * self.complex.iter().map(|p| p.mult).sum::<usize>()
    }

    pub fn has_complex(&self) -> bool {
        !self.complex.is_empty()
    }

    /// Every root with its multiplicity, conjugates listed separately.
    pub fn roots_with_mult(&self) -> Vec<(C64, usize)> {
        let mut out: Vec<(C64, usize)> = self
            .real
            .iter()
            .map(|p| (C64::new(p.value, 0.0), p.mult))
            .collect();
        for c in &self.complex {
            out.push((c.upper(), c.mult));
            out.push((c.upper().conj(), c.mult));
        }
        out
    }

    /// The unique real pole strictly to the right of every other pole, if it exists.
    pub fn dominant_real(&self, tol: f64) -> Option<f64> {
        let lead = self.real.first()?.value;
        let margin = tol * (1.0 + lead.abs());
        let others = self
            .real
            .iter()
            .skip(1)
            .map(|p| p.value)
            .chain(self.complex.iter().map(|c| c.re));
        let beaten = others.into_iter().all(|x| lead - x > margin);
        beaten.then_some(lead)
    }

    /// Monic polynomial with exactly these roots.
    pub fn expand(&self) -> Polynomial {
        let mut q = Polynomial::constant(1.0);
        for p in &self.real {
            q = q.mul(&Polynomial::linear(p.value).pow(p.mult));
        }
        for c in &self.complex {
            q = q.mul(&Polynomial::quadratic(c.re, c.im).pow(c.mult));
        }
        q
    }
}

/// Partial-fraction coefficients in pole order. `real[i][r-1]` multiplies
/// `1/(s - lambda_i)^r`; `complex[j][r-1]` multiplies `1/(s - mu_j - i omega_j)^r`, its
/// conjugate multiplies the conjugate pole.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialFractions {
    pub real: Vec<Vec<f64>>,
    pub complex: Vec<Vec<C64>>,
}

impl PartialFractions {
    pub fn eval(&self, poles: &PoleMultiset, s: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (pole, cs) in poles.real().iter().zip(&self.real) {
            let inv = (s - pole.value).inv();
            let mut pw = inv;
            for c in cs {
                acc += pw * *c;
                pw *= inv;
            }
        }
        for (pair, cs) in poles.complex().iter().zip(&self.complex) {
            let inv = (s - pair.upper()).inv();
            let inv_c = (s - pair.upper().conj()).inv();
            let (mut pw, mut pw_c) = (inv, inv_c);
            for c in cs {
                acc += pw * c + pw_c * c.conj();
                pw *= inv;
                pw_c *= inv_c;
            }
        }
        acc
    }
}

/// Rational transform `p(s) / q(s)` with its poles and partial fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalLst {
    pub p: Polynomial,
    pub q: Polynomial,
    pub poles: PoleMultiset,
    pub pf: PartialFractions,
}

impl RationalLst {
    /// Normalizes, extracts poles and expands into partial fractions.
    pub fn from_coeffs(p: Polynomial, q: Polynomial) -> Result<Self> {
        Self::from_coeffs_with_tol(p, q, DEFAULT_TOL_CLUSTER)
    }

    pub fn from_coeffs_with_tol(p: Polynomial, q: Polynomial, tol_cluster: f64) -> Result<Self> {
        let (p, q) = normalize_with_tol(&p, &q, tol_cluster)?;
        let poles = roots(&q, tol_cluster)?;
        let pf = partial_fractions(&p, &q, &poles)?;
        Ok(Self { p, q, poles, pf })
    }

    /// Builds the transform from poles and partial-fraction coefficients given directly.
    pub fn from_partial_fractions(poles: PoleMultiset, pf: PartialFractions) -> Result<Self> {
        if pf.real.len() != poles.real().len() || pf.complex.len() != poles.complex().len() {
            return Err(PhError::DimensionMismatch(
                "one coefficient list per pole is required".into(),
            ));
        }
        let lens_ok = poles
            .real()
            .iter()
            .zip(&pf.real)
            .all(|(p, c)| p.mult == c.len())
            && poles
                .complex()
                .iter()
                .zip(&pf.complex)
                .all(|(p, c)| p.mult == c.len());
        if !lens_ok {
            return Err(PhError::DimensionMismatch(
                "coefficient count must equal pole multiplicity".into(),
            ));
        }
        let basis = pf_basis(&poles);
        let unknowns = pf_unknowns(&pf);
        let n = poles.order();
        let mut p = vec![0.0; n];
        for (col, x) in basis.iter().zip(&unknowns) {
            for k in 0..n {
                p[k] += col[k] * x;
            }
        }
        Ok(Self {
            p: Polynomial::new(p),
            q: poles.expand(),
            poles,
            pf,
        })
    }

    /// Algebraic degree `n`.
    pub fn order(&self) -> usize {
        self.q.degree().unwrap_or(0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.p.eval(s) / self.q.eval(s)
    }

    pub fn eval_c(&self, s: C64) -> C64 {
        self.p.eval_c(s) / self.q.eval_c(s)
    }

    pub fn eval_pf(&self, s: C64) -> C64 {
        self.pf.eval(&self.poles, s)
    }

    /// True when `s` is within `gap` of any pole.
    pub fn near_pole(&self, s: C64, gap: f64) -> bool {
        self.poles
            .roots_with_mult()
            .iter()
            .any(|(r, _)| (s - r).norm() < gap)
    }
}

fn pf_unknowns(pf: &PartialFractions) -> Vec<f64> {
    let mut x: Vec<f64> = pf.real.iter().flatten().copied().collect();
    for cs in &pf.complex {
        for c in cs {
            x.push(c.re);
            x.push(c.im);
        }
    }
    x
}

/// Columns of the real linear map from partial-fraction unknowns to numerator coefficients.
fn pf_basis(poles: &PoleMultiset) -> Vec<Vec<f64>> {
    let n = poles.order();
    let roots = poles.roots_with_mult();
    // q(s) / (s - z)^r as a complex polynomial
    let reduced = |target: usize, r: usize| -> Vec<C64> {
        let mut acc = vec![C64::new(1.0, 0.0)];
        for (k, (z, m)) in roots.iter().enumerate() {
            let e = if k == target { m - r } else { *m };
            for _ in 0..e {
                acc = cpoly_mul(&acc, &[-*z, C64::new(1.0, 0.0)]);
            }
        }
        acc.resize(n, C64::new(0.0, 0.0));
        acc
    };
    let mut cols = Vec::with_capacity(n);
    for (i, pole) in poles.real().iter().enumerate() {
        for r in 1..=pole.mult {
            cols.push(reduced(i, r).iter().map(|c| c.re).collect());
        }
    }
    let offset = poles.real().len();
    for (j, pair) in poles.complex().iter().enumerate() {
        // upper roots sit at offset + 2j in roots_with_mult
        for r in 1..=pair.mult {
            let t = reduced(offset + 2 * j, r);
            cols.push(t.iter().map(|c| 2.0 * c.re).collect());
            cols.push(t.iter().map(|c| -2.0 * c.im).collect());
        }
    }
    cols
}

/// Makes `q` monic and cancels roots shared by `p` and `q`.
pub fn normalize(p: &Polynomial, q: &Polynomial) -> Result<(Polynomial, Polynomial)> {
    normalize_with_tol(p, q, DEFAULT_TOL_CLUSTER)
}

pub fn normalize_with_tol(
    p: &Polynomial,
    q: &Polynomial,
    tol_cluster: f64,
) -> Result<(Polynomial, Polynomial)> {
    if q.is_zero() {
        return Err(PhError::ZeroDenominator);
    }
    if q.coeffs()[0] == 0.0 {
        return Err(PhError::ZeroPole);
    }
    let lead = q.leading();
    let mut p = p.scale(1.0 / lead);
    let mut q = q.scale(1.0 / lead);
    loop {
        if p.degree().unwrap_or(0) == 0 || q.degree().unwrap_or(0) == 0 {
            break;
        }
        let Some(common) = common_root(&p, &q, tol_cluster)? else {
            break;
        };
        if common.im == 0.0 {
            p = p.div_linear(common.re);
            q = q.div_linear(common.re);
        } else {
            p = p.div_quadratic(common.re, common.im);
            q = q.div_quadratic(common.re, common.im);
        }
    }
    let (dp, dq) = (p.degree().unwrap_or(0), q.degree().unwrap_or(0));
    if !p.is_zero() && dp >= dq {
        return Err(PhError::DegreeViolation { num: dp, den: dq });
    }
    Ok((p, q))
}

/// Closest pair of roots of `p` and `q` within tolerance; complex results have `im > 0`.
fn common_root(p: &Polynomial, q: &Polynomial, tol: f64) -> Result<Option<C64>> {
    let rp = roots(p, tol)?.roots_with_mult();
    let rq = roots(q, tol)?.roots_with_mult();
    let mut best: Option<(f64, C64)> = None;
    for (a, _) in &rp {
        for (b, _) in &rq {
            if a.im < 0.0 || b.im < 0.0 {
                continue;
            }
            let d = (a - b).norm();
            if d <= tol * (1.0 + b.norm()) && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *b));
            }
        }
    }
    Ok(best.map(|(_, r)| r))
}

/// Clustered roots of `q` as a pole multiset.
pub fn roots(q: &Polynomial, tol_cluster: f64) -> Result<PoleMultiset> {
    let deg = q.degree().ok_or(PhError::ZeroDenominator)?;
    if deg == 0 {
        return Ok(PoleMultiset::default());
    }
    let q = q.monic();
    let raw = raw_roots(&q);
    let groups = cluster_roots(&q, &raw, tol_cluster);

    let mut real = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for g in &groups {
        let c = refine_multiple_root(&q, centroid(g), g.len(), tol_cluster);
        if c.im.abs() <= tol_cluster * (1.0 + c.norm()) {
            real.push(RealPole {
                value: c.re,
                mult: g.len(),
            });
        } else if c.im > 0.0 {
            upper.push((c, g.len()));
        } else {
            lower.push((c, g.len()));
        }
    }
    if upper.len() != lower.len() {
        return Err(PhError::ClusterAmbiguity(format!(
            "{} upper-half-plane clusters but {} lower",
            upper.len(),
            lower.len()
        )));
    }
    let mut complex = Vec::new();
    let mut used = vec![false; lower.len()];
    for (u, m) in &upper {
        let pick = lower
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .min_by(|a, b| {
                (a.1 .0.conj() - u)
                    .norm()
                    .total_cmp(&(b.1 .0.conj() - u).norm())
            });
        let Some((k, (l, ml))) = pick else {
            return Err(PhError::ClusterAmbiguity("unpaired complex root".into()));
        };
        if ml != m || (l.conj() - u).norm() > 1e3 * tol_cluster * (1.0 + u.norm()) {
            return Err(PhError::ClusterAmbiguity(format!(
                "root {u} has no consistent conjugate partner"
            )));
        }
        used[k] = true;
        complex.push(ComplexPair {
            re: 0.5 * (u.re + l.re),
            im: 0.5 * (u.im - l.im),
            mult: *m,
        });
    }
    PoleMultiset::new(real, complex)
}

/// Newton on `q^(m-1)`, where an `m`-fold root is simple, starting from the cluster centroid.
fn refine_multiple_root(q: &Polynomial, c: C64, m: usize, tol: f64) -> C64 {
    let mut c = c;
    if c.im.abs() <= tol * (1.0 + c.norm()) {
        c.im = 0.0;
    }
    if m == 1 {
        return c;
    }
    let mut t = q.taylor_at(c);
    for _ in 0..8 {
        if t[m].norm() == 0.0 {
            break;
        }
        let mut next = c - t[m - 1] / (t[m] * m as f64);
        if c.im == 0.0 {
            next.im = 0.0;
        }
        let tn = q.taylor_at(next);
        if tn[m - 1].norm() >= t[m - 1].norm() {
            break;
        }
        c = next;
        t = tn;
    }
    c
}

fn centroid(g: &[C64]) -> C64 {
    g.iter().sum::<C64>() / g.len() as f64
}

/// Companion-matrix eigenvalues of a monic polynomial, each polished by one Newton step.
fn raw_roots(q: &Polynomial) -> Vec<C64> {
    let c = q.coeffs();
    let n = c.len() - 1;
    if n == 1 {
        return vec![C64::new(-c[0], 0.0)];
    }
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -c[i];
    }
    balance(&mut comp);
    let dq = q.derivative();
    comp.complex_eigenvalues()
        .iter()
        .map(|&r| {
            let d = dq.eval_c(r);
            if d.norm() == 0.0 {
                return r;
            }
            let polished = r - q.eval_c(r) / d;
            if q.eval_c(polished).norm() < q.eval_c(r).norm() {
                polished
            } else {
                r
            }
        })
        .collect()
}

/// Diagonal similarity scaling by powers of two so row and column norms are comparable.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for _ in 0..100 {
        let mut done = true;
        for i in 0..n {
            let col: f64 = (0..n).filter(|&k| k != i).map(|k| m[(k, i)].abs()).sum();
            let row: f64 = (0..n).filter(|&k| k != i).map(|k| m[(i, k)].abs()).sum();
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let (mut c, mut r) = (col, row);
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c > r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) < 0.95 * (col + row) {
                done = false;
                for k in 0..n {
                    m[(i, k)] /= f;
                    m[(k, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Expected scatter radius of an `m`-fold root at `c` under rounding of the coefficients.
fn multiple_root_radius(q: &Polynomial, c: C64, m: usize) -> f64 {
    let taylor = q.taylor_at(c);
    let r = c.norm();
    let scale: f64 = q
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, a)| a.abs() * r.powi(k as i32))
        .sum();
    let am = taylor
        .get(m)
        .map_or(0.0, |a| a.norm())
        .max(f64::MIN_POSITIVE);
    20.0 * (f64::EPSILON * scale / am).powf(1.0 / m as f64)
}

fn cluster_roots(q: &Polynomial, raw: &[C64], tol: f64) -> Vec<Vec<C64>> {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let scale = 1.0 + raw[i].norm().max(raw[j].norm());
            if (raw[i] - raw[j]).norm() <= tol * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<C64>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(raw[i]);
    }

    // merge clusters that together look like one perturbed multiple root
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let merged: Vec<C64> = groups[i].iter().chain(&groups[j]).copied().collect();
                let c = centroid(&merged);
                let spread = merged.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
                if spread <= multiple_root_radius(q, c, merged.len()) {
                    let d = (centroid(&groups[i]) - centroid(&groups[j])).norm();
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let g = groups.remove(j);
        groups[i].extend(g);
    }
    groups
}

/// Solves for partial-fraction coefficients by matching numerator coefficients.
pub fn partial_fractions(
    p: &Polynomial,
    q: &Polynomial,
    poles: &PoleMultiset,
) -> Result<PartialFractions> {
    let n = poles.order();
    if q.degree() != Some(n) {
        return Err(PhError::DimensionMismatch(format!(
            "pole multiset has order {n} but q has degree {:?}",
            q.degree()
        )));
    }
    if p.coeffs().len() > n {
        return Err(PhError::DegreeViolation {
            num: p.degree().unwrap_or(0),
            den: n,
        });
    }
    let basis = pf_basis(poles);
    let m = DMatrix::from_fn(n, n, |r, c| basis[c][r]);
    let lead = q.leading();
    let rhs = DVector::from_fn(n, |k, _| p.coeffs().get(k).copied().unwrap_or(0.0) / lead);
    let x = m.lu().solve(&rhs).ok_or(PhError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PhError::SingularSystem);
    }
    let mut k = 0;
    let mut pf = PartialFractions::default();
    for pole in poles.real() {
        pf.real.push(x.as_slice()[k..k + pole.mult].to_vec());
        k += pole.mult;
    }
    for pair in poles.complex() {
        let cs = (0..pair.mult)
            .map(|r| C64::new(x[k + 2 * r], x[k + 2 * r + 1]))
            .collect();
        pf.complex.push(cs);
        k += 2 * pair.mult;
    }
    Ok(pf)
}

/// Pass/fail per admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// (A1) every coefficient is a finite real number.
    pub real_coefficients: bool,
    /// (A2) no root of `p` coincides with a pole and every top-order coefficient is nonzero.
    pub coprime: bool,
    pub l_at_zero: f64,
    /// (A3, first half) `|L(0) - 1| <= 1e-12`.
    pub l0_is_one: bool,
    /// (A3, second half) a unique, real, negative pole of maximal real part.
    pub dominant_pole: Option<f64>,
    pub dominance: bool,
    /// Max relative gap between partial fractions and `p/q` at `s = 1..16`.
    pub pf_max_rel_err: f64,
    pub admissible: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        if self.messages.is_empty() {
            "admissible".to_string()
        } else {
            self.messages.join("; ")
        }
    }
}

pub fn validate_lst(lst: &RationalLst) -> ValidationReport {
    validate_lst_with_tol(lst, DEFAULT_TOL_CLUSTER)
}

pub fn validate_lst_with_tol(lst: &RationalLst, tol_cluster: f64) -> ValidationReport {
    let mut messages = Vec::new();
    let real_coefficients = lst
        .p
        .coeffs()
        .iter()
        .chain(lst.q.coeffs())
        .all(|c| c.is_finite());
    if !real_coefficients {
        messages.push("(A1) non-finite coefficient".to_string());
    }

    let mut coprime = true;
    if lst.p.degree().unwrap_or(0) >= 1 {
        match roots(&lst.p, tol_cluster) {
            Ok(zeros) => {
                for (z, _) in zeros.roots_with_mult() {
                    if lst.near_pole(z, tol_cluster * (1.0 + z.norm())) {
                        coprime = false;
                        messages.push(format!("(A2) p and q share the root {z}"));
                    }
                }
            }
            Err(e) => {
                coprime = false;
                messages.push(format!("(A2) could not factor p: {e}"));
            }
        }
    }
    if lst.p.is_zero() {
        coprime = false;
        messages.push("(A2) numerator is zero".to_string());
    }
    let scale = lst
        .pf
        .real
        .iter()
        .flatten()
        .map(|c| c.abs())
        .chain(lst.pf.complex.iter().flatten().map(|c| c.norm()))
        .fold(0.0, f64::max);
    let top_zero = lst
        .pf
        .real
        .iter()
        .map(|cs| cs.last().map_or(0.0, |c| c.abs()))
        .chain(
            lst.pf
                .complex
                .iter()
                .map(|cs| cs.last().map_or(0.0, |c| c.norm())),
        )
        .any(|c| c <= 1e-14 * scale);
    if top_zero && coprime {
        coprime = false;
        messages.push("(A2) a top-order partial-fraction coefficient vanishes".to_string());
    }

    let l_at_zero = lst.eval(0.0);
    let l0_is_one = (l_at_zero - 1.0).abs() <= L0_TOL;
    if !l0_is_one {
        messages.push(format!("(A3) L(0) = {l_at_zero} is not 1"));
    }
    let dominant_pole = lst.poles.dominant_real(tol_cluster);
    let dominance = matches!(dominant_pole, Some(l) if l < 0.0);
    match dominant_pole {
        None => messages.push("(A3) no unique real pole of maximal real part".to_string()),
        Some(l) if l >= 0.0 => messages.push(format!("(A3) dominant pole {l} is not negative")),
        _ => {}
    }

    let mut pf_max_rel_err: f64 = 0.0;
    for m in 1..=16 {
        let s = C64::new(m as f64, 0.0);
        if lst.near_pole(s, 1e-6) {
            continue;
        }
        let direct = lst.eval_c(s);
        let err = (lst.eval_pf(s) - direct).norm() / direct.norm().max(f64::MIN_POSITIVE);
        pf_max_rel_err = pf_max_rel_err.max(err);
    }

    ValidationReport {
        real_coefficients,
        coprime,
        l_at_zero,
        l0_is_one,
        dominant_pole,
        dominance,
        pf_max_rel_err,
        admissible: real_coefficients && coprime && l0_is_one && dominance,
        messages,
    }
}
