//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use phmin::io::{load_input, Input};
use phmin::jordan::{JordanBlock, RealJordanForm};
use phmin::qp::QpSpec;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn load_data(name: &str) -> Input {
    load_input(&data_path(name)).expect("data file parses")
}

/// `min 1/2 x'Hx + c'x` over `lo <= x <= hi`, `a'x = b`.
#[derive(Debug, Clone)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub a: DVector<f64>,
    pub b: f64,
}

impl BoxQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    pub fn spec(&self) -> QpSpec {
        let n = self.c.len();
        let mut g = DMatrix::zeros(2 * n, n);
        let mut gv = DVector::zeros(2 * n);
        for i in 0..n {
            g[(2 * i, i)] = 1.0;
            gv[2 * i] = self.hi[i];
            g[(2 * i + 1, i)] = -1.0;
            gv[2 * i + 1] = -self.lo[i];
        }
        QpSpec::new(self.h.clone(), self.c.clone())
            .with_eq(
                DMatrix::from_row_slice(1, n, self.a.as_slice()),
                DVector::from_element(1, self.b),
            )
            .with_ineq(g, gv)
    }
}

/// PSD Hessian of random rank, random box, and an equality through a point of the box.
pub fn random_box_qp<R: Rng>(rng: &mut R, n: usize) -> BoxQp {
    let rank = rng.random_range(0..=n);
    let m = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * m;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let lo = DVector::from_fn(n, |_, _| rng.random_range(-2.0..0.0));
    let hi = DVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.1..3.0));
    let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |i, _| lo[i] + rng.random::<f64>() * (hi[i] - lo[i]));
    let b = a.dot(&x0);
    BoxQp { h, c, lo, hi, a, b }
}

/// Optimal value by enumerating which bound (if any) every variable sits at.
///
/// For each of the `3^n` patterns the free variables solve the equality-constrained KKT
/// system by pseudo-inverse; consistent, feasible solutions are candidates. Some optimum
/// always lies on a face where that solution is unique, so the minimum over candidates is
/// the optimal value.
pub fn brute_force_qp(qp: &BoxQp) -> f64 {
    let n = qp.c.len();
    let mut best = f64::INFINITY;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut pattern = vec![0u8; n];
        let mut k = code;
        for p in pattern.iter_mut() {
            *p = (k % 3) as u8;
            k /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match pattern[i] {
                1 => x[i] = qp.lo[i],
                2 => x[i] = qp.hi[i],
                _ => {}
            }
        }
        let f = free.len();
        // [H_FF a_F; a_F' 0] [x_F; nu] = [-c_F - H_F. x; b - a'x]
        let mut kkt = DMatrix::zeros(f + 1, f + 1);
        let mut rhs = DVector::zeros(f + 1);
        let hx = &qp.h * &x;
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                kkt[(r, s)] = qp.h[(i, j)];
            }
            kkt[(r, f)] = qp.a[i];
            kkt[(f, r)] = qp.a[i];
            rhs[r] = -qp.c[i] - hx[i];
        }
        rhs[f] = qp.b - qp.a.dot(&x);
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-10 * svd.singular_values.max().max(1.0)) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        for (r, &i) in free.iter().enumerate() {
            x[i] = sol[r];
        }
        let feasible = (0..n).all(|i| x[i] >= qp.lo[i] - 1e-9 && x[i] <= qp.hi[i] + 1e-9)
            && (qp.a.dot(&x) - qp.b).abs() <= 1e-9;
        if feasible {
            best = best.min(qp.objective(&x));
        }
    }
    best
}

/// Random real Jordan form of total dimension `n`, with poles in the left half-plane.
pub fn random_jordan<R: Rng>(rng: &mut R, n: usize) -> RealJordanForm {
    let mut blocks = Vec::new();
    let mut left = n;
    while left > 0 {
        let complex = left >= 2 && rng.random_bool(0.4);
        if complex {
            let m = rng.random_range(1..=left / 2);
            blocks.push(JordanBlock::Complex {
                mu: rng.random_range(-4.0..-0.2),
                omega: rng.random_range(0.1..2.0),
                m,
            });
            left -= 2 * m;
        } else {
            let m = rng.random_range(1..=left);
            blocks.push(JordanBlock::Real {
                lambda: rng.random_range(-4.0..-0.2),
                m,
            });
            left -= m;
        }
    }
    RealJordanForm::from_blocks(blocks).expect("blocks are well formed")
}
