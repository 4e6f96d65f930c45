//! Test-only oracles and fixture generators. Nothing here calls into the
//! solver; the oracles recompute their quantities from definitions.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random correlation-like PD matrix: normalized Gram matrix of `m` random
/// samples, so off-diagonals are sizeable and the diagonal is 1.
pub fn random_correlation(p: usize, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..1.0));
    let g = a.transpose() * &a / m as f64;
    let d: Vec<f64> = (0..p).map(|i| g[(i, i)].sqrt()).collect();
    let mut s = DMatrix::from_fn(p, p, |i, j| g[(i, j)] / (d[i] * d[j]));
    for i in 0..p {
        s[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

pub fn random_spd(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    let mut m = a.transpose() * &a / p as f64;
    for i in 0..p {
        m[(i, i)] += 0.3;
    }
    m
}

/// Symmetric square root (and inverse square root) by eigendecomposition.
pub fn sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_root = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    (v * root * v.transpose(), v * inv_root * v.transpose())
}

/// Row objective written literally with matrix square roots:
/// 1/2 |W^-1/2 s - W^1/2 b|^2 + c/2 |(W^1/2)_X b_X - (W^1/2)_Z b_Z|^2 + sum lambda |b|.
pub struct LiteralRowObjective {
    pub root: DMatrix<f64>,
    pub inv_root: DMatrix<f64>,
    pub s: DVector<f64>,
    pub lambda: DVector<f64>,
    pub in_x: Vec<bool>,
    pub c: f64,
}

impl LiteralRowObjective {
    pub fn new(w: &DMatrix<f64>, s: DVector<f64>, lambda: DVector<f64>, in_x: Vec<bool>, c: f64) -> Self {
        let (root, inv_root) = sqrt_pair(w);
        Self { root, inv_root, s, lambda, in_x, c }
    }

    pub fn smooth(&self, b: &DVector<f64>) -> f64 {
        let fit = &self.inv_root * &self.s - &self.root * b;
        let bx = DVector::from_fn(b.len(), |k, _| if self.in_x[k] { b[k] } else { 0.0 });
        let bz = b - &bx;
        let collab = &self.root * bx - &self.root * bz;
        0.5 * fit.norm_squared() + 0.5 * self.c * collab.norm_squared()
    }

    pub fn value(&self, b: &DVector<f64>) -> f64 {
        self.smooth(b) + b.iter().zip(self.lambda.iter()).map(|(x, l)| l * x.abs()).sum::<f64>()
    }

    /// Global minimizer by enumerating every sign pattern. The smooth part is
    /// quadratic, so its gradient and Hessian come from unit-step central
    /// differences; each pattern yields a linear system whose sign-consistent
    /// solutions are candidate minimizers.
    pub fn brute_force_minimizer(&self) -> DVector<f64> {
        let n = self.s.len();
        let zero = DVector::zeros(n);
        let e = |k: usize| {
            let mut v = DVector::zeros(n);
            v[k] = 1.0;
            v
        };
        let g0 = DVector::from_fn(n, |a, _| (self.smooth(&e(a)) - self.smooth(&(-e(a)))) / 2.0);
        let h = DMatrix::from_fn(n, n, |a, b| {
            let (ea, eb) = (e(a), e(b));
            (self.smooth(&(&ea + &eb)) - self.smooth(&(&ea - &eb)) - self.smooth(&(&eb - &ea))
                + self.smooth(&(-&ea - &eb)))
                / 4.0
        });
        let mut best = zero.clone();
        let mut best_val = self.value(&zero);
        let patterns = 3usize.pow(n as u32);
        for code in 0..patterns {
            let mut sigma = vec![0i32; n];
            let mut rest = code;
            for s in sigma.iter_mut() {
                *s = (rest % 3) as i32 - 1;
                rest /= 3;
            }
            let active: Vec<usize> = (0..n).filter(|&k| sigma[k] != 0).collect();
            if active.is_empty() {
                continue;
            }
            let m = active.len();
            let h_aa = DMatrix::from_fn(m, m, |a, b| h[(active[a], active[b])]);
            let rhs = DVector::from_fn(m, |a, _| -g0[active[a]] - self.lambda[active[a]] * sigma[active[a]] as f64);
            let Some(sol) = h_aa.lu().solve(&rhs) else { continue };
            if active.iter().enumerate().any(|(a, &k)| (sol[a] > 0.0) != (sigma[k] > 0)) {
                continue;
            }
            let mut cand = DVector::zeros(n);
            for (a, &k) in active.iter().enumerate() {
                cand[k] = sol[a];
            }
            let v = self.value(&cand);
            if v < best_val {
                best_val = v;
                best = cand;
            }
        }
        best
    }
}

/// Dense inverse via LU, for oracle comparisons.
pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible fixture")
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
