//! Structure-recovery scores and precision-matrix divergence.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Adjacency;

/// Counts over unordered off-diagonal pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(truth: &Adjacency, estimate: &Adjacency) -> Result<Confusion> {
    if truth.dim() != estimate.dim() {
        return Err(Error::Shape(format!(
            "truth is {0}x{0} but estimate is {1}x{1}",
            truth.dim(),
            estimate.dim()
        )));
    }
    let mut c = Confusion::default();
    let p = truth.dim();
    for i in 0..p {
        for j in (i + 1)..p {
            match (truth.get(i, j), estimate.get(i, j)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

/// Harmonic mean of precision and recall; 0 when there is no true positive.
pub fn f1(c: &Confusion) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let tp = c.tp as f64;
    let precision = tp / (tp + c.fp as f64);
    let recall = tp / (tp + c.fn_ as f64);
    2.0 * precision * recall / (precision + recall)
}

/// Matthews correlation; 0 when any factor of the denominator vanishes.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.iter().any(|&f| f == 0.0) {
        return 0.0;
    }
    (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
}

/// Divergence between the zero-mean Gaussians with precision matrices
/// `theta` and `theta_hat`, `(tr(theta theta_hat^-1) + tr(theta_hat theta^-1) - p) / 2`.
///
/// This is the symmetrized Kullback-Leibler divergence plus the constant
/// `p / 2`, so identical arguments score `p / 2` rather than 0. The offset does
/// not change which of two estimates is closer.
pub fn kld(theta: &DMatrix<f64>, theta_hat: &DMatrix<f64>) -> Result<f64> {
    if theta.shape() != theta_hat.shape() || theta.nrows() != theta.ncols() {
        return Err(Error::Shape(format!(
            "kld needs two square matrices of equal size, got {:?} and {:?}",
            theta.shape(),
            theta_hat.shape()
        )));
    }
    let p = theta.nrows();
    let inv = pd_inverse(theta)?;
    let inv_hat = pd_inverse(theta_hat)?;
    Ok(0.5 * (trace_of_product(theta, &inv_hat) + trace_of_product(theta_hat, &inv) - p as f64))
}

/// `tr(A B)` without forming the product.
fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// Inverse through a Cholesky factorization; fails with the smallest
/// eigenvalue when the matrix is not positive definite.
pub fn pd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cholesky(m).map(|c| c.inverse())
}

pub(crate) fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(m),
    })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
