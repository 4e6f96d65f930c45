//! Empirical covariance and penalty grids.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Sample covariance with `1/n` normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    s: DMatrix<f64>,
    standardized: bool,
}

impl EmpiricalCovariance {
    /// Wraps an existing matrix after checking symmetry and the diagonal.
    pub fn from_matrix(s: DMatrix<f64>, standardized: bool) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() == 0 {
            return Err(Error::Shape(format!(
                "covariance must be square and non-empty, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let p = s.nrows();
        for i in 0..p {
            let d = s[(i, i)];
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::DegenerateInput(format!(
                    "covariance diagonal entry {i} must be positive, got {d}"
                )));
            }
            for j in (i + 1)..p {
                if !s[(i, j)].is_finite() || (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::DegenerateInput(format!(
                        "covariance is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { s, standardized })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn standardized(&self) -> bool {
        self.standardized
    }

    /// Largest absolute off-diagonal entry (0 for a diagonal matrix).
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        let mut m = 0.0f64;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    m = m.max(self.s[(i, j)].abs());
                }
            }
        }
        m
    }

    /// Mean absolute off-diagonal entry; the scale for convergence tolerances.
    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        if p < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    sum += self.s[(i, j)].abs();
                }
            }
        }
        sum / (p * (p - 1)) as f64
    }
}

/// Covariance of the columns of an `n x p` data matrix.
///
/// With `standardize` the result is the correlation matrix; its diagonal is
/// set to exactly 1.
pub fn empirical_covariance(data: &DMatrix<f64>, standardize: bool) -> Result<EmpiricalCovariance> {
    let (n, p) = data.shape();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 samples, got {n}")));
    }
    if p == 0 {
        return Err(Error::DegenerateInput("data has no columns".into()));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "non-finite value at row {}, column {}",
            pos % n,
            pos / n
        )));
    }

    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let mut s = centered.transpose() * &centered / n as f64;

    if standardize {
        let sd: Vec<f64> = (0..p).map(|j| s[(j, j)].sqrt()).collect();
        if let Some(j) = sd.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateInput(format!(
                "column {j} is constant and cannot be standardized"
            )));
        }
        for j in 0..p {
            for i in 0..p {
                s[(i, j)] = if i == j { 1.0 } else { (s[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0) };
            }
        }
    } else if let Some(j) = (0..p).find(|&j| !(s[(j, j)] > 0.0)) {
        return Err(Error::DegenerateInput(format!("column {j} has zero variance")));
    }

    // Symmetrize exactly; the product above is symmetric up to rounding.
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    EmpiricalCovariance::from_matrix(s, standardize)
}

/// Descending log-spaced penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    /// Set when S had no off-diagonal signal and `lambda_max` fell back to 1.
    pub fallback_warning: Option<String>,
}

pub const DEFAULT_GRID_COUNT: usize = 10;
pub const DEFAULT_GRID_RATIO: f64 = 0.1;

/// Log-spaced grid from `max |S_ij|` (i != j) down to `ratio` times that.
pub fn default_lambda_grid(s: &EmpiricalCovariance, count: usize, ratio: f64) -> Result<LambdaGrid> {
    if count < 2 {
        return Err(Error::Parameter(format!("grid count must be at least 2, got {count}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!("grid ratio must lie in (0, 1), got {ratio}")));
    }
    let mut lambda_max = s.max_abs_off_diagonal();
    let mut fallback_warning = None;
    if lambda_max <= 0.0 {
        let msg = "all off-diagonal covariances are zero; lambda_max set to 1.0".to_string();
        log::warn!("{msg}");
        fallback_warning = Some(msg);
        lambda_max = 1.0;
    }
    Ok(LambdaGrid {
        values: log_grid(lambda_max, count, ratio),
        fallback_warning,
    })
}

pub(crate) fn log_grid(top: f64, count: usize, ratio: f64) -> Vec<f64> {
    let step = ratio.ln() / (count - 1) as f64;
    (0..count)
        .map(|k| match k {
            0 => top,
            k if k == count - 1 => top * ratio,
            k => top * (step * k as f64).exp(),
        })
        .collect()
}
