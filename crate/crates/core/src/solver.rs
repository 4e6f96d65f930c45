//! Coordinate-descent estimation for glasso and collaborative glasso.
//!
//! Both estimators cycle over the variables `i = 0..p`, solving a penalized
//! regression of column `i` of `S` on the sub-matrix `W_{\i\i}` and writing
//! the fitted `W_{\i\i} beta_i` back into row and column `i` of `W`. They
//! differ only in the coordinate rule used inside each row:
//!
//! * glasso: `r = S_ji - sum_{k != j} W_jk beta_k`, then soft-threshold at
//!   `lambda` and divide by `W_jj`.
//! * coglasso: with `alpha = 1/(1+c)` and `A` the layer of coordinate `j`,
//!   `r = alpha S_ji - sum_{k in A, k != j} W_jk beta_k
//!        - alpha (1 - c) sum_{k not in A} W_jk beta_k`,
//!   then soft-threshold at `alpha Lambda_ji` and divide by `W_jj`.
//!
//! The row objective minimized by the coglasso rule is, up to a constant,
//! `(1+c)/2 b'Wb - c b'W_cross b - b's + sum_j Lambda_j |b_j|`, where
//! `W_cross` keeps only the entries of `W_{\i\i}` linking different layers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::EmpiricalCovariance;
use crate::error::{Error, Result};
use crate::model::{Adjacency, CoglassoFit, Hyperparameters, Layer, LayerPartition, PenaltyMatrix};

/// Stopping rules. Tolerances are relative to the mean absolute
/// off-diagonal entry of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            inner_tol: 1e-4,
            max_outer: 100,
            max_inner: 1000,
        }
    }
}

impl ConvergenceConfig {
    /// Near machine-precision stopping, for optimality checks.
    pub fn tight() -> Self {
        Self {
            outer_tol: 1e-12,
            inner_tol: 1e-13,
            max_outer: 10_000,
            max_inner: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::Parameter("convergence tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Parameter("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn soft_threshold(r: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if r > t {
        r - t
    } else if r < -t {
        r + t
    } else {
        0.0
    }
}

/// One row regression: variable `i` regressed on the remaining `p - 1`.
#[derive(Debug, Clone)]
pub struct RowProblem {
    pub i: usize,
    /// Column `i` of `S` without entry `i`.
    pub s_i: DVector<f64>,
    /// `W` with row and column `i` removed.
    pub w_sub: DMatrix<f64>,
    /// Penalties `Lambda_ji` for the remaining coordinates.
    pub lambda_i: DVector<f64>,
    /// Layer of each remaining coordinate.
    pub layers: Vec<Layer>,
    /// Scale that inner tolerances are multiplied by.
    pub tol_scale: f64,
}

impl RowProblem {
    pub fn new(
        i: usize,
        s_i: DVector<f64>,
        w_sub: DMatrix<f64>,
        lambda_i: DVector<f64>,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let n = s_i.len();
        if w_sub.shape() != (n, n) || lambda_i.len() != n || layers.len() != n {
            return Err(Error::Shape(format!(
                "row problem sizes disagree: s_i {n}, w_sub {:?}, lambda_i {}, layers {}",
                w_sub.shape(),
                lambda_i.len(),
                layers.len()
            )));
        }
        Ok(Self {
            i,
            s_i,
            w_sub,
            lambda_i,
            layers,
            tol_scale: 1.0,
        })
    }

    pub fn with_tol_scale(mut self, scale: f64) -> Self {
        self.tol_scale = scale;
        self
    }

    /// Carves the row-`i` problem out of the current working state.
    pub fn extract(i: usize, s: &DMatrix<f64>, w: &DMatrix<f64>, penalty: &PenaltyMatrix) -> Self {
        let p = s.nrows();
        let partition = penalty.partition();
        let idx: Vec<usize> = (0..p).filter(|&k| k != i).collect();
        let n = p - 1;
        let s_i = DVector::from_fn(n, |a, _| s[(idx[a], i)]);
        let w_sub = DMatrix::from_fn(n, n, |a, b| w[(idx[a], idx[b])]);
        let lambda_i = DVector::from_fn(n, |a, _| penalty.get(idx[a], i));
        let layers = idx.iter().map(|&k| partition.layer(k)).collect();
        Self {
            i,
            s_i,
            w_sub,
            lambda_i,
            layers,
            tol_scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s_i.len()
    }

    fn pivot(&self, j: usize) -> Result<f64> {
        let wjj = self.w_sub[(j, j)];
        if !(wjj > 0.0) {
            return Err(Error::NumericalDegeneracy(format!(
                "nonpositive pivot W_jj={wjj} at coordinate {j} of row {}",
                self.i
            )));
        }
        Ok(wjj)
    }

    /// Partial residual of the coglasso rule for coordinate `j`, before
    /// thresholding.
    pub fn coglasso_residual(&self, beta: &DVector<f64>, j: usize, c: f64) -> f64 {
        let alpha = 1.0 / (1.0 + c);
        let layer_j = self.layers[j];
        let mut same = 0.0;
        let mut other = 0.0;
        for k in 0..self.dim() {
            if k == j {
                continue;
            }
            let term = self.w_sub[(j, k)] * beta[k];
            if self.layers[k] == layer_j {
                same += term;
            } else {
                other += term;
            }
        }
        alpha * self.s_i[j] - same - alpha * (1.0 - c) * other
    }

    /// Coglasso row objective (constant term dropped).
    pub fn objective(&self, beta: &DVector<f64>, c: f64) -> f64 {
        let n = self.dim();
        let mut quad = 0.0;
        let mut cross = 0.0;
        for a in 0..n {
            for b in 0..n {
                let t = beta[a] * self.w_sub[(a, b)] * beta[b];
                quad += t;
                if self.layers[a] != self.layers[b] {
                    cross += t;
                }
            }
        }
        let lin = beta.dot(&self.s_i);
        let pen: f64 = beta.iter().zip(self.lambda_i.iter()).map(|(b, l)| l * b.abs()).sum();
        0.5 * (1.0 + c) * quad - c * cross - lin + pen
    }
}

/// Plain glasso update for coordinate `j`.
pub fn glasso_coordinate_update(problem: &RowProblem, beta: &DVector<f64>, j: usize, lambda: f64) -> Result<f64> {
    let wjj = problem.pivot(j)?;
    let mut r = problem.s_i[j];
    for k in 0..problem.dim() {
        if k != j {
            r -= problem.w_sub[(j, k)] * beta[k];
        }
    }
    Ok(soft_threshold(r, lambda) / wjj)
}

/// Collaborative update for coordinate `j`; penalty taken from `lambda_i[j]`.
pub fn coglasso_coordinate_update(
    problem: &RowProblem,
    beta: &DVector<f64>,
    j: usize,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let wjj = problem.pivot(j)?;
    let r = problem.coglasso_residual(beta, j, hyper.c);
    Ok(soft_threshold(r, hyper.alpha() * problem.lambda_i[j]) / wjj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSolution {
    pub beta: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Which coordinate rule a row (and a whole fit) uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Glasso { lambda: f64 },
    Coglasso { hyper: Hyperparameters },
}

/// Cyclic coordinate descent on one row with the collaborative rule.
pub fn solve_row(
    problem: &RowProblem,
    hyper: &Hyperparameters,
    cfg: &ConvergenceConfig,
    warm_start: &DVector<f64>,
) -> Result<RowSolution> {
    solve_row_with(problem, Rule::Coglasso { hyper: *hyper }, cfg, warm_start)
}

/// Cyclic coordinate descent on one row with the plain glasso rule.
pub fn solve_row_glasso(
    problem: &RowProblem,
    lambda: f64,
    cfg: &ConvergenceConfig,
    warm_start: &DVector<f64>,
) -> Result<RowSolution> {
    solve_row_with(problem, Rule::Glasso { lambda }, cfg, warm_start)
}

/// Shared row loop. Keeps running sums `W_sub beta` split by layer so each
/// coordinate update costs O(1) unless the coefficient moves.
pub fn solve_row_with(
    problem: &RowProblem,
    rule: Rule,
    cfg: &ConvergenceConfig,
    warm_start: &DVector<f64>,
) -> Result<RowSolution> {
    let n = problem.dim();
    if warm_start.len() != n {
        return Err(Error::Shape(format!(
            "warm start has length {}, row problem has {n}",
            warm_start.len()
        )));
    }
    if warm_start.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("warm start contains non-finite values".into()));
    }
    for j in 0..n {
        problem.pivot(j)?;
    }

    let mut beta = warm_start.clone();
    let w = &problem.w_sub;
    let threshold = cfg.inner_tol * problem.tol_scale;

    match rule {
        Rule::Glasso { lambda } => {
            // acc[m] = sum_k W_mk beta_k
            let mut acc = w * &beta;
            for sweep in 1..=cfg.max_inner {
                let mut max_delta = 0.0f64;
                for j in 0..n {
                    let old = beta[j];
                    let wjj = w[(j, j)];
                    let r = problem.s_i[j] - (acc[j] - wjj * old);
                    let new = soft_threshold(r, lambda) / wjj;
                    let delta = new - old;
                    if delta != 0.0 {
                        beta[j] = new;
                        acc.axpy(delta, &w.column(j), 1.0);
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta <= threshold {
                    return Ok(RowSolution { beta, sweeps: sweep, converged: true });
                }
            }
        }
        Rule::Coglasso { hyper } => {
            let alpha = hyper.alpha();
            let cross_weight = alpha * (1.0 - hyper.c);
            let in_x: Vec<bool> = problem.layers.iter().map(|&l| l == Layer::X).collect();
            // acc_x[m] = sum_{k in X} W_mk beta_k, likewise acc_z.
            let mut acc_x = DVector::zeros(n);
            let mut acc_z = DVector::zeros(n);
            for k in 0..n {
                if beta[k] != 0.0 {
                    let target = if in_x[k] { &mut acc_x } else { &mut acc_z };
                    target.axpy(beta[k], &w.column(k), 1.0);
                }
            }
            for sweep in 1..=cfg.max_inner {
                let mut max_delta = 0.0f64;
                for j in 0..n {
                    let old = beta[j];
                    let wjj = w[(j, j)];
                    let (same, other) = if in_x[j] { (acc_x[j], acc_z[j]) } else { (acc_z[j], acc_x[j]) };
                    let r = alpha * problem.s_i[j] - (same - wjj * old) - cross_weight * other;
                    let new = soft_threshold(r, alpha * problem.lambda_i[j]) / wjj;
                    let delta = new - old;
                    if delta != 0.0 {
                        beta[j] = new;
                        let target = if in_x[j] { &mut acc_x } else { &mut acc_z };
                        target.axpy(delta, &w.column(j), 1.0);
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta <= threshold {
                    return Ok(RowSolution { beta, sweeps: sweep, converged: true });
                }
            }
        }
    }
    Ok(RowSolution {
        beta,
        sweeps: cfg.max_inner,
        converged: false,
    })
}

/// Collaborative graphical lasso on `S`.
pub fn fit(
    s: &EmpiricalCovariance,
    hyper: &Hyperparameters,
    partition: LayerPartition,
    cfg: &ConvergenceConfig,
) -> Result<CoglassoFit> {
    fit_with(s, Rule::Coglasso { hyper: *hyper }, partition, cfg, None)
}

/// Plain graphical lasso with a scalar penalty (diagonal penalized too).
pub fn fit_glasso(s: &EmpiricalCovariance, lambda: f64, cfg: &ConvergenceConfig) -> Result<CoglassoFit> {
    let p = s.dim();
    // Glasso has no layers; a nominal split keeps the fit record uniform.
    let partition = if p >= 2 {
        LayerPartition::new(p - 1, 1)?
    } else {
        return Err(Error::Shape("glasso needs at least 2 variables".into()));
    };
    fit_with(s, Rule::Glasso { lambda }, partition, cfg, None)
}

/// Full estimator with an optional warm start from a previous fit of the
/// same dimension (its `W` off-diagonal and `B_hat` seed this run).
pub fn fit_with(
    s: &EmpiricalCovariance,
    rule: Rule,
    partition: LayerPartition,
    cfg: &ConvergenceConfig,
    warm: Option<&CoglassoFit>,
) -> Result<CoglassoFit> {
    cfg.validate()?;
    let p = s.dim();
    if partition.p() != p {
        return Err(Error::Shape(format!(
            "partition covers {} variables but S is {p}x{p}",
            partition.p()
        )));
    }
    if p < 2 {
        return Err(Error::Shape("need at least 2 variables".into()));
    }
    let hyper = match rule {
        Rule::Glasso { lambda } => Hyperparameters::glasso(lambda)?,
        Rule::Coglasso { hyper } => {
            hyper.validate()?;
            hyper
        }
    };
    let penalty = hyper.penalty(partition);
    let s_mat = s.matrix();
    let scale = s.mean_abs_off_diagonal().max(f64::MIN_POSITIVE);

    let (mut w, mut b_hat) = match warm {
        Some(prev) if prev.w.nrows() == p && prev.b_hat.nrows() == p => (prev.w.clone(), prev.b_hat.clone()),
        Some(_) => return Err(Error::Shape("warm-start fit has a different dimension".into())),
        None => (s_mat.clone(), DMatrix::zeros(p, p)),
    };
    for i in 0..p {
        w[(i, i)] = s_mat[(i, i)] + hyper.lambda_w;
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut w_prev = w.clone();
    for sweep in 1..=cfg.max_outer {
        iterations = sweep;
        w_prev.copy_from(&w);
        let mut rows_converged = true;
        for i in 0..p {
            let problem = RowProblem::extract(i, s_mat, &w, &penalty).with_tol_scale(scale);
            let warm_beta = reduce(&b_hat.column(i).into_owned(), i);
            let sol = solve_row_with(&problem, rule, cfg, &warm_beta)?;
            rows_converged &= sol.converged;
            let w_i = &problem.w_sub * &sol.beta;
            for (a, k) in (0..p).filter(|&k| k != i).enumerate() {
                if !w_i[a].is_finite() {
                    return Err(Error::Divergence {
                        sweep,
                        lambda_w: hyper.lambda_w,
                        lambda_b: hyper.lambda_b,
                        c: hyper.c,
                    });
                }
                w[(k, i)] = w_i[a];
                w[(i, k)] = w_i[a];
                b_hat[(k, i)] = sol.beta[a];
            }
            b_hat[(i, i)] = 0.0;
        }
        let mut change = 0.0;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    change += (w[(i, j)] - w_prev[(i, j)]).abs();
                }
            }
        }
        change /= (p * (p - 1)) as f64;
        if change <= cfg.outer_tol * scale && rows_converged {
            converged = true;
            break;
        }
    }

    let theta_hat = recover_precision(&w, &b_hat)?;
    let inverse_residual = identity_residual(&w, &theta_hat);
    let adjacency = extract_adjacency(&b_hat, 0.0);
    Ok(CoglassoFit {
        w,
        b_hat,
        theta_hat,
        adjacency,
        hyper,
        partition,
        iterations,
        converged,
        inverse_residual,
    })
}

/// Drops entry `i` of a length-`p` vector.
fn reduce(v: &DVector<f64>, i: usize) -> DVector<f64> {
    DVector::from_iterator(v.len() - 1, v.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &x)| x))
}

/// Precision matrix from `W` and the row coefficients, column by column:
/// `theta_ii = 1 / (W_ii - W_i' beta_i)`, `theta_{\i,i} = -beta_i theta_ii`,
/// then averaged with its transpose.
pub fn recover_precision(w: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = w.nrows();
    if w.shape() != (p, p) || b_hat.shape() != (p, p) {
        return Err(Error::Shape("W and B_hat must be square and of equal size".into()));
    }
    let mut theta = DMatrix::zeros(p, p);
    for i in 0..p {
        let mut dot = 0.0;
        for k in 0..p {
            if k != i {
                dot += w[(k, i)] * b_hat[(k, i)];
            }
        }
        let denom = w[(i, i)] - dot;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NumericalDegeneracy(format!(
                "precision recovery denominator {denom} at variable {i}"
            )));
        }
        let tii = 1.0 / denom;
        theta[(i, i)] = tii;
        for k in 0..p {
            if k != i {
                theta[(k, i)] = -b_hat[(k, i)] * tii;
            }
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (theta[(i, j)] + theta[(j, i)]);
            theta[(i, j)] = v;
            theta[(j, i)] = v;
        }
    }
    Ok(theta)
}

/// `max |A B - I|`.
pub fn identity_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let prod = a * b;
    let p = prod.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    worst
}

/// OR-symmetrized support of `B_hat`: an edge wherever either direction
/// exceeds `eps` in magnitude.
pub fn extract_adjacency(b_hat: &DMatrix<f64>, eps: f64) -> Adjacency {
    Adjacency::from_support(b_hat, eps)
}

/// Worst stationarity violations of a fit, evaluated against its final `W`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// Max over nonzero coefficients of the subgradient equation residual.
    pub active: f64,
    /// Max over zero coefficients of `|r| - alpha Lambda`, floored at 0.
    pub inactive_excess: f64,
}

impl KktReport {
    pub fn within(&self, tol: f64) -> bool {
        self.active <= tol && self.inactive_excess <= tol
    }
}

/// KKT check of every row regression.
///
/// The check replays one sweep from the final state: row `i` is tested
/// against the `W` it would see at its turn, and its stored coefficients are
/// then written back exactly as the solver does. For `c = 0` this equals a
/// check against the final `W`; for `c > 0` later rows overwrite entries that
/// earlier rows wrote, so the final `W` is not the matrix any single row was
/// solved against.
pub fn kkt_report(s: &EmpiricalCovariance, fit: &CoglassoFit) -> KktReport {
    let p = s.dim();
    let penalty = fit.hyper.penalty(fit.partition);
    let alpha = fit.hyper.alpha();
    let mut w = fit.w.clone();
    let mut report = KktReport::default();
    for i in 0..p {
        let problem = RowProblem::extract(i, s.matrix(), &w, &penalty);
        let beta = reduce(&fit.b_hat.column(i).into_owned(), i);
        for j in 0..problem.dim() {
            let r = problem.coglasso_residual(&beta, j, fit.hyper.c);
            let bound = alpha * problem.lambda_i[j];
            if beta[j] != 0.0 {
                let res = (r - problem.w_sub[(j, j)] * beta[j] - beta[j].signum() * bound).abs();
                report.active = report.active.max(res);
            } else {
                report.inactive_excess = report.inactive_excess.max(r.abs() - bound);
            }
        }
        let w_i = &problem.w_sub * &beta;
        for (a, k) in (0..p).filter(|&k| k != i).enumerate() {
            w[(k, i)] = w_i[a];
            w[(i, k)] = w_i[a];
        }
    }
    report.inactive_excess = report.inactive_excess.max(0.0);
    report
}
