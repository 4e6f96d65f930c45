//! Stability-based hyperparameter selection.
//!
//! A sweep fits the model on repeated subsamples at every value of one axis
//! and keeps the densest value whose edge instability stays under a
//! threshold. XStARS alternates such sweeps over the within-layer penalty,
//! the between-layer penalty and the collaboration value until two
//! consecutive sweeps leave their axis unchanged.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::empirical_covariance;
use crate::error::{Error, Result};
use crate::model::{Adjacency, CoglassoFit, Hyperparameters, LayerPartition};
use crate::rng;
use crate::solver::{fit_with, ConvergenceConfig, Rule};

pub const DEFAULT_NUM_SUBSAMPLES: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_MAX_ITER: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub num_subsamples: usize,
    pub subsample_size: usize,
    pub instability_threshold: f64,
    pub seed: u64,
    /// Fit on correlations instead of covariances.
    pub standardize: bool,
    /// Draw fresh subsamples for every axis value instead of once per sweep.
    pub redraw_per_value: bool,
}

/// `min(floor(10 sqrt(n)), n - 1)`.
pub fn default_subsample_size(n: usize) -> usize {
    let b = (10.0 * (n as f64).sqrt()).floor() as usize;
    b.min(n.saturating_sub(1))
}

impl StabilityConfig {
    pub fn for_sample_size(n: usize, seed: u64) -> Self {
        StabilityConfig {
            num_subsamples: DEFAULT_NUM_SUBSAMPLES,
            subsample_size: default_subsample_size(n),
            instability_threshold: DEFAULT_THRESHOLD,
            seed,
            standardize: true,
            redraw_per_value: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.subsample_size < 2 || self.subsample_size >= n {
            return Err(Error::Parameter(format!(
                "subsample size must satisfy 2 <= b < n = {n}, got {}",
                self.subsample_size
            )));
        }
        if self.num_subsamples < 2 {
            return Err(Error::Parameter("at least 2 subsamples are needed".into()));
        }
        if !(self.instability_threshold > 0.0 && self.instability_threshold < 0.5) {
            return Err(Error::Parameter(format!(
                "instability threshold must lie in (0, 0.5), got {}",
                self.instability_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    LambdaW,
    LambdaB,
    C,
    /// The single penalty of plain glasso.
    Lambda,
}

impl Axis {
    /// Penalties make graphs sparser as they grow, collaboration denser.
    fn ascending_is_denser(self) -> bool {
        matches!(self, Axis::C)
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::LambdaW => "lambda_w",
            Axis::LambdaB => "lambda_b",
            Axis::C => "c",
            Axis::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrace {
    pub axis: Axis,
    /// Axis values along the sparse to dense path.
    pub values: Vec<f64>,
    pub instability: Vec<f64>,
    pub monotonized: Vec<f64>,
    pub chosen_index: usize,
}

impl SweepTrace {
    pub fn chosen(&self) -> f64 {
        self.values[self.chosen_index]
    }

    /// Builds a trace from raw instabilities already in path order.
    pub fn from_path(axis: Axis, values: Vec<f64>, instability: Vec<f64>, threshold: f64) -> Result<Self> {
        if values.is_empty() || values.len() != instability.len() {
            return Err(Error::Parameter(format!(
                "sweep needs matching non-empty values and instabilities, got {} and {}",
                values.len(),
                instability.len()
            )));
        }
        let mut monotonized = Vec::with_capacity(instability.len());
        let mut running = f64::NEG_INFINITY;
        for &d in &instability {
            running = running.max(d);
            monotonized.push(running);
        }
        let chosen_index = monotonized.iter().rposition(|&d| d <= threshold).unwrap_or(0);
        Ok(SweepTrace {
            axis,
            values,
            instability,
            monotonized,
            chosen_index,
        })
    }
}

/// Current selection; `lambda_w` is negative until the first sweep sets it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub c: f64,
}

impl Triplet {
    fn with(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::LambdaW => self.lambda_w = value,
            Axis::LambdaB => self.lambda_b = value,
            Axis::C => self.c = value,
            Axis::Lambda => {
                self.lambda_w = value;
                self.lambda_b = value;
                self.c = 0.0;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub lambda_w_hat: f64,
    pub lambda_b_hat: f64,
    pub c_hat: f64,
    pub traces: Vec<SweepTrace>,
    /// Number of sweeps run; each loop pass performs one.
    pub iterations: usize,
    pub converged: bool,
}

impl SelectionResult {
    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        Hyperparameters::new(self.lambda_w_hat, self.lambda_b_hat, self.c_hat)
    }
}

/// `b` distinct indices out of `0..n`, sorted.
pub fn subsample_indices(n: usize, b: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if b >= n {
        return Err(Error::Parameter(format!("subsample size {b} must be smaller than n = {n}")));
    }
    let mut idx = sample_indices(rng, n, b).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Mean over unordered pairs of `2 p (1 - p)`, with `p` the fraction of
/// graphs containing the pair.
pub fn edge_instability(adjacencies: &[Adjacency]) -> Result<f64> {
    if adjacencies.len() < 2 {
        return Err(Error::Parameter("instability needs at least 2 graphs".into()));
    }
    let dim = adjacencies[0].dim();
    if let Some(bad) = adjacencies.iter().find(|a| a.dim() != dim) {
        return Err(Error::Shape(format!("graphs of size {dim} and {} mixed", bad.dim())));
    }
    let pairs = dim * dim.saturating_sub(1) / 2;
    if pairs == 0 {
        return Ok(0.0);
    }
    let n = adjacencies.len() as f64;
    let mut total = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let hits = adjacencies.iter().filter(|a| a.get(i, j)).count() as f64;
            let freq = hits / n;
            total += 2.0 * freq * (1.0 - freq);
        }
    }
    Ok(total / pairs as f64)
}

fn path_order(axis: Axis, values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Parameter(format!("{} grid is empty", axis.name())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("{} grid has a non-finite value", axis.name())));
    }
    let mut path = values.to_vec();
    if axis.ascending_is_denser() {
        path.sort_by(f64::total_cmp);
    } else {
        path.sort_by(|a, b| b.total_cmp(a));
    }
    Ok(path)
}

fn rows(data: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), data.ncols(), |r, c| data[(idx[r], c)])
}

/// Generic sweep: `rule_at(v)` gives the estimator at path value `v`.
fn sweep_path(
    data: &DMatrix<f64>,
    axis: Axis,
    path: Vec<f64>,
    cfg: &StabilityConfig,
    partition: LayerPartition,
    conv: &ConvergenceConfig,
    rule_at: impl Fn(f64) -> Result<Rule> + Sync,
) -> Result<SweepTrace> {
    let n = data.nrows();
    cfg.validate(n)?;
    let m = path.len();
    let subsample = |stream: u64| subsample_indices(n, cfg.subsample_size, &mut rng::stream(cfg.seed, stream));

    // graphs[k][v]: subsample k at path position v
    let graphs: Vec<Vec<Adjacency>> = (0..cfg.num_subsamples)
        .into_par_iter()
        .map(|k| {
            let shared = if cfg.redraw_per_value { None } else { Some(empirical_covariance(&rows(data, &subsample(k as u64)?), cfg.standardize)?) };
            let mut warm: Option<CoglassoFit> = None;
            let mut out = Vec::with_capacity(m);
            for (v, &value) in path.iter().enumerate() {
                let fresh;
                let s = match &shared {
                    Some(s) => s,
                    None => {
                        let stream = (v * cfg.num_subsamples + k) as u64;
                        fresh = empirical_covariance(&rows(data, &subsample(stream)?), cfg.standardize)?;
                        &fresh
                    }
                };
                let fit = fit_with(s, rule_at(value)?, partition, conv, warm.as_ref())
                    .map_err(|e| e.context(format!("{} = {value} on subsample {k}", axis.name())))?;
                out.push(fit.adjacency.clone());
                // Warm starts only make sense on a shared subsample.
                if shared.is_some() {
                    warm = Some(fit);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let instability = (0..m)
        .map(|v| {
            let at_v: Vec<Adjacency> = graphs.iter().map(|g| g[v].clone()).collect();
            edge_instability(&at_v)
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTrace::from_path(axis, path, instability, cfg.instability_threshold)
}

/// StARS sweep of one coglasso axis with the other two held at `fixed`.
pub fn stars_sweep(
    data: &DMatrix<f64>,
    axis: Axis,
    axis_values: &[f64],
    fixed: Triplet,
    cfg: &StabilityConfig,
    partition: LayerPartition,
    conv: &ConvergenceConfig,
) -> Result<SweepTrace> {
    if axis == Axis::Lambda {
        return Err(Error::Parameter("use stars_glasso for the single-penalty axis".into()));
    }
    if data.ncols() != partition.p() {
        return Err(Error::Shape(format!(
            "data has {} columns but the partition covers {}",
            data.ncols(),
            partition.p()
        )));
    }
    // The placeholder for lambda_w must never reach the solver.
    if axis != Axis::LambdaW && fixed.lambda_w < 0.0 {
        return Err(Error::Parameter("lambda_w must be selected before the other axes".into()));
    }
    let path = path_order(axis, axis_values)?;
    sweep_path(data, axis, path, cfg, partition, conv, |v| {
        let t = fixed.with(axis, v);
        Ok(Rule::Coglasso {
            hyper: Hyperparameters::new(t.lambda_w, t.lambda_b, t.c)?,
        })
    })
}

/// Classic single-penalty StARS for glasso.
pub fn stars_glasso(
    data: &DMatrix<f64>,
    lambdas: &[f64],
    cfg: &StabilityConfig,
    conv: &ConvergenceConfig,
) -> Result<SweepTrace> {
    let p = data.ncols();
    if p < 2 {
        return Err(Error::Shape("glasso needs at least 2 variables".into()));
    }
    let path = path_order(Axis::Lambda, lambdas)?;
    let partition = LayerPartition::new(p - 1, 1)?;
    sweep_path(data, Axis::Lambda, path, cfg, partition, conv, |v| Ok(Rule::Glasso { lambda: v }))
}

pub struct Grids<'a> {
    pub lambda_w: &'a [f64],
    pub lambda_b: &'a [f64],
    pub c: &'a [f64],
}

/// The alternating loop with an injectable sweep, which receives the axis,
/// its grid and the current triplet and returns a trace whose chosen value
/// is a member of that grid.
pub fn xstars_with(
    grids: &Grids,
    max_iter: usize,
    mut sweep: impl FnMut(Axis, &[f64], Triplet) -> Result<SweepTrace>,
) -> Result<SelectionResult> {
    for (axis, grid) in [(Axis::LambdaW, grids.lambda_w), (Axis::LambdaB, grids.lambda_b), (Axis::C, grids.c)] {
        path_order(axis, grid)?;
    }
    let min_b = grids.lambda_b.iter().copied().fold(f64::INFINITY, f64::min);
    let max_c = grids.c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut current = Triplet {
        lambda_w: -1.0,
        lambda_b: min_b,
        c: max_c,
    };
    let mut converged = 0;
    let mut iter = 0;
    let mut traces = Vec::new();
    let cycle = [(Axis::LambdaW, grids.lambda_w), (Axis::LambdaB, grids.lambda_b), (Axis::C, grids.c)];
    while converged < 2 && iter < max_iter {
        let (axis, grid) = cycle[iter % 3];
        let trace = sweep(axis, grid, current)?;
        let chosen = trace.chosen();
        if !grid.contains(&chosen) {
            return Err(Error::Parameter(format!("{} sweep chose {chosen}, not a grid member", axis.name())));
        }
        let previous = match axis {
            Axis::LambdaW => current.lambda_w,
            Axis::LambdaB => current.lambda_b,
            _ => current.c,
        };
        if chosen == previous {
            converged += 1;
        } else {
            converged = 0;
        }
        current = current.with(axis, chosen);
        log::debug!("sweep {}: {} -> {chosen} (stable count {converged})", iter + 1, axis.name());
        traces.push(trace);
        iter += 1;
    }
    Ok(SelectionResult {
        lambda_w_hat: current.lambda_w,
        lambda_b_hat: current.lambda_b,
        c_hat: current.c,
        traces,
        iterations: iter,
        converged: converged >= 2,
    })
}

/// XStARS over the three coglasso axes.
pub fn xstars(
    data: &DMatrix<f64>,
    grids: &Grids,
    cfg: &StabilityConfig,
    partition: LayerPartition,
    conv: &ConvergenceConfig,
) -> Result<SelectionResult> {
    xstars_with(grids, DEFAULT_MAX_ITER, |axis, grid, fixed| {
        stars_sweep(data, axis, grid, fixed, cfg, partition, conv)
    })
}
