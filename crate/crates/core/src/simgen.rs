//! Synthetic two-layer ground truth and data.
//!
//! Each layer gets a cluster network and a positive definite precision block
//! built on it. The cross-layer block comes from a sparse regression of
//! independently simulated layer-Z data on layer-X data, tuned to a target
//! fraction of nonzero coefficients. The assembled matrix is made positive
//! definite by a diagonal shift and inverted to give the sampling covariance.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::log_grid;
use crate::error::{Error, Result};
use crate::metrics::{cholesky, min_eigenvalue};
use crate::model::{Adjacency, GroundTruthModel, LayerPartition};
use crate::rng;
use crate::solver::soft_threshold;

pub const DEFAULT_EDGE_VALUE: f64 = 0.3;
const MAX_EPSILON_DOUBLINGS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: Option<u8>,
    pub p_x: usize,
    pub clusters_x: usize,
    pub within_prob_x: f64,
    pub extra_edges_x: usize,
    pub p_z: usize,
    pub clusters_z: usize,
    pub within_prob_z: f64,
    pub extra_edges_z: usize,
    pub epsilon: f64,
    pub target_activation: f64,
    pub edge_value: f64,
    pub n_regression: usize,
    pub n_replicate: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, prob) in [("within_prob_x", self.within_prob_x), ("within_prob_z", self.within_prob_z)] {
            if !(prob > 0.0 && prob <= 1.0) {
                return Err(Error::Parameter(format!("{name} must lie in (0, 1], got {prob}")));
            }
        }
        if [self.p_x, self.p_z, self.clusters_x, self.clusters_z, self.n_regression, self.n_replicate].contains(&0) {
            return Err(Error::Parameter("scenario sizes and counts must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.target_activation) {
            return Err(Error::Parameter("target activation must lie in [0, 1]".into()));
        }
        if self.edge_value == 0.0 || !self.edge_value.is_finite() {
            return Err(Error::Parameter("edge value must be finite and nonzero".into()));
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<LayerPartition> {
        LayerPartition::new(self.p_x, self.p_z)
    }
}

/// The three benchmark scenarios. Layer Z is the same in all of them.
pub fn scenario_preset(id: u8) -> Result<ScenarioSpec> {
    let (p_x, within_prob_x, extra_edges_x, epsilon) = match id {
        1 => (40, 1.0 / 4.0, 7, 0.3),
        2 => (80, 1.0 / 6.0, 13, 0.3),
        3 => (130, 1.0 / 12.0, 17, 0.4),
        other => return Err(Error::Parameter(format!("unknown scenario {other}; expected 1, 2 or 3"))),
    };
    Ok(ScenarioSpec {
        scenario_id: Some(id),
        p_x,
        clusters_x: 3,
        within_prob_x,
        extra_edges_x,
        p_z: 20,
        clusters_z: 2,
        within_prob_z: 0.35,
        extra_edges_z: 4,
        epsilon,
        target_activation: 0.40,
        edge_value: DEFAULT_EDGE_VALUE,
        n_regression: 100,
        n_replicate: 50,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    pub adjacency: Adjacency,
    pub cluster_assignment: Vec<usize>,
    pub extra_edge_list: Vec<(usize, usize)>,
}

/// Cluster network: `k` contiguous clusters of near-equal size, Bernoulli
/// edges inside clusters, then exactly `extra_edges` uniformly drawn edges
/// between different clusters.
pub fn cluster_graph(
    p: usize,
    k_clusters: usize,
    within_prob: f64,
    extra_edges: usize,
    rng: &mut impl Rng,
) -> Result<ClusterGraph> {
    if k_clusters == 0 || k_clusters > p {
        return Err(Error::Parameter(format!("cannot split {p} nodes into {k_clusters} clusters")));
    }
    if !(0.0..=1.0).contains(&within_prob) {
        return Err(Error::Parameter(format!("within-cluster probability {within_prob} outside [0, 1]")));
    }
    let base = p / k_clusters;
    let remainder = p % k_clusters;
    let mut cluster_assignment = Vec::with_capacity(p);
    for c in 0..k_clusters {
        let size = base + usize::from(c < remainder);
        cluster_assignment.extend(std::iter::repeat(c).take(size));
    }

    let mut adjacency = Adjacency::empty(p);
    let mut between = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if cluster_assignment[i] == cluster_assignment[j] {
                if rng.gen_bool(within_prob) {
                    adjacency.set(i, j, true);
                }
            } else {
                between.push((i, j));
            }
        }
    }
    if extra_edges > between.len() {
        return Err(Error::Parameter(format!(
            "{extra_edges} between-cluster edges requested but only {} pairs exist",
            between.len()
        )));
    }
    let mut extra_edge_list: Vec<(usize, usize)> =
        sample_indices(rng, between.len(), extra_edges).into_iter().map(|k| between[k]).collect();
    extra_edge_list.sort_unstable();
    for &(i, j) in &extra_edge_list {
        adjacency.set(i, j, true);
    }
    Ok(ClusterGraph {
        adjacency,
        cluster_assignment,
        extra_edge_list,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeSign {
    #[default]
    Positive,
    /// Each edge independently takes either sign.
    Random,
}

/// Precision block on a graph: off-diagonal `edge_value` on edges and a
/// uniform diagonal `|lambda_min(off)| + 0.1 + |edge_value|`.
pub fn block_precision(graph: &ClusterGraph, edge_value: f64, sign: EdgeSign, rng: &mut impl Rng) -> DMatrix<f64> {
    let p = graph.adjacency.dim();
    let mut theta = DMatrix::zeros(p, p);
    for (i, j) in graph.adjacency.edges() {
        let v = match sign {
            EdgeSign::Positive => edge_value,
            EdgeSign::Random => {
                if rng.gen_bool(0.5) {
                    edge_value
                } else {
                    -edge_value
                }
            }
        };
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    }
    let shift = if p > 0 { min_eigenvalue(&theta).abs() } else { 0.0 } + 0.1 + edge_value.abs();
    for i in 0..p {
        theta[(i, i)] = shift;
    }
    theta
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBlock {
    /// `p_z x p_x` coefficients; becomes the Z-X block of the precision.
    pub b: DMatrix<f64>,
    pub activation: f64,
    pub penalty_used: f64,
    pub warning: Option<String>,
}

fn activation_of(b: &DMatrix<f64>) -> f64 {
    b.iter().filter(|v| **v != 0.0).count() as f64 / b.len() as f64
}

/// Default penalty path for [`sparse_multireg`]: 60 log-spaced values from
/// the smallest penalty that zeroes every coefficient down to 1e-3 of it.
pub fn default_regression_grid(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Vec<f64> {
    let xc = centered(x);
    let zc = centered(z);
    let n = x.nrows() as f64;
    let lambda_max = (xc.transpose() * zc).abs().max() / n;
    if lambda_max > 0.0 {
        log_grid(lambda_max, 60, 1e-3)
    } else {
        vec![0.0]
    }
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// L1-penalized multivariate regression `Z = B X + E`, one lasso per
/// response column, swept along `penalty_grid` (strong to weak). Returns the
/// coefficients whose nonzero fraction is closest to `target_activation`,
/// preferring the sparser fit on ties.
pub fn sparse_multireg(
    x_data: &DMatrix<f64>,
    z_data: &DMatrix<f64>,
    target_activation: f64,
    penalty_grid: &[f64],
) -> Result<RegressionBlock> {
    let n = x_data.nrows();
    if n < 2 || z_data.nrows() != n {
        return Err(Error::Shape(format!(
            "regression needs matching sample counts >= 2, got {} and {}",
            n,
            z_data.nrows()
        )));
    }
    if penalty_grid.is_empty() {
        return Err(Error::Parameter("penalty grid is empty".into()));
    }
    let xc = centered(x_data);
    let zc = centered(z_data);
    let (p_x, p_z) = (x_data.ncols(), z_data.ncols());
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p_x).map(|k| xc.column(k).norm_squared() / nf).collect();
    let gram = xc.transpose() * &xc / nf;
    let xtz = xc.transpose() * &zc / nf;

    let mut coef = DMatrix::<f64>::zeros(p_z, p_x);
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    for &lambda in penalty_grid {
        let columns: Vec<DVector<f64>> = (0..p_z)
            .into_par_iter()
            .map(|r| {
                // gradient bookkeeping: g_k = (X'z)_k/n - sum_m G_km b_m
                let mut b: DVector<f64> = coef.row(r).transpose();
                let mut grad = xtz.column(r) - &gram * &b;
                for _ in 0..2_000 {
                    let mut max_delta = 0.0f64;
                    for k in 0..p_x {
                        if col_sq[k] <= 0.0 {
                            continue;
                        }
                        let old = b[k];
                        let new = soft_threshold(grad[k] + col_sq[k] * old, lambda) / col_sq[k];
                        let delta = new - old;
                        if delta != 0.0 {
                            b[k] = new;
                            grad.axpy(-delta, &gram.column(k), 1.0);
                            max_delta = max_delta.max(delta.abs());
                        }
                    }
                    if max_delta < 1e-8 {
                        break;
                    }
                }
                b
            })
            .collect();
        for (r, b) in columns.iter().enumerate() {
            coef.set_row(r, &b.transpose());
        }
        let act = activation_of(&coef);
        let gap = (act - target_activation).abs();
        // Grid runs strong to weak, so keeping the first of equal gaps keeps the sparser fit.
        if best.as_ref().map_or(true, |(g, _, _)| gap < *g) {
            best = Some((gap, lambda, coef.clone()));
        } else if act > target_activation {
            // Weaker penalties only activate more; the rest of the path is worse.
            break;
        }
    }
    let (_, penalty_used, b) = best.expect("grid is non-empty");
    let activation = activation_of(&b);
    let warning = (activation == 0.0 && target_activation > 0.0).then(|| {
        let msg = "no coefficient was activated along the penalty grid".to_string();
        log::warn!("{msg}");
        msg
    });
    Ok(RegressionBlock {
        b,
        activation,
        penalty_used,
        warning,
    })
}

/// Assembles `[[theta_xx, B'], [B, theta_zz]] + epsilon I`, doubling
/// epsilon until the result is positive definite.
pub fn assemble_theta(
    theta_xx: &DMatrix<f64>,
    theta_zz: &DMatrix<f64>,
    block: &RegressionBlock,
    epsilon: f64,
) -> Result<GroundTruthModel> {
    let (p_x, p_z) = (theta_xx.nrows(), theta_zz.nrows());
    if theta_xx.ncols() != p_x || theta_zz.ncols() != p_z || block.b.shape() != (p_z, p_x) {
        return Err(Error::Shape(format!(
            "blocks do not fit: theta_xx {:?}, theta_zz {:?}, B {:?}",
            theta_xx.shape(),
            theta_zz.shape(),
            block.b.shape()
        )));
    }
    let partition = LayerPartition::new(p_x, p_z)?;
    let p = p_x + p_z;
    let mut base = DMatrix::zeros(p, p);
    base.view_mut((0, 0), (p_x, p_x)).copy_from(theta_xx);
    base.view_mut((p_x, p_x), (p_z, p_z)).copy_from(theta_zz);
    base.view_mut((p_x, 0), (p_z, p_x)).copy_from(&block.b);
    base.view_mut((0, p_x), (p_x, p_z)).copy_from(&block.b.transpose());

    let mut eps = epsilon;
    let mut doublings = 0;
    loop {
        let mut theta = base.clone();
        for i in 0..p {
            theta[(i, i)] += eps;
        }
        if let Ok(chol) = cholesky(&theta) {
            let mut sigma = chol.inverse();
            sigma = (&sigma + sigma.transpose()) * 0.5;
            let adjacency = Adjacency::from_support(&theta, 0.0);
            if doublings > 0 {
                log::info!("epsilon doubled {doublings} times to {eps} for positive definiteness");
            }
            return Ok(GroundTruthModel {
                theta,
                sigma,
                adjacency,
                partition,
                epsilon: eps,
                epsilon_doublings: doublings,
                scenario_id: None,
            });
        }
        if doublings == MAX_EPSILON_DOUBLINGS {
            return Err(Error::Generation(format!(
                "precision matrix still not positive definite after {doublings} doublings of epsilon (last {eps})"
            )));
        }
        eps *= 2.0;
        doublings += 1;
    }
}

/// `n` rows drawn from `N(0, sigma)` via the lower Cholesky factor.
pub fn sample_mvn(sigma: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    let chol = cholesky(sigma)?;
    let l = chol.l();
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((l * z).transpose())
}

/// Ground truth for a scenario, drawn from `rng`.
pub fn generate_ground_truth(spec: &ScenarioSpec, rng: &mut impl Rng) -> Result<GroundTruthModel> {
    spec.validate()?;
    let gx = cluster_graph(spec.p_x, spec.clusters_x, spec.within_prob_x, spec.extra_edges_x, rng)?;
    let gz = cluster_graph(spec.p_z, spec.clusters_z, spec.within_prob_z, spec.extra_edges_z, rng)?;
    let theta_xx = block_precision(&gx, spec.edge_value, EdgeSign::Positive, rng);
    let theta_zz = block_precision(&gz, spec.edge_value, EdgeSign::Positive, rng);
    let x = sample_mvn(&cholesky(&theta_xx)?.inverse(), spec.n_regression, rng)?;
    let z = sample_mvn(&cholesky(&theta_zz)?.inverse(), spec.n_regression, rng)?;
    let grid = default_regression_grid(&x, &z);
    let block = sparse_multireg(&x, &z, spec.target_activation, &grid)?;
    let mut truth = assemble_theta(&theta_xx, &theta_zz, &block, spec.epsilon)?;
    truth.scenario_id = spec.scenario_id;
    Ok(truth)
}

/// One ground truth per seed plus `num_replicates` datasets of
/// `n_replicate` rows, each from its own derived stream.
pub fn generate_replicates(
    spec: &ScenarioSpec,
    num_replicates: usize,
    seed: u64,
) -> Result<(GroundTruthModel, Vec<DMatrix<f64>>)> {
    let truth = generate_ground_truth(spec, &mut rng::stream(seed, 0))?;
    let datasets = (0..num_replicates)
        .into_par_iter()
        .map(|r| sample_mvn(&truth.sigma, spec.n_replicate, &mut rng::stream(seed, r as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, datasets))
}

/// Truth-side statistics used in reports and acceptance checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub min_eigenvalue: f64,
    pub cross_activation: f64,
    pub within_edges: usize,
    pub between_edges: usize,
}

pub fn summarize_truth(truth: &GroundTruthModel) -> TruthSummary {
    let (p_x, p_z) = (truth.partition.p_x(), truth.partition.p_z());
    let cross = truth.theta.view((p_x, 0), (p_z, p_x));
    let nonzero = cross.iter().filter(|v| **v != 0.0).count();
    let (within_edges, between_edges) = truth.adjacency.layer_edge_counts(truth.partition);
    TruthSummary {
        min_eigenvalue: min_eigenvalue(&truth.theta),
        cross_activation: nonzero as f64 / (p_x * p_z) as f64,
        within_edges,
        between_edges,
    }
}
