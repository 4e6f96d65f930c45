//! Domain types shared across the estimator, the selection procedures and
//! the simulator.
//!
//! Variables are always ordered with layer X first: indices `0..p_x` belong
//! to X and `p_x..p` to Z. Loaders reorder columns to respect this.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted collaboration value.
pub const MAX_COLLABORATION: f64 = 1e6;
/// Smallest accepted `alpha = 1 / (1 + c)`.
pub const MIN_ALPHA: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    X,
    Z,
}

impl Layer {
    pub fn tag(self) -> &'static str {
        match self {
            Layer::X => "X",
            Layer::Z => "Z",
        }
    }
}

/// Split of `p` variables into a leading X block of `p_x` and a trailing Z
/// block of `p_z` variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPartition {
    p_x: usize,
    p_z: usize,
}

impl LayerPartition {
    pub fn new(p_x: usize, p_z: usize) -> Result<Self> {
        if p_x == 0 || p_z == 0 {
            return Err(Error::Parameter(format!(
                "both layers need at least one variable (p_x={p_x}, p_z={p_z})"
            )));
        }
        Ok(Self { p_x, p_z })
    }

    pub fn p_x(&self) -> usize {
        self.p_x
    }

    pub fn p_z(&self) -> usize {
        self.p_z
    }

    pub fn p(&self) -> usize {
        self.p_x + self.p_z
    }

    /// Layer of variable `i` (0-based). Panics if `i >= p`.
    #[inline]
    pub fn layer(&self, i: usize) -> Layer {
        assert!(i < self.p(), "variable index {i} out of range for p={}", self.p());
        if i < self.p_x {
            Layer::X
        } else {
            Layer::Z
        }
    }

    #[inline]
    pub fn same_layer(&self, i: usize, j: usize) -> bool {
        (i < self.p_x) == (j < self.p_x)
    }
}

/// Collaboration and penalty settings for one coglasso fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub c: f64,
}

impl Hyperparameters {
    pub fn new(lambda_w: f64, lambda_b: f64, c: f64) -> Result<Self> {
        let hyper = Self {
            lambda_w,
            lambda_b,
            c,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    /// Plain glasso settings: one penalty everywhere and no collaboration.
    pub fn glasso(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_w", self.lambda_w), ("lambda_b", self.lambda_b)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::Parameter(format!(
                "collaboration value c must be finite and nonnegative, got {}",
                self.c
            )));
        }
        if self.c > MAX_COLLABORATION || self.alpha() < MIN_ALPHA {
            return Err(Error::Parameter(format!(
                "collaboration value c={} exceeds the supported maximum {MAX_COLLABORATION}",
                self.c
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 + self.c)
    }

    pub fn penalty(&self, partition: LayerPartition) -> PenaltyMatrix {
        PenaltyMatrix {
            lambda_w: self.lambda_w,
            lambda_b: self.lambda_b,
            partition,
        }
    }
}

/// Block penalty matrix: `lambda_w` on same-layer entries, `lambda_b` across
/// layers. Entries are computed on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyMatrix {
    lambda_w: f64,
    lambda_b: f64,
    partition: LayerPartition,
}

pub fn make_penalty_matrix(
    lambda_w: f64,
    lambda_b: f64,
    partition: LayerPartition,
) -> Result<PenaltyMatrix> {
    for (name, v) in [("lambda_w", lambda_w), ("lambda_b", lambda_b)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Parameter(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    Ok(PenaltyMatrix {
        lambda_w,
        lambda_b,
        partition,
    })
}

impl PenaltyMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.partition.same_layer(i, j) {
            self.lambda_w
        } else {
            self.lambda_b
        }
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    pub fn partition(&self) -> LayerPartition {
        self.partition
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.partition.p();
        DMatrix::from_fn(p, p, |i, j| self.get(i, j))
    }
}

/// Symmetric 0/1 edge matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    dim: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            bits: vec![false; dim * dim],
        }
    }

    /// Builds from a predicate over unordered pairs; `f` is called with `i < j`.
    pub fn from_pairs(dim: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut adj = Self::empty(dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if f(i, j) {
                    adj.set(i, j, true);
                }
            }
        }
        adj
    }

    /// Builds from the off-diagonal support of a symmetric matrix.
    pub fn from_support(m: &DMatrix<f64>, eps: f64) -> Self {
        Self::from_pairs(m.nrows(), |i, j| m[(i, j)].abs() > eps || m[(j, i)].abs() > eps)
    }

    /// Validates and converts a dense 0/1 matrix.
    pub fn from_dense(m: &DMatrix<u8>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dim = m.nrows();
        for i in 0..dim {
            if m[(i, i)] != 0 {
                return Err(Error::Shape(format!("adjacency has a self-loop at {i}")));
            }
            for j in 0..dim {
                if m[(i, j)] > 1 {
                    return Err(Error::Shape(format!("adjacency entry ({i},{j}) is not 0/1")));
                }
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::Shape(format!("adjacency is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self::from_pairs(dim, |i, j| m[(i, j)] == 1))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        assert!(i != j, "self-loops are not representable");
        self.bits[i * self.dim + j] = on;
        self.bits[j * self.dim + i] = on;
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim).flat_map(move |i| ((i + 1)..self.dim).filter_map(move |j| self.get(i, j).then_some((i, j))))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn to_dense(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j) as u8)
    }

    /// Number of edges inside the same layer and across layers.
    pub fn layer_edge_counts(&self, partition: LayerPartition) -> (usize, usize) {
        self.edges().fold((0, 0), |(w, b), (i, j)| {
            if partition.same_layer(i, j) {
                (w + 1, b)
            } else {
                (w, b + 1)
            }
        })
    }
}

/// Result of one coordinate-descent estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoglassoFit {
    /// Penalized covariance estimate.
    pub w: DMatrix<f64>,
    /// Column `i` holds the row-regression coefficients of variable `i`, with
    /// a structural zero at position `i`.
    pub b_hat: DMatrix<f64>,
    pub theta_hat: DMatrix<f64>,
    pub adjacency: Adjacency,
    pub hyper: Hyperparameters,
    pub partition: LayerPartition,
    pub iterations: usize,
    pub converged: bool,
    /// `max |W * theta_hat - I|`, recorded after precision recovery.
    pub inverse_residual: f64,
}

/// Simulated precision matrix with its covariance and true graph.
#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub theta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub adjacency: Adjacency,
    pub partition: LayerPartition,
    /// Diagonal constant finally added to theta.
    pub epsilon: f64,
    /// Number of times epsilon was doubled to reach positive definiteness.
    pub epsilon_doublings: u32,
    pub scenario_id: Option<u8>,
}
