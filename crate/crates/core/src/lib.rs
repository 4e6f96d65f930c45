//! Collaborative graphical lasso (coglasso) for two-layer Gaussian graphical
//! models, with stability-based model selection, a synthetic multi-layer
//! benchmark and structure-recovery metrics.

pub mod bench;
pub mod cli;
pub mod covariance;
pub mod error;
pub mod model;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod selection;
pub mod simgen;
pub mod solver;

pub use covariance::{default_lambda_grid, empirical_covariance, EmpiricalCovariance};
pub use error::{Error, Result};
pub use model::{Adjacency, CoglassoFit, GroundTruthModel, Hyperparameters, Layer, LayerPartition, PenaltyMatrix};
pub use solver::{fit, fit_glasso, ConvergenceConfig};
