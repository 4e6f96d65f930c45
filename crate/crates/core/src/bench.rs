//! Simulation benchmark: coglasso against glasso on synthetic scenarios.
//!
//! Per replicate, every grid point of both methods is scored against the
//! ground truth and the best value per metric is kept (the oracle network).
//! Optionally the networks picked by XStARS and StARS are scored too.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{default_lambda_grid, empirical_covariance, EmpiricalCovariance};
use crate::error::{Error, Result};
use crate::metrics::{confusion, f1, kld, mcc};
use crate::model::{CoglassoFit, GroundTruthModel, Hyperparameters, LayerPartition};
use crate::selection::{stars_glasso, xstars, Grids, StabilityConfig, DEFAULT_NUM_SUBSAMPLES, DEFAULT_THRESHOLD};
use crate::simgen::{generate_replicates, ScenarioSpec};
use crate::solver::{fit, fit_with, ConvergenceConfig, Rule};

/// Grid shape; concrete penalty values are derived per replicate from its
/// empirical covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_w_count: usize,
    pub lambda_b_count: usize,
    pub c_values: Vec<f64>,
    pub glasso_count: usize,
    pub ratio: f64,
}

impl GridSpec {
    pub fn desk() -> Self {
        GridSpec {
            lambda_w_count: 5,
            lambda_b_count: 5,
            c_values: vec![0.0, 0.5, 1.0],
            glasso_count: 10,
            ratio: 0.1,
        }
    }

    pub fn full() -> Self {
        GridSpec {
            lambda_w_count: 10,
            lambda_b_count: 10,
            c_values: vec![0.0, 0.1, 0.5, 1.0, 10.0],
            glasso_count: 20,
            ratio: 0.1,
        }
    }

    pub fn realize(&self, s: &EmpiricalCovariance) -> Result<ReplicateGrids> {
        if self.c_values.is_empty() {
            return Err(Error::Parameter("c grid is empty".into()));
        }
        Ok(ReplicateGrids {
            lambda_w: default_lambda_grid(s, self.lambda_w_count, self.ratio)?.values,
            lambda_b: default_lambda_grid(s, self.lambda_b_count, self.ratio)?.values,
            c: self.c_values.clone(),
            glasso: default_lambda_grid(s, self.glasso_count, self.ratio)?.values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateGrids {
    pub lambda_w: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub c: Vec<f64>,
    pub glasso: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub f1: f64,
    pub mcc: f64,
    /// `None` when the estimate is not positive definite.
    pub kld: Option<f64>,
}

pub fn score(truth: &GroundTruthModel, fit: &CoglassoFit) -> Result<Scores> {
    let c = confusion(&truth.adjacency, &fit.adjacency)?;
    Ok(Scores {
        f1: f1(&c),
        mcc: mcc(&c),
        kld: kld(&truth.theta, &fit.theta_hat).ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOracle {
    pub best_f1: f64,
    pub best_mcc: f64,
    pub best_kld: Option<f64>,
    pub at_best_f1: Hyperparameters,
    pub at_best_mcc: Hyperparameters,
    pub at_best_kld: Option<Hyperparameters>,
    pub evaluated: usize,
    pub failures: Vec<String>,
}

impl MethodOracle {
    /// Best per metric over `points` in order; earlier points win ties.
    fn from_points(points: Vec<(Hyperparameters, Result<Scores>)>) -> Result<Self> {
        let mut failures = Vec::new();
        let mut best: Option<MethodOracle> = None;
        let mut evaluated = 0;
        for (h, scores) in points {
            let s = match scores {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("({}, {}, {}): {e}", h.lambda_w, h.lambda_b, h.c));
                    continue;
                }
            };
            evaluated += 1;
            let b = best.get_or_insert_with(|| MethodOracle {
                best_f1: s.f1,
                best_mcc: s.mcc,
                best_kld: s.kld,
                at_best_f1: h,
                at_best_mcc: h,
                at_best_kld: s.kld.map(|_| h),
                evaluated: 0,
                failures: Vec::new(),
            });
            if s.f1 > b.best_f1 {
                b.best_f1 = s.f1;
                b.at_best_f1 = h;
            }
            if s.mcc > b.best_mcc {
                b.best_mcc = s.mcc;
                b.at_best_mcc = h;
            }
            if let Some(k) = s.kld {
                if b.best_kld.map_or(true, |old| k < old) {
                    b.best_kld = Some(k);
                    b.at_best_kld = Some(h);
                }
            }
        }
        let mut out = best.ok_or_else(|| Error::NumericalDegeneracy(format!("every grid point failed: {}", failures.join("; "))))?;
        out.evaluated = evaluated;
        out.failures = failures;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub replicate_id: usize,
    pub coglasso: MethodOracle,
    pub glasso: MethodOracle,
    pub c_at_best_f1: f64,
    pub c_at_best_mcc: f64,
    pub c_at_best_kld: Option<f64>,
}

/// Cold fits only, so an oracle grid point and a refit at the same
/// hyperparameters give the same network and scores.
fn fit_points(
    s: &EmpiricalCovariance,
    truth: &GroundTruthModel,
    rules: Vec<(Hyperparameters, Rule)>,
    partition: LayerPartition,
    conv: &ConvergenceConfig,
) -> Vec<(Hyperparameters, Result<Scores>)> {
    rules
        .into_par_iter()
        .map(|(h, rule)| (h, fit_with(s, rule, partition, conv, None).and_then(|f| score(truth, &f))))
        .collect()
}

/// Scores every grid point of both methods on one dataset.
pub fn oracle_sweep(
    replicate_id: usize,
    s: &EmpiricalCovariance,
    truth: &GroundTruthModel,
    grids: &ReplicateGrids,
    conv: &ConvergenceConfig,
) -> Result<OracleRecord> {
    let partition = truth.partition;
    if s.dim() != partition.p() {
        return Err(Error::Shape(format!("dataset has {} variables, truth {}", s.dim(), partition.p())));
    }
    for (name, g) in [("lambda_w", &grids.lambda_w), ("lambda_b", &grids.lambda_b), ("c", &grids.c), ("glasso", &grids.glasso)] {
        if g.is_empty() {
            return Err(Error::Parameter(format!("{name} grid is empty")));
        }
    }
    let mut cog_rules = Vec::new();
    for &c in &grids.c {
        for &lb in &grids.lambda_b {
            for &lw in &grids.lambda_w {
                let h = Hyperparameters::new(lw, lb, c)?;
                cog_rules.push((h, Rule::Coglasso { hyper: h }));
            }
        }
    }
    let cog_points = fit_points(s, truth, cog_rules, partition, conv);
    let glasso_rules = grids
        .glasso
        .iter()
        .map(|&l| Hyperparameters::glasso(l).map(|h| (h, Rule::Glasso { lambda: l })))
        .collect::<Result<Vec<_>>>()?;
    let glasso_points = fit_points(s, truth, glasso_rules, partition, conv);

    let coglasso = MethodOracle::from_points(cog_points).map_err(|e| e.context("coglasso grid"))?;
    let glasso = MethodOracle::from_points(glasso_points).map_err(|e| e.context("glasso grid"))?;
    Ok(OracleRecord {
        replicate_id,
        c_at_best_f1: coglasso.at_best_f1.c,
        c_at_best_mcc: coglasso.at_best_mcc.c,
        c_at_best_kld: coglasso.at_best_kld.map(|h| h.c),
        coglasso,
        glasso,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub replicate_id: usize,
    pub xstars: Hyperparameters,
    pub xstars_iterations: usize,
    pub xstars_converged: bool,
    pub coglasso: Scores,
    pub stars_lambda: f64,
    pub glasso: Scores,
}

/// XStARS for coglasso against StARS for glasso, each refit on the full data.
pub fn selection_compare(
    replicate_id: usize,
    data: &DMatrix<f64>,
    truth: &GroundTruthModel,
    grids: &ReplicateGrids,
    stability: &StabilityConfig,
    conv: &ConvergenceConfig,
) -> Result<SelectedRecord> {
    let partition = truth.partition;
    let sel = xstars(
        data,
        &Grids {
            lambda_w: &grids.lambda_w,
            lambda_b: &grids.lambda_b,
            c: &grids.c,
        },
        stability,
        partition,
        conv,
    )?;
    let trace = stars_glasso(data, &grids.glasso, stability, conv)?;
    let s = empirical_covariance(data, stability.standardize)?;
    let hyper = sel.hyperparameters()?;
    let cog_fit = fit(&s, &hyper, partition, conv)?;
    let lambda = trace.chosen();
    let gl_fit = fit_with(&s, Rule::Glasso { lambda }, partition, conv, None)?;
    Ok(SelectedRecord {
        replicate_id,
        xstars: hyper,
        xstars_iterations: sel.iterations,
        xstars_converged: sel.converged,
        coglasso: score(truth, &cog_fit)?,
        stars_lambda: lambda,
        glasso: score(truth, &gl_fit)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub num_replicates: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub run_selection: bool,
    pub num_subsamples: usize,
    pub instability_threshold: f64,
    pub convergence: ConvergenceConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            num_replicates: 20,
            seed: 1,
            grid: GridSpec::desk(),
            run_selection: false,
            num_subsamples: DEFAULT_NUM_SUBSAMPLES,
            instability_threshold: DEFAULT_THRESHOLD,
            convergence: ConvergenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub count: usize,
}

/// Linear-interpolation quantiles of the finite values; `None` if there are none.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(Quartiles {
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        count: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub method: String,
    pub metric: String,
    pub stats: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: ScenarioSpec,
    pub config: BenchConfig,
    pub replicate_grids: Vec<ReplicateGrids>,
    pub oracle: Vec<OracleRecord>,
    pub selected: Vec<SelectedRecord>,
    pub failures: Vec<String>,
    pub complete: bool,
    pub aggregates: Vec<Summary>,
    /// Share of replicates whose best coglasso network used c > 0, per metric.
    pub positive_c_share: Vec<(String, f64)>,
    /// Wall-clock accounting; left out of serialized reports so that reruns
    /// compare byte for byte.
    #[serde(skip)]
    pub runtime: Duration,
}

/// One row per replicate, method, record kind and metric.
pub struct MetricRow {
    pub replicate_id: usize,
    pub kind: &'static str,
    pub method: &'static str,
    pub metric: &'static str,
    pub value: Option<f64>,
}

impl BenchReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |replicate_id, kind, method, metric, value| {
            rows.push(MetricRow {
                replicate_id,
                kind,
                method,
                metric,
                value,
            })
        };
        for r in &self.oracle {
            for (method, m) in [("coglasso", &r.coglasso), ("glasso", &r.glasso)] {
                push(r.replicate_id, "oracle", method, "f1", Some(m.best_f1));
                push(r.replicate_id, "oracle", method, "mcc", Some(m.best_mcc));
                push(r.replicate_id, "oracle", method, "kld", m.best_kld);
            }
        }
        for r in &self.selected {
            for (method, s) in [("coglasso", &r.coglasso), ("glasso", &r.glasso)] {
                push(r.replicate_id, "selected", method, "f1", Some(s.f1));
                push(r.replicate_id, "selected", method, "mcc", Some(s.mcc));
                push(r.replicate_id, "selected", method, "kld", s.kld);
            }
        }
        rows
    }

    pub fn summary(&self, kind: &str, method: &str, metric: &str) -> Option<&Quartiles> {
        self.aggregates
            .iter()
            .find(|s| s.kind == kind && s.method == method && s.metric == metric)
            .and_then(|s| s.stats.as_ref())
    }
}

/// Recomputes summaries from the per-replicate rows.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Summary> {
    let mut out = Vec::new();
    for kind in ["oracle", "selected"] {
        for method in ["coglasso", "glasso"] {
            for metric in ["f1", "mcc", "kld"] {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.kind == kind && r.method == method && r.metric == metric)
                    .filter_map(|r| r.value)
                    .collect();
                if rows.iter().any(|r| r.kind == kind) {
                    out.push(Summary {
                        kind: kind.into(),
                        method: method.into(),
                        metric: metric.into(),
                        stats: quartiles(&values),
                    });
                }
            }
        }
    }
    out
}

fn positive_c_share(oracle: &[OracleRecord]) -> Vec<(String, f64)> {
    if oracle.is_empty() {
        return Vec::new();
    }
    let n = oracle.len() as f64;
    let share = |f: &dyn Fn(&OracleRecord) -> Option<f64>| oracle.iter().filter(|r| f(r).is_some_and(|c| c > 0.0)).count() as f64 / n;
    vec![
        ("f1".into(), share(&|r| Some(r.c_at_best_f1))),
        ("mcc".into(), share(&|r| Some(r.c_at_best_mcc))),
        ("kld".into(), share(&|r| r.c_at_best_kld)),
    ]
}

/// Full benchmark for one scenario. Fits use the unstandardized covariance
/// so the estimated precision is on the scale of the true one.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &BenchConfig) -> Result<BenchReport> {
    let start = Instant::now();
    cfg.convergence.validate()?;
    let (truth, datasets) = generate_replicates(spec, cfg.num_replicates, cfg.seed)?;
    let outcomes: Vec<Result<(ReplicateGrids, OracleRecord, Option<SelectedRecord>)>> = datasets
        .par_iter()
        .enumerate()
        .map(|(r, data)| {
            let s = empirical_covariance(data, false)?;
            let grids = cfg.grid.realize(&s)?;
            let oracle = oracle_sweep(r, &s, &truth, &grids, &cfg.convergence)?;
            let selected = if cfg.run_selection {
                let stability = StabilityConfig {
                    num_subsamples: cfg.num_subsamples,
                    instability_threshold: cfg.instability_threshold,
                    standardize: false,
                    ..StabilityConfig::for_sample_size(data.nrows(), crate::rng::child_seed(cfg.seed, r as u64))
                };
                Some(selection_compare(r, data, &truth, &grids, &stability, &cfg.convergence)?)
            } else {
                None
            };
            Ok((grids, oracle, selected))
        })
        .collect();

    let mut report = BenchReport {
        scenario: spec.clone(),
        config: cfg.clone(),
        replicate_grids: Vec::new(),
        oracle: Vec::new(),
        selected: Vec::new(),
        failures: Vec::new(),
        complete: true,
        aggregates: Vec::new(),
        positive_c_share: Vec::new(),
        runtime: Duration::ZERO,
    };
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((grids, oracle, selected)) => {
                report.replicate_grids.push(grids);
                report.oracle.push(oracle);
                report.selected.extend(selected);
            }
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                report.failures.push(format!("replicate {r}: {e}"));
                report.complete = false;
            }
        }
    }
    if report.oracle.is_empty() && cfg.num_replicates > 0 {
        return Err(Error::NumericalDegeneracy(format!("every replicate failed: {}", report.failures.join("; "))));
    }
    report.aggregates = aggregate(&report.rows());
    report.positive_c_share = positive_c_share(&report.oracle);
    report.runtime = start.elapsed();
    Ok(report)
}
