//! Datasets in, fits and networks out.
//!
//! Data files are delimited text, samples in rows, one header row of
//! variable labels. Comma is the default delimiter; a tab in the header line
//! with no comma switches to tab.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::quartiles;
use crate::error::{io_error, Error, Result};
use crate::model::{Adjacency, CoglassoFit, GroundTruthModel, Hyperparameters, Layer, LayerPartition};
use crate::simgen::ScenarioSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSource {
    TwoFiles { x: PathBuf, z: PathBuf },
    /// One table whose first `p_x` columns form layer X.
    Split { path: PathBuf, p_x: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: LayerSource,
    /// `None` detects comma or tab from the first line.
    pub delimiter: Option<u8>,
    pub has_header: bool,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub labels: Vec<String>,
    pub data: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Samples in rows, layer X columns first.
    pub data: DMatrix<f64>,
    pub partition: LayerPartition,
    pub labels: Vec<String>,
    pub standardized: bool,
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().next().unwrap_or("");
    if first.contains('\t') && !first.contains(',') {
        b'\t'
    } else {
        b','
    }
}

/// Parses a numeric table. `origin` names the source in error locators.
pub fn parse_table(text: &str, delimiter: Option<u8>, has_header: bool, origin: &str) -> Result<Table> {
    let delimiter = delimiter.unwrap_or_else(|| detect_delimiter(text));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |row: usize, col: Option<usize>, message: String| Error::Parse {
        location: match col {
            Some(c) => format!("{origin}: row {row}, column {c}"),
            None => format!("{origin}: row {row}"),
        },
        message,
    };

    let mut labels: Option<Vec<String>> = None;
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| parse_err(row, None, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(row, None, format!("expected {w} fields, found {}", record.len())));
            }
            Some(_) => {}
        }
        if has_header && labels.is_none() {
            labels = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(row, Some(c + 1), format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, Some(c + 1), format!("'{field}' is not finite")));
            }
            values.push(v);
        }
        n += 1;
    }
    let p = width.ok_or_else(|| parse_err(1, None, "no data".into()))?;
    if n == 0 {
        return Err(parse_err(1, None, "header present but no data rows".into()));
    }
    let labels = labels.unwrap_or_else(|| (1..=p).map(|j| format!("V{j}")).collect());
    Ok(Table {
        labels,
        data: DMatrix::from_row_slice(n, p, &values),
    })
}

pub fn read_table(path: &Path, delimiter: Option<u8>, has_header: bool) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_table(&text, delimiter, has_header, &path.display().to_string())
}

/// Centers each column and scales it to unit variance (1/n normalization).
pub fn standardize_columns(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = data.nrows() as f64;
    let mut out = data.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd <= 0.0 {
            return Err(Error::DegenerateInput(format!("column {} is constant", j + 1)));
        }
        col /= sd;
    }
    Ok(out)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let (data, labels, p_x) = match &spec.source {
        LayerSource::TwoFiles { x, z } => {
            let tx = read_table(x, spec.delimiter, spec.has_header)?;
            let tz = read_table(z, spec.delimiter, spec.has_header)?;
            if tx.data.nrows() != tz.data.nrows() {
                return Err(Error::Shape(format!(
                    "layer X has {} samples but layer Z has {}",
                    tx.data.nrows(),
                    tz.data.nrows()
                )));
            }
            let p_x = tx.data.ncols();
            let mut labels = tx.labels;
            labels.extend(tz.labels);
            let mut data = DMatrix::zeros(tx.data.nrows(), p_x + tz.data.ncols());
            data.columns_mut(0, p_x).copy_from(&tx.data);
            data.columns_mut(p_x, tz.data.ncols()).copy_from(&tz.data);
            (data, labels, p_x)
        }
        LayerSource::Split { path, p_x } => {
            let t = read_table(path, spec.delimiter, spec.has_header)?;
            if *p_x == 0 || *p_x >= t.data.ncols() {
                return Err(Error::Shape(format!(
                    "split index {p_x} must leave both layers non-empty in a table of {} columns",
                    t.data.ncols()
                )));
            }
            (t.data, t.labels, *p_x)
        }
    };
    let partition = LayerPartition::new(p_x, data.ncols() - p_x)?;
    let data = if spec.standardize { standardize_columns(&data)? } else { data };
    Ok(Dataset {
        data,
        partition,
        labels,
        standardized: spec.standardize,
    })
}

/// Writes a numeric table with a header row, full round-trip precision.
pub fn format_table(labels: &[String], data: &DMatrix<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(labels).map_err(fail)?;
    for row in data.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub version: String,
}

/// Short SHA-256 of the canonical JSON form of the effective settings.
pub fn config_hash<T: Serialize>(settings: &T) -> Result<String> {
    let canonical = serde_json::to_vec(settings).map_err(|e| Error::Serde(e.to_string()))?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl From<&DMatrix<f64>> for DenseMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        DenseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.transpose().iter().copied().collect(),
        }
    }
}

impl DenseMatrix {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows.checked_mul(self.cols) != Some(self.values.len()) {
            return Err(Error::Shape(format!(
                "{}x{} matrix with {} values",
                self.rows,
                self.cols,
                self.values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub provenance: Provenance,
    pub labels: Vec<String>,
    pub partition: LayerPartition,
    pub hyperparameters: Hyperparameters,
    pub iterations: usize,
    pub converged: bool,
    pub inverse_residual: f64,
    pub edges: Vec<(usize, usize)>,
    pub theta_hat: DenseMatrix,
    pub w: DenseMatrix,
    pub b_hat: DenseMatrix,
}

impl FitDocument {
    pub fn new(fit: &CoglassoFit, labels: Vec<String>, provenance: Provenance) -> Result<Self> {
        if labels.len() != fit.partition.p() {
            return Err(Error::Shape(format!("{} labels for {} variables", labels.len(), fit.partition.p())));
        }
        Ok(FitDocument {
            provenance,
            labels,
            partition: fit.partition,
            hyperparameters: fit.hyper,
            iterations: fit.iterations,
            converged: fit.converged,
            inverse_residual: fit.inverse_residual,
            edges: fit.adjacency.edges().collect(),
            theta_hat: (&fit.theta_hat).into(),
            w: (&fit.w).into(),
            b_hat: (&fit.b_hat).into(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Decodes and validates a fit document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        doc.to_fit()?;
        Ok(doc)
    }

    pub fn to_fit(&self) -> Result<CoglassoFit> {
        let partition = LayerPartition::new(self.partition.p_x(), self.partition.p_z())?;
        let p = partition.p();
        self.hyperparameters.validate()?;
        if self.labels.len() != p {
            return Err(Error::Shape(format!("{} labels for {p} variables", self.labels.len())));
        }
        let theta_hat = self.theta_hat.to_matrix()?;
        let w = self.w.to_matrix()?;
        let b_hat = self.b_hat.to_matrix()?;
        for (name, m) in [("theta_hat", &theta_hat), ("w", &w), ("b_hat", &b_hat)] {
            if m.shape() != (p, p) {
                return Err(Error::Shape(format!("{name} is {:?}, expected {p}x{p}", m.shape())));
            }
        }
        let mut adjacency = Adjacency::empty(p);
        for &(i, j) in &self.edges {
            if i >= p || j >= p || i == j {
                return Err(Error::Shape(format!("edge ({i}, {j}) invalid for {p} variables")));
            }
            adjacency.set(i, j, true);
        }
        Ok(CoglassoFit {
            w,
            b_hat,
            theta_hat,
            adjacency,
            hyper: self.hyperparameters,
            partition,
            iterations: self.iterations,
            converged: self.converged,
            inverse_residual: self.inverse_residual,
        })
    }
}

/// Simulated ground truth as written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub provenance: Provenance,
    pub scenario: ScenarioSpec,
    pub labels: Vec<String>,
    pub partition: LayerPartition,
    pub epsilon: f64,
    pub epsilon_doublings: u32,
    pub edges: Vec<(usize, usize)>,
    pub theta: DenseMatrix,
}

impl TruthDocument {
    pub fn new(truth: &GroundTruthModel, scenario: &ScenarioSpec, labels: Vec<String>, provenance: Provenance) -> Self {
        TruthDocument {
            provenance,
            scenario: scenario.clone(),
            labels,
            partition: truth.partition,
            epsilon: truth.epsilon,
            epsilon_doublings: truth.epsilon_doublings,
            edges: truth.adjacency.edges().collect(),
            theta: (&truth.theta).into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Decodes a truth document and checks its sizes and edges agree.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TruthDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let partition = LayerPartition::new(doc.partition.p_x(), doc.partition.p_z())?;
        let p = partition.p();
        if doc.labels.len() != p {
            return Err(Error::Shape(format!("{} labels for {p} variables", doc.labels.len())));
        }
        let theta = doc.theta.to_matrix()?;
        if theta.shape() != (p, p) {
            return Err(Error::Shape(format!("theta is {:?}, expected {p}x{p}", theta.shape())));
        }
        if let Some(&(i, j)) = doc.edges.iter().find(|&&(i, j)| i >= p || j >= p || i == j) {
            return Err(Error::Shape(format!("edge ({i}, {j}) invalid for {p} variables")));
        }
        Ok(doc)
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut a = Adjacency::empty(self.partition.p());
        for &(i, j) in &self.edges {
            a.set(i, j, true);
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    /// `theta_ij / sqrt(theta_ii theta_jj)`.
    Paper,
    /// The negated value, the usual partial correlation.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    EdgeList,
    GraphMl,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edgelist" => Ok(ExportFormat::EdgeList),
            "graphml" => Ok(ExportFormat::GraphMl),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Parameter(format!("unknown export format '{other}' (edgelist, graphml, json)"))),
        }
    }
}

impl std::str::FromStr for SignConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SignConvention::Paper),
            "standard" => Ok(SignConvention::Standard),
            other => Err(Error::Parameter(format!("unknown sign convention '{other}' (paper, standard)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    /// Quartile of `|weight|` among exported edges, 1 (weakest) to 4.
    pub quartile: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkExport {
    pub nodes: Vec<Node>,
    pub edges: Vec<NetworkEdge>,
    pub hyperparameters: Hyperparameters,
    pub sign_convention: SignConvention,
    pub provenance: Provenance,
}

/// Partial-correlation weight of `(i, j)` under `convention`.
pub fn partial_correlation(theta: &DMatrix<f64>, i: usize, j: usize, convention: SignConvention) -> f64 {
    let w = theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt();
    match convention {
        SignConvention::Paper => w,
        SignConvention::Standard => -w,
    }
}

fn quartile_ranks(weights: &[f64]) -> Vec<u8> {
    let abs: Vec<f64> = weights.iter().map(|w| w.abs()).collect();
    let Some(q) = quartiles(&abs) else {
        return Vec::new();
    };
    abs.iter()
        .map(|&a| match a {
            a if a <= q.q1 => 1,
            a if a <= q.median => 2,
            a if a <= q.q3 => 3,
            _ => 4,
        })
        .collect()
}

impl NetworkExport {
    pub fn from_fit(fit: &CoglassoFit, labels: &[String], convention: SignConvention, provenance: Provenance) -> Result<Self> {
        let p = fit.partition.p();
        if labels.len() != p {
            return Err(Error::Shape(format!("{} labels for {p} variables", labels.len())));
        }
        if !fit.converged {
            log::warn!("exporting a fit that did not converge");
        }
        let nodes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Node {
                label: l.clone(),
                layer: fit.partition.layer(i),
            })
            .collect();
        let pairs: Vec<(usize, usize)> = fit.adjacency.edges().collect();
        let weights: Vec<f64> = pairs.iter().map(|&(i, j)| partial_correlation(&fit.theta_hat, i, j, convention)).collect();
        let ranks = quartile_ranks(&weights);
        let edges = pairs
            .iter()
            .zip(weights.iter().zip(ranks))
            .map(|(&(a, b), (&weight, quartile))| NetworkEdge { a, b, weight, quartile })
            .collect();
        Ok(NetworkExport {
            nodes,
            edges,
            hyperparameters: fit.hyper,
            sign_convention: convention,
            provenance,
        })
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut a = Adjacency::empty(self.nodes.len());
        for e in &self.edges {
            a.set(e.a, e.b, true);
        }
        a
    }

    pub fn render(&self, format: ExportFormat) -> Result<String> {
        match format {
            ExportFormat::Json => serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string())),
            ExportFormat::EdgeList => {
                let mut out = String::from("node_a\tnode_b\tlayer_a\tlayer_b\tweight\tquartile\n");
                for e in &self.edges {
                    let (na, nb) = (&self.nodes[e.a], &self.nodes[e.b]);
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}",
                        na.label,
                        nb.label,
                        na.layer.tag(),
                        nb.layer.tag(),
                        e.weight,
                        e.quartile
                    );
                }
                Ok(out)
            }
            ExportFormat::GraphMl => Ok(self.graphml()),
        }
    }

    fn graphml(&self) -> String {
        let mut out = String::from(concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
            "  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n",
            "  <key id=\"layer\" for=\"node\" attr.name=\"layer\" attr.type=\"string\"/>\n",
            "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n",
            "  <key id=\"quartile\" for=\"edge\" attr.name=\"quartile\" attr.type=\"int\"/>\n",
            "  <graph id=\"network\" edgedefault=\"undirected\">\n",
        ));
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "    <node id=\"n{i}\"><data key=\"label\">{}</data><data key=\"layer\">{}</data></node>",
                xml_escape(&n.label),
                n.layer.tag()
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "    <edge source=\"n{}\" target=\"n{}\"><data key=\"weight\">{}</data><data key=\"quartile\">{}</data></edge>",
                e.a, e.b, e.weight, e.quartile
            );
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkExport = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let p = net.nodes.len();
        if let Some(e) = net.edges.iter().find(|e| e.a >= p || e.b >= p || e.a == e.b) {
            return Err(Error::Shape(format!("edge ({}, {}) invalid for {p} nodes", e.a, e.b)));
        }
        Ok(net)
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}
