//! Command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Every command reads optional defaults from a TOML file given by
//! `--config`; flags win over the file. A reproducibility line (seed, hash
//! of the effective settings, version) goes to stderr on every run.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{run_scenario, BenchConfig, GridSpec};
use crate::covariance::{default_lambda_grid, empirical_covariance};
use crate::error::Error;
use crate::io::{
    config_hash, format_table, load_dataset, read_file, write_file, Dataset, DatasetSpec, ExportFormat, FitDocument, LayerSource,
    NetworkExport, Provenance, SignConvention, TruthDocument, VERSION,
};
use crate::model::Hyperparameters;
use crate::selection::{xstars, Grids, SelectionResult, StabilityConfig};
use crate::simgen::{generate_replicates, scenario_preset};
use crate::solver::{fit, ConvergenceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Collaboration values of the default `select` sweep.
pub const DEFAULT_C_LIST: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Parser)]
#[command(name = "coglasso", version, about = "Collaborative graphical lasso for two-layer networks")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground truth and replicate datasets for a scenario.
    Simulate(SimulateArgs),
    /// Fit one coglasso network.
    Fit(FitArgs),
    /// Choose hyperparameters with XStARS.
    Select(SelectArgs),
    /// Compare coglasso with glasso on simulated data.
    Bench(BenchArgs),
    /// Convert a fit to an edge list, GraphML or JSON network.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataArgs {
    /// Data table; give it twice for separate X and Z files.
    #[arg(long)]
    data: Option<Vec<PathBuf>>,
    /// Number of leading columns forming layer X (single-file input).
    #[arg(long)]
    px: Option<usize>,
    /// Field delimiter, `,` or `\t`; detected when omitted.
    #[arg(long)]
    delimiter: Option<char>,
    /// The files have no header row.
    #[arg(long)]
    #[serde(default)]
    no_header: bool,
    /// Work with the covariance instead of the correlation matrix.
    #[arg(long)]
    #[serde(default)]
    no_standardize: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateArgs {
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    lambda_w: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    grid_w: Option<usize>,
    #[arg(long)]
    grid_b: Option<usize>,
    /// Comma-separated collaboration values.
    #[arg(long, value_delimiter = ',')]
    c_list: Option<Vec<f64>>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    stars_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchArgs {
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 10 x 10 x 5 coglasso grid, 20 glasso values, 100 replicates by default.
    #[arg(long)]
    #[serde(default)]
    full_scale: bool,
    /// Also run XStARS against StARS on every replicate.
    #[arg(long)]
    #[serde(default)]
    selection: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportArgs {
    #[arg(long)]
    fit: Option<PathBuf>,
    /// edgelist, graphml or json.
    #[arg(long)]
    format: Option<String>,
    /// paper (no minus sign, the default) or standard.
    #[arg(long)]
    sign: Option<String>,
    /// Destination file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Layout of the `--config` file. Each table holds the same keys as the
/// flags of its command, in snake case.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub threads: Option<usize>,
    #[serde(default)]
    simulate: SimulateArgs,
    #[serde(default)]
    fit: FitArgs,
    #[serde(default)]
    select: SelectArgs,
    #[serde(default)]
    bench: BenchArgs,
    #[serde(default)]
    export: ExportArgs,
    pub convergence: Option<ConvergenceConfig>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile, Error> {
    toml::from_str(text).map_err(|e| Error::Parse {
        location: e.span().map_or("config".into(), |s| format!("config bytes {}..{}", s.start, s.end)),
        message: e.message().to_string(),
    })
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Lib(e) => match e.root() {
                Error::Parameter(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

/// Fills unset fields of `flags` from `file` through their JSON forms.
fn merge<T: Serialize + for<'de> Deserialize<'de>>(flags: T, file: T) -> CliResult<T> {
    let to_value = |v: &T| serde_json::to_value(v).map_err(|e| CliError::Lib(Error::Serde(e.to_string())));
    let mut base = to_value(&file)?;
    let over = to_value(&flags)?;
    if let (Some(b), Some(o)) = (base.as_object_mut(), over.as_object()) {
        for (k, v) in o {
            // unset options are null, unset switches false
            if !v.is_null() && *v != serde_json::Value::Bool(false) {
                b.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Lib(Error::Serde(e.to_string())))
}

fn report(seed: Option<u64>, hash: &str) {
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    eprintln!("# coglasso {VERSION} seed={seed} config={hash}");
}

/// Runs the command line and returns the process exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => parse_config(&read_file(path)?).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Only the first pool in a process can be installed; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let conv = config.convergence.unwrap_or_default();
    conv.validate()?;
    match cli.command {
        Command::Simulate(a) => simulate(merge(a, config.simulate)?),
        Command::Fit(a) => fit_cmd(merge(a, config.fit)?, conv),
        Command::Select(a) => select(merge(a, config.select)?, conv),
        Command::Bench(a) => bench(merge(a, config.bench)?, conv),
        Command::Export(a) => export(merge(a, config.export)?),
    }
}

fn layer_labels(p_x: usize, p_z: usize) -> Vec<String> {
    (1..=p_x).map(|i| format!("x{i}")).chain((1..=p_z).map(|i| format!("z{i}"))).collect()
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let scenario = a.scenario.unwrap_or(1);
    let replicates = a.replicates.unwrap_or(1);
    let seed = a.seed.unwrap_or(1);
    let out = required(a.out.clone(), "out")?;
    let spec = scenario_preset(scenario)?;
    let hash = config_hash(&("simulate", scenario, replicates, seed))?;
    report(Some(seed), &hash);
    let (truth, datasets) = generate_replicates(&spec, replicates, seed)?;
    let provenance = Provenance {
        seed: Some(seed),
        config_hash: hash,
        version: VERSION.into(),
    };
    let labels = layer_labels(spec.p_x, spec.p_z);
    write_file(&out.join("truth.json"), &TruthDocument::new(&truth, &spec, labels.clone(), provenance).to_json()?)?;
    for (r, data) in datasets.iter().enumerate() {
        write_file(&out.join(format!("replicate_{:03}.csv", r + 1)), &format_table(&labels, data)?)?;
    }
    println!("wrote truth.json and {} replicate(s) to {} (p_x = {})", datasets.len(), out.display(), spec.p_x);
    Ok(())
}

fn dataset(a: &DataArgs) -> CliResult<Dataset> {
    let files = required(a.data.clone(), "data")?;
    let source = match (files.as_slice(), a.px) {
        ([x, z], None) => LayerSource::TwoFiles { x: x.clone(), z: z.clone() },
        ([path], Some(p_x)) => LayerSource::Split { path: path.clone(), p_x },
        ([_], None) => return Err(CliError::Usage("missing required flag --px for single-file input".into())),
        ([_, _], Some(_)) => return Err(CliError::Usage("--px applies to single-file input only".into())),
        _ => return Err(CliError::Usage("--data takes one file (with --px) or two files".into())),
    };
    let delimiter = match a.delimiter {
        None => None,
        Some(',') => Some(b','),
        Some('\t') => Some(b'\t'),
        Some(other) => return Err(CliError::Usage(format!("unsupported delimiter '{other}'"))),
    };
    Ok(load_dataset(&DatasetSpec {
        source,
        delimiter,
        has_header: !a.no_header,
        standardize: !a.no_standardize,
    })?)
}

fn fit_cmd(a: FitArgs, conv: ConvergenceConfig) -> CliResult<()> {
    let lambda_w = required(a.lambda_w, "lambda-w")?;
    let lambda_b = required(a.lambda_b, "lambda-b")?;
    let c = required(a.c, "c")?;
    let out = required(a.out.clone(), "out")?;
    let hyper = Hyperparameters::new(lambda_w, lambda_b, c)?;
    // output paths are left out so reruns to another file share the hash
    let hash = config_hash(&("fit", &a.data, conv, (lambda_w, lambda_b, c)))?;
    report(None, &hash);
    let ds = dataset(&a.data)?;
    let s = empirical_covariance(&ds.data, ds.standardized)?;
    let f = fit(&s, &hyper, ds.partition, &conv)?;
    if !f.converged {
        log::warn!("fit stopped after {} sweeps without converging", f.iterations);
    }
    let (within, between) = f.adjacency.layer_edge_counts(ds.partition);
    let provenance = Provenance {
        seed: None,
        config_hash: hash,
        version: VERSION.into(),
    };
    write_file(&out, &FitDocument::new(&f, ds.labels, provenance)?.to_json()?)?;
    println!("{within} within-layer and {between} between-layer edges; converged = {}", f.converged);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SelectionDocument {
    pub provenance: Provenance,
    pub lambda_w_grid: Vec<f64>,
    pub lambda_b_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub result: SelectionResult,
}

fn select(a: SelectArgs, conv: ConvergenceConfig) -> CliResult<()> {
    let seed = a.seed.unwrap_or(1);
    let out = required(a.out.clone(), "out")?;
    let c_grid = a.c_list.clone().unwrap_or_else(|| DEFAULT_C_LIST.to_vec());
    let tuning = (a.grid_w, a.grid_b, a.subsamples, a.stars_threshold);
    let hash = config_hash(&("select", &a.data, tuning, conv, seed, &c_grid))?;
    report(Some(seed), &hash);
    let ds = dataset(&a.data)?;
    let s = empirical_covariance(&ds.data, ds.standardized)?;
    let lambda_w_grid = default_lambda_grid(&s, a.grid_w.unwrap_or(20), 0.1)?.values;
    let lambda_b_grid = default_lambda_grid(&s, a.grid_b.unwrap_or(20), 0.1)?.values;
    let mut cfg = StabilityConfig::for_sample_size(ds.data.nrows(), seed);
    cfg.standardize = ds.standardized;
    if let Some(n) = a.subsamples {
        cfg.num_subsamples = n;
    }
    if let Some(t) = a.stars_threshold {
        cfg.instability_threshold = t;
    }
    let grids = Grids {
        lambda_w: &lambda_w_grid,
        lambda_b: &lambda_b_grid,
        c: &c_grid,
    };
    let result = xstars(&ds.data, &grids, &cfg, ds.partition, &conv)?;
    println!(
        "lambda_w = {}, lambda_b = {}, c = {} after {} sweeps (converged = {})",
        result.lambda_w_hat, result.lambda_b_hat, result.c_hat, result.iterations, result.converged
    );
    let doc = SelectionDocument {
        provenance: Provenance {
            seed: Some(seed),
            config_hash: hash,
            version: VERSION.into(),
        },
        lambda_w_grid,
        lambda_b_grid,
        c_grid,
        result,
    };
    write_file(&out, &serde_json::to_string_pretty(&doc).map_err(|e| Error::Serde(e.to_string()))?)?;
    Ok(())
}

fn bench(a: BenchArgs, conv: ConvergenceConfig) -> CliResult<()> {
    let scenario = a.scenario.unwrap_or(1);
    let out = required(a.out.clone(), "out")?;
    let spec = scenario_preset(scenario)?;
    let cfg = BenchConfig {
        num_replicates: a.replicates.unwrap_or(if a.full_scale { 100 } else { 20 }),
        seed: a.seed.unwrap_or(1),
        grid: if a.full_scale { GridSpec::full() } else { GridSpec::desk() },
        run_selection: a.selection,
        convergence: conv,
        ..BenchConfig::default()
    };
    let hash = config_hash(&("bench", scenario, &cfg))?;
    report(Some(cfg.seed), &hash);
    let rep = run_scenario(&spec, &cfg)?;
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&rep).map_err(|e| Error::Serde(e.to_string()))?)?;
    write_file(&out.join("metrics.csv"), &metrics_csv(&rep)?)?;
    for kind in ["oracle", "selected"] {
        for metric in ["f1", "mcc", "kld"] {
            if let (Some(c), Some(g)) = (rep.summary(kind, "coglasso", metric), rep.summary(kind, "glasso", metric)) {
                println!("{kind} {metric}: coglasso median {:.4}, glasso median {:.4}", c.median, g.median);
            }
        }
    }
    println!("{} replicate(s) in {:.1} s; complete = {}", rep.oracle.len(), rep.runtime.as_secs_f64(), rep.complete);
    Ok(())
}

fn metrics_csv(rep: &crate::bench::BenchReport) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Lib(Error::Serde(e.to_string()));
    w.write_record(["scenario", "replicate", "kind", "method", "metric", "value"]).map_err(fail)?;
    let scenario = rep.scenario.scenario_id.map_or(String::new(), |s| s.to_string());
    for r in rep.rows() {
        let value = r.value.map_or(String::new(), |v| v.to_string());
        w.write_record([scenario.as_str(), &r.replicate_id.to_string(), r.kind, r.method, r.metric, &value])
            .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Lib(Error::Serde(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| CliError::Lib(Error::Serde(e.to_string())))
}

fn export(a: ExportArgs) -> CliResult<()> {
    let path = required(a.fit.clone(), "fit")?;
    let format: ExportFormat = a.format.as_deref().unwrap_or("edgelist").parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let sign: SignConvention = a.sign.as_deref().unwrap_or("paper").parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let doc = FitDocument::from_json(&read_file(&path)?).map_err(|e| e.context(path.display().to_string()))?;
    report(doc.provenance.seed, &doc.provenance.config_hash);
    let f = doc.to_fit()?;
    let net = NetworkExport::from_fit(&f, &doc.labels, sign, doc.provenance.clone())?;
    let text = net.render(format)?;
    match &a.out {
        Some(out) => write_file(out, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Path helper for tests and scripts: the data file of replicate `r` (1-based).
pub fn replicate_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("replicate_{r:03}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_parse() {
        let c = parse_config("threads = 2\n[fit]\nlambda_w = 0.1\npx = 3\n[convergence]\nouter_tol = 1e-5\ninner_tol = 1e-5\nmax_outer = 50\nmax_inner = 100\n").unwrap();
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.fit.lambda_w, Some(0.1));
        assert_eq!(c.fit.data.px, Some(3));
        assert_eq!(c.convergence.unwrap().max_outer, 50);
        assert!(parse_config("[fit]\nbogus = 1\n").is_err());
        assert!(parse_config("[fit\n").is_err());
    }

    #[test]
    fn flags_override_config() {
        let flags = FitArgs {
            lambda_w: Some(0.3),
            ..FitArgs::default()
        };
        let file = FitArgs {
            lambda_w: Some(0.1),
            lambda_b: Some(0.2),
            ..FitArgs::default()
        };
        let m = merge(flags, file).unwrap();
        assert_eq!((m.lambda_w, m.lambda_b, m.c), (Some(0.3), Some(0.2), None));
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage("x".into()).code(), 1);
        assert_eq!(CliError::Lib(Error::Parameter("x".into())).code(), 1);
        assert_eq!(CliError::Lib(Error::Shape("x".into())).code(), 2);
        assert_eq!(CliError::Lib(Error::NotPositiveDefinite { min_eigenvalue: -1.0 }.context("here")).code(), 3);
    }
}
