//! `eigengreedy` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    k_at_max_auroc, segment_regimes, simulate_replacement, write_simulation_csv, SignalKind,
    DEFAULT_REGIME_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::experiments::{
    run_experiment, write_atomic, write_outputs, ExperimentConfig, ExperimentKind,
};
use crate::feature_store::{read_feature_set, validate_store};
use crate::gaussian::GaussianModel;
use crate::selection::{
    curve_with_trace, read_curves_csv, write_curves_csv, Method, SelectionTrace,
};

/// Environment variable capping the worker count (0 = all cores).
pub const THREADS_ENV: &str = "EIGENGREEDY_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "eigengreedy",
    version,
    about = "Gaussian anomaly detection with greedy eigencomponent selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a Gaussian model on a training feature store.
    Fit(FitArgs),
    /// Compute k-vs-AUROC curves for a fitted model.
    Curve(CurveArgs),
    /// Run an experiment protocol from a JSON config.
    Experiment(ExperimentArgs),
    /// Segment curves into regimes and find the minimal k at max AUROC.
    Analyze(AnalyzeArgs),
    /// Replace trailing trace components with synthetic axes.
    Simulate(SimulateArgs),
    /// Check a feature store against the on-disk format.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training store base path (without .fvs/.json).
    #[arg(long)]
    pub train: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Store driving the greedy search.
    #[arg(long)]
    pub greedy: PathBuf,
    /// Store used for evaluation; defaults to the greedy store.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Comma-separated methods: bottom_up, top_down, pca, npca, range:<start>.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "bottom_up,top_down,pca,npca"
    )]
    pub methods: Vec<Method>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for greedy trace JSON files.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Allow exp2/exp3 on shallow nodes (features.0 to features.4).
    #[arg(long)]
    pub all_nodes: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of curve CSVs.
    #[arg(long)]
    pub curves: PathBuf,
    #[arg(long, default_value_t = DEFAULT_REGIME_TOLERANCE)]
    pub tolerance: f64,
    /// Where to write regimes.csv and k_at_max.csv; defaults to the curves directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Bottom-up trace JSON from an Experiment-1 run.
    #[arg(long)]
    pub trace: PathBuf,
    /// Test store base path.
    #[arg(long)]
    pub test: PathBuf,
    /// noise or redundant.
    #[arg(long)]
    pub signal: SignalKind,
    #[arg(long)]
    pub k_prime: usize,
    /// Number of repetitions.
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    /// Master seed for all repetitions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Store base path (without .fvs/.json).
    #[arg(long)]
    pub store: PathBuf,
}

/// Applies `EIGENGREEDY_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a count")))?,
        Err(_) => 0,
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub d: usize,
    pub n: usize,
    pub shrinkage: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let train = read_feature_set(&args.train)?;
    let model = GaussianModel::fit(&train)?;
    write_atomic(&args.out, &model.to_bytes())?;
    let ev = model.eigenvalues();
    let summary = FitSummary {
        d: model.d(),
        n: train.n(),
        shrinkage: model.shrinkage(),
        min_eigenvalue: ev[0],
        max_eigenvalue: ev[ev.len() - 1],
    };
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

pub fn cmd_curve(args: &CurveArgs) -> Result<()> {
    let model = GaussianModel::read(&args.model)?;
    let greedy_set = read_feature_set(&args.greedy)?;
    let greedy = model.whiten(&greedy_set)?;
    let eval = match &args.eval {
        Some(p) => model.whiten(&read_feature_set(p)?)?,
        None => greedy.clone(),
    };
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut curves = Vec::new();
    for &method in &args.methods {
        let (curve, trace) = curve_with_trace(&greedy, &eval, method)?;
        if let (Some(dir), Some(t)) = (&args.trace_dir, trace) {
            let path = dir.join(format!("{method}.trace.json"));
            write_atomic(&path, (t.to_json() + "\n").as_bytes())?;
        }
        curves.push(curve);
    }
    let mut buf = Vec::new();
    write_curves_csv(&curves, &mut buf)?;
    write_atomic(&args.out, &buf)
}

/// Node index of a `features.<i>` name.
fn node_depth(node: &str) -> Option<usize> {
    node.strip_prefix("features.")?.parse().ok()
}

/// Experiments 2 and 3 default to the deeper nodes features.5 and up.
pub const MIN_GENERALIZATION_NODE: usize = 5;

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let config = ExperimentConfig::read(&args.config)?;
    if config.kind != ExperimentKind::Exp1 && !args.all_nodes {
        if let Some(depth) = node_depth(&config.node) {
            if depth < MIN_GENERALIZATION_NODE {
                return Err(Error::Config(format!(
                    "{:?} is skipped for {:?} by default; pass --all-nodes to run it",
                    config.node, config.kind
                )));
            }
        }
    }
    let train = read_feature_set(&config.feature_store_paths.train)?;
    let test = read_feature_set(&config.feature_store_paths.test)?;
    let run = run_experiment(&train, &test, &config)?;
    let written = write_outputs(&run, &args.out_dir)?;
    log::info!(
        "wrote {} files to {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidCurve(e.to_string())
}

pub const REGIMES_CSV: &str = "regimes.csv";
pub const K_AT_MAX_CSV: &str = "k_at_max.csv";

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let dir = &args.curves;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && !p
                    .file_name()
                    .is_some_and(|f| f == REGIMES_CSV || f == K_AT_MAX_CSV)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidCurve(format!(
            "no curve CSVs in {}",
            dir.display()
        )));
    }

    let mut regimes = csv::Writer::from_writer(Vec::new());
    regimes
        .write_record([
            "file",
            "method",
            "d",
            "rise_end",
            "plateau_end",
            "max_auroc",
            "tolerance",
        ])
        .map_err(csv_err)?;
    let mut kmax = csv::Writer::from_writer(Vec::new());
    kmax.write_record(["file", "method", "d", "k", "auroc"])
        .map_err(csv_err)?;

    for path in &files {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        for curve in read_curves_csv(file)? {
            let seg = segment_regimes(&curve, args.tolerance)?;
            let (k, auroc) = k_at_max_auroc(&curve)?;
            regimes
                .write_record([
                    name.clone(),
                    curve.method.to_string(),
                    curve.d().to_string(),
                    seg.rise_end.to_string(),
                    seg.plateau_end.to_string(),
                    seg.max_auroc.to_string(),
                    seg.tolerance.to_string(),
                ])
                .map_err(csv_err)?;
            kmax.write_record([
                name.clone(),
                curve.method.to_string(),
                curve.d().to_string(),
                k.to_string(),
                auroc.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }

    let out = args.out_dir.as_deref().unwrap_or(dir);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let finish = |w: csv::Writer<Vec<u8>>, name: &str| -> Result<()> {
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidCurve(e.to_string()))?;
        write_atomic(&out.join(name), &bytes)
    };
    finish(regimes, REGIMES_CSV)?;
    finish(kmax, K_AT_MAX_CSV)
}

fn read_trace(path: &Path) -> Result<SelectionTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SelectionTrace::from_json(&text)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = GaussianModel::read(&args.model)?;
    let trace = read_trace(&args.trace)?;
    let test = model.whiten(&read_feature_set(&args.test)?)?;
    let result = simulate_replacement(
        &model,
        &trace,
        &test,
        args.k_prime,
        args.signal,
        args.seeds,
        args.seed,
    )?;
    let mut buf = Vec::new();
    write_simulation_csv(&result, &mut buf)?;
    write_atomic(&args.out, &buf)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let report = validate_store(&args.store)?;
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    Ok(())
}
