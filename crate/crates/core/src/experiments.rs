//! Greedy/eval splits for the three experiment protocols and the end-to-end
//! pipeline fit → whiten → select → curve.
//!
//! * Experiment 1 drives and evaluates the search on the full test set.
//! * Experiment 2 drives the search with one anomaly type and evaluates on
//!   all the others.
//! * Experiment 3 drives the search with a fixed budget of anomalous images
//!   drawn evenly across anomaly types, repeated over several seeds.
//!
//! Every split shares all normal test rows between both sides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feature_store::{FeatureSet, Label};
use crate::gaussian::{GaussianModel, WhiteSet};
use crate::selection::{curve_with_trace, write_curves_csv, Curve, Method, SelectionTrace};

/// Seeds used for Experiment 3 when a config does not list any.
pub const DEFAULT_EXP3_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Row indices into the test set driving the search.
    pub greedy_rows: Vec<usize>,
    /// Row indices into the test set used for reporting.
    pub eval_rows: Vec<usize>,
    pub descriptor: String,
}

impl SplitSpec {
    pub fn count_anomalous(rows: &[usize], test: &FeatureSet) -> usize {
        rows.iter()
            .filter(|&&r| test.samples()[r].label.is_anomalous())
            .count()
    }
}

fn partition(test: &FeatureSet) -> (Vec<usize>, Vec<usize>) {
    (0..test.n()).partition(|&i| test.samples()[i].label == Label::Normal)
}

fn merged(mut a: Vec<usize>, b: &[usize]) -> Vec<usize> {
    a.extend_from_slice(b);
    a.sort_unstable();
    a
}

/// Greedy and eval sides both equal the whole test set.
pub fn split_exp1(test: &FeatureSet) -> Result<SplitSpec> {
    let (normal, anomalous) = partition(test);
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::SingleClass);
    }
    let all: Vec<usize> = (0..test.n()).collect();
    Ok(SplitSpec {
        greedy_rows: all.clone(),
        eval_rows: all,
        descriptor: "exp1".into(),
    })
}

/// Greedy side gets one anomaly type, eval side gets every other type.
pub fn split_exp2(test: &FeatureSet, anomaly_type: &str) -> Result<SplitSpec> {
    let (normal, anomalous) = partition(test);
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::SingleClass);
    }
    let types = test.anomaly_types();
    if types.len() < 2 {
        return Err(Error::InvalidSplit(format!(
            "category {:?} has only one anomaly type",
            test.category()
        )));
    }
    if !types.iter().any(|t| t == anomaly_type) {
        return Err(Error::InvalidSplit(format!(
            "unknown anomaly type {anomaly_type:?} (have {types:?})"
        )));
    }
    let (chosen, rest): (Vec<usize>, Vec<usize>) = anomalous
        .iter()
        .partition(|&&r| test.samples()[r].anomaly_type == anomaly_type);
    Ok(SplitSpec {
        greedy_rows: merged(normal.clone(), &chosen),
        eval_rows: merged(normal, &rest),
        descriptor: format!("exp2_{anomaly_type}"),
    })
}

/// Independent generator for one (seed, category, anomaly type) triple.
fn type_stream(seed: u64, category: &str, anomaly_type: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(category.as_bytes());
    hasher.update([0u8]);
    hasher.update(anomaly_type.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Greedy side gets `ceil(n_min / T)` anomalous rows per anomaly type,
/// sampled without replacement; eval side gets the remaining ones.
pub fn split_exp3(test: &FeatureSet, n_min: usize, seed: u64) -> Result<SplitSpec> {
    if n_min == 0 {
        return Err(Error::InvalidSplit("n_min must be at least 1".into()));
    }
    let (normal, anomalous) = partition(test);
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::SingleClass);
    }
    if n_min > anomalous.len() {
        return Err(Error::InvalidSplit(format!(
            "n_min = {n_min} exceeds the {} anomalous rows",
            anomalous.len()
        )));
    }
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &r in &anomalous {
        by_type
            .entry(test.samples()[r].anomaly_type.as_str())
            .or_default()
            .push(r);
    }
    let per_type = n_min.div_ceil(by_type.len());

    let mut greedy_anomalous = Vec::new();
    let mut eval_anomalous = Vec::new();
    for (anomaly_type, rows) in &by_type {
        if rows.len() < per_type {
            return Err(Error::InvalidSplit(format!(
                "anomaly type {anomaly_type:?} has {} rows, {per_type} needed",
                rows.len()
            )));
        }
        let mut rng = type_stream(seed, test.category(), anomaly_type);
        let mut picked = rand::seq::index::sample(&mut rng, rows.len(), per_type).into_vec();
        picked.sort_unstable();
        let mut taken = vec![false; rows.len()];
        for p in picked {
            taken[p] = true;
        }
        for (row, t) in rows.iter().zip(taken) {
            if t {
                greedy_anomalous.push(*row);
            } else {
                eval_anomalous.push(*row);
            }
        }
    }
    if eval_anomalous.is_empty() {
        return Err(Error::InvalidSplit(
            "no anomalous rows left for evaluation".into(),
        ));
    }
    Ok(SplitSpec {
        greedy_rows: merged(normal.clone(), &greedy_anomalous),
        eval_rows: merged(normal, &eval_anomalous),
        descriptor: format!("exp3_seed{seed}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorePaths {
    /// Base path of the training feature store (without extension).
    pub train: PathBuf,
    /// Base path of the test feature store (without extension).
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub category: String,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub methods: Vec<Method>,
    pub feature_store_paths: StorePaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative store paths resolve against its directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            let paths = &mut config.feature_store_paths;
            for p in [&mut paths.train, &mut paths.test] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let duplicated = self
            .methods
            .iter()
            .enumerate()
            .any(|(i, m)| self.methods[i + 1..].contains(m));
        if duplicated {
            return Err(Error::Config("duplicate methods".into()));
        }
        if self.kind == ExperimentKind::Exp3 {
            match self.n_min {
                Some(n) if n >= 1 => {}
                _ => return Err(Error::Config("exp3 requires n_min >= 1".into())),
            }
            if self.seeds.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::Config("exp3 requires at least one seed".into()));
            }
        }
        Ok(())
    }

    pub fn exp3_seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| DEFAULT_EXP3_SEEDS.to_vec())
    }
}

/// Every split the config asks for, in a fixed order.
pub fn splits_for(config: &ExperimentConfig, test: &FeatureSet) -> Result<Vec<SplitSpec>> {
    match config.kind {
        ExperimentKind::Exp1 => Ok(vec![split_exp1(test)?]),
        ExperimentKind::Exp2 => test
            .anomaly_types()
            .iter()
            .map(|t| split_exp2(test, t))
            .collect(),
        ExperimentKind::Exp3 => {
            let n_min = config
                .n_min
                .ok_or_else(|| Error::Config("exp3 requires n_min".into()))?;
            config
                .exp3_seeds()
                .iter()
                .map(|&seed| split_exp3(test, n_min, seed))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub split: SplitSpec,
    pub greedy_anomalous: usize,
    pub eval_anomalous: usize,
    /// One curve per configured method, in config order.
    pub curves: Vec<Curve>,
    /// Full traces of the greedy methods, keyed by method.
    pub traces: Vec<(Method, SelectionTrace)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub d: usize,
    pub n_train: usize,
    pub shrinkage: f64,
    pub outcomes: Vec<SplitOutcome>,
}

impl ExperimentRun {
    /// Per-k mean eval AUROC of `method` across all splits (the cross-seed
    /// mean for Experiment 3).
    pub fn mean_curve(&self, method: Method) -> Option<Vec<f64>> {
        let curves: Vec<&Curve> = self
            .outcomes
            .iter()
            .filter_map(|o| o.curves.iter().find(|c| c.method == method))
            .collect();
        if curves.is_empty() {
            return None;
        }
        let count = curves.len() as f64;
        Some(
            (0..self.d)
                .map(|i| curves.iter().map(|c| c.auroc_values[i]).sum::<f64>() / count)
                .collect(),
        )
    }
}

/// Fits one model on `train`, whitens `test` once, and evaluates every
/// configured method on every split.
pub fn run_experiment(
    train: &FeatureSet,
    test: &FeatureSet,
    config: &ExperimentConfig,
) -> Result<ExperimentRun> {
    config.validate()?;
    if train.d() != test.d() {
        return Err(Error::DimensionMismatch {
            expected: train.d(),
            found: test.d(),
        });
    }
    let model = GaussianModel::fit(train)?;
    let white = model.whiten(test)?;
    run_on_white(&model, train.n(), test, &white, config)
}

fn run_on_white(
    model: &GaussianModel,
    n_train: usize,
    test: &FeatureSet,
    white: &WhiteSet,
    config: &ExperimentConfig,
) -> Result<ExperimentRun> {
    let mut outcomes = Vec::new();
    for split in splits_for(config, test)? {
        log::info!("split {}", split.descriptor);
        let greedy = white.select_rows(&split.greedy_rows)?;
        let eval = white.select_rows(&split.eval_rows)?;
        let mut curves = Vec::with_capacity(config.methods.len());
        let mut traces = Vec::new();
        for &method in &config.methods {
            let (curve, trace) = curve_with_trace(&greedy, &eval, method)?;
            curves.push(curve);
            if let Some(t) = trace {
                traces.push((method, t));
            }
        }
        outcomes.push(SplitOutcome {
            greedy_anomalous: SplitSpec::count_anomalous(&split.greedy_rows, test),
            eval_anomalous: SplitSpec::count_anomalous(&split.eval_rows, test),
            split,
            curves,
            traces,
        });
    }
    Ok(ExperimentRun {
        config: config.clone(),
        d: model.d(),
        n_train,
        shrinkage: model.shrinkage(),
        outcomes,
    })
}

/// File-name stem for one (split, method) pair.
pub fn output_stem(descriptor: &str, method: Method) -> String {
    let method = method.to_string().replace(':', "-");
    format!("{descriptor}__{method}")
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    descriptor: &'a str,
    method: Method,
    csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
    greedy_anomalous: usize,
    eval_anomalous: usize,
    greedy_rows: &'a [usize],
    eval_rows: &'a [usize],
}

#[derive(Serialize)]
struct Index<'a> {
    config: &'a ExperimentConfig,
    d: usize,
    n_train: usize,
    shrinkage: f64,
    results: Vec<IndexEntry<'a>>,
}

/// Writes `path` through a sibling temporary file so that a failure never
/// leaves a partially written output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes one CSV per (split, method), one trace JSON per greedy run, and
/// `index.json` last. Returns the written paths.
pub fn write_outputs(run: &ExperimentRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut results = Vec::new();
    for outcome in &run.outcomes {
        for curve in &outcome.curves {
            let stem = output_stem(&outcome.split.descriptor, curve.method);
            let csv_name = format!("{stem}.csv");
            let mut buf = Vec::new();
            write_curves_csv(std::slice::from_ref(curve), &mut buf)?;
            let csv_path = out_dir.join(&csv_name);
            write_atomic(&csv_path, &buf)?;
            written.push(csv_path);

            let trace = outcome
                .traces
                .iter()
                .find(|(m, _)| *m == curve.method)
                .map(|(_, t)| -> Result<String> {
                    let name = format!("{stem}.trace.json");
                    let path = out_dir.join(&name);
                    write_atomic(&path, (t.to_json() + "\n").as_bytes())?;
                    written.push(path);
                    Ok(name)
                })
                .transpose()?;

            results.push(IndexEntry {
                descriptor: &outcome.split.descriptor,
                method: curve.method,
                csv: csv_name,
                trace,
                greedy_anomalous: outcome.greedy_anomalous,
                eval_anomalous: outcome.eval_anomalous,
                greedy_rows: &outcome.split.greedy_rows,
                eval_rows: &outcome.split.eval_rows,
            });
        }
    }
    let index = Index {
        config: &run.config,
        d: run.d,
        n_train: run.n_train,
        shrinkage: run.shrinkage,
        results,
    };
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Config(e.to_string()))?;
    let index_path = out_dir.join("index.json");
    write_atomic(&index_path, (text + "\n").as_bytes())?;
    written.push(index_path);
    Ok(written)
}
