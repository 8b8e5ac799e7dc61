//! Post-hoc analyses of curves and bottom-up traces.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianModel, WhiteSet};
use crate::metrics::auroc_unchecked;
use crate::selection::{subset_scores, ComponentSubset, Curve, SelectionMode, SelectionTrace};

pub const DEFAULT_REGIME_TOLERANCE: f64 = 0.005;

/// Rise / plateau / drop split of a k-vs-AUROC curve.
///
/// The plateau is the longest contiguous run of k with AUROC within
/// `tolerance` of the maximum that contains the first k reaching the
/// maximum. The rise ends where the plateau starts; the drop is everything
/// after `plateau_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegmentation {
    pub rise_end: usize,
    pub plateau_end: usize,
    pub max_auroc: f64,
    pub tolerance: f64,
}

impl RegimeSegmentation {
    /// The two replacement start positions: first and last k of the plateau.
    pub fn canonical_k_primes(&self) -> [usize; 2] {
        [self.rise_end, self.plateau_end]
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidCurve("empty curve".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCurve("non-finite AUROC".into()));
    }
    Ok(())
}

/// Regime split over AUROC values indexed by k − 1.
pub fn segment_values(values: &[f64], tolerance: f64) -> Result<RegimeSegmentation> {
    check_values(values)?;
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::Config(format!("tolerance {tolerance} must be >= 0")));
    }
    let (first_max, max_auroc) = first_max(values);
    let floor = max_auroc - tolerance;
    let mut start = first_max;
    while start > 0 && values[start - 1] >= floor {
        start -= 1;
    }
    let mut end = first_max;
    while end + 1 < values.len() && values[end + 1] >= floor {
        end += 1;
    }
    Ok(RegimeSegmentation {
        rise_end: start + 1,
        plateau_end: end + 1,
        max_auroc,
        tolerance,
    })
}

pub fn segment_regimes(curve: &Curve, tolerance: f64) -> Result<RegimeSegmentation> {
    segment_values(&curve.auroc_values, tolerance)
}

fn first_max(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Smallest k reaching the maximal eval AUROC, with that AUROC.
pub fn k_at_max_auroc(curve: &Curve) -> Result<(usize, f64)> {
    check_values(&curve.auroc_values)?;
    let (i, v) = first_max(&curve.auroc_values);
    Ok((i + 1, v))
}

/// (step index, component index) pairs in selection order.
pub fn selection_order(trace: &SelectionTrace) -> Vec<(usize, usize)> {
    trace.steps.iter().map(|s| (s.step, s.component)).collect()
}

/// PCA reference order: largest-variance component first (slope −1).
pub fn pca_reference_order(d: usize) -> Vec<(usize, usize)> {
    (1..=d).map(|step| (step, d - step)).collect()
}

/// NPCA reference order: smallest-variance component first (slope +1).
pub fn npca_reference_order(d: usize) -> Vec<(usize, usize)> {
    (1..=d).map(|step| (step, step - 1)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// Independent standard-normal axes.
    Noise,
    /// Gaussian random projections of the retained entries.
    Redundant,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Noise => "noise",
            SignalKind::Redundant => "redundant",
        })
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(SignalKind::Noise),
            "redundant" => Ok(SignalKind::Redundant),
            other => Err(Error::Config(format!("unknown signal {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub k_prime: usize,
    pub signal: SignalKind,
    /// k'..=d
    pub k_values: Vec<usize>,
    pub auroc_min: Vec<f64>,
    pub auroc_mean: Vec<f64>,
    pub auroc_max: Vec<f64>,
    pub n_seeds: usize,
    /// AUROC of the k' − 1 retained components alone (no synthetic axis).
    pub retained_auroc: f64,
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn seed_stream(master_seed: u64, seed_index: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"replacement");
    hasher.update(master_seed.to_le_bytes());
    hasher.update((seed_index as u64).to_le_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    ChaCha8Rng::from_seed(key)
}

/// Synthetic axes for one seed, each rescaled to its target std.
fn synthetic_axes(
    rng: &mut ChaCha8Rng,
    signal: SignalKind,
    retained: &[&[f64]],
    targets: &[f64],
    n: usize,
) -> Vec<Vec<f64>> {
    let fan_in = retained.len();
    targets
        .iter()
        .map(|&target| {
            let mut axis: Vec<f64> = match signal {
                SignalKind::Noise => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
                SignalKind::Redundant => {
                    let scale = 1.0 / (fan_in as f64).sqrt();
                    let coeffs: Vec<f64> = (0..fan_in)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            z * scale
                        })
                        .collect();
                    (0..n)
                        .map(|s| coeffs.iter().zip(retained).map(|(c, r)| c * r[s]).sum())
                        .collect()
                }
            };
            let sd = std_dev(&axis);
            let factor = if sd > 0.0 { target / sd } else { 0.0 };
            axis.iter_mut().for_each(|v| *v *= factor);
            axis
        })
        .collect()
}

/// Replaces the trace components from position `k_prime` onward with
/// synthetic axes and records test AUROC for every k in `k_prime..=d`.
///
/// The first `k_prime − 1` trace components are kept. At size k the model
/// holds those plus `k − k_prime + 1` synthetic axes; the synthetic axis at
/// trace position i is scaled to the test-set std of the original component
/// at position i. Each of `n_seeds` repetitions draws fresh axes from a
/// stream derived from `master_seed`.
pub fn simulate_replacement(
    model: &GaussianModel,
    trace: &SelectionTrace,
    test_white: &WhiteSet,
    k_prime: usize,
    signal: SignalKind,
    n_seeds: usize,
    master_seed: u64,
) -> Result<SimulationResult> {
    let d = model.d();
    if test_white.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: test_white.d(),
        });
    }
    trace.validate()?;
    if trace.mode != SelectionMode::BottomUp || trace.d != d || trace.steps.len() != d {
        return Err(Error::InvalidTrace(format!(
            "need a complete bottom-up trace over d = {d} components"
        )));
    }
    if k_prime == 0 || k_prime > d {
        return Err(Error::InvalidK { k: k_prime, d });
    }
    if signal == SignalKind::Redundant && k_prime < 2 {
        return Err(Error::Config(
            "redundant signal needs k' >= 2 (no retained axes to project)".into(),
        ));
    }
    if n_seeds == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    if !test_white.has_both_classes() {
        return Err(Error::SingleClass);
    }

    let order = trace.components();
    let n = test_white.n();
    let labels = test_white.labels();
    let retained_idx = &order[..k_prime - 1];
    let retained: Vec<&[f64]> = retained_idx
        .iter()
        .map(|&c| test_white.component(c))
        .collect();
    let retained_scores = if retained_idx.is_empty() {
        vec![0.0; n]
    } else {
        subset_scores(test_white, &ComponentSubset::new(retained_idx.to_vec(), d)?)?
    };
    let retained_auroc = auroc_unchecked(&retained_scores, labels);
    let retained_sq: Vec<f64> = retained_scores.iter().map(|s| s * s).collect();
    let targets: Vec<f64> = order[k_prime - 1..]
        .iter()
        .map(|&c| std_dev(test_white.component(c)))
        .collect();

    let per_seed: Vec<Vec<f64>> = (0..n_seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = seed_stream(master_seed, seed);
            let axes = synthetic_axes(&mut rng, signal, &retained, &targets, n);
            let mut sums = retained_sq.clone();
            axes.iter()
                .map(|axis| {
                    for (s, v) in sums.iter_mut().zip(axis) {
                        *s += v * v;
                    }
                    let scores: Vec<f64> = sums.iter().map(|s| s.sqrt()).collect();
                    auroc_unchecked(&scores, labels)
                })
                .collect()
        })
        .collect();

    let count = d - k_prime + 1;
    let mut auroc_min = vec![f64::INFINITY; count];
    let mut auroc_max = vec![f64::NEG_INFINITY; count];
    let mut auroc_mean = vec![0.0; count];
    for run in &per_seed {
        for (i, &a) in run.iter().enumerate() {
            auroc_min[i] = auroc_min[i].min(a);
            auroc_max[i] = auroc_max[i].max(a);
            auroc_mean[i] += a;
        }
    }
    auroc_mean.iter_mut().for_each(|m| *m /= n_seeds as f64);

    Ok(SimulationResult {
        k_prime,
        signal,
        k_values: (k_prime..=d).collect(),
        auroc_min,
        auroc_mean,
        auroc_max,
        n_seeds,
        retained_auroc,
    })
}

/// CSV with columns `signal,k_prime,seed_count,k,auroc_min,auroc_mean,auroc_max`.
pub fn write_simulation_csv<W: Write>(result: &SimulationResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::InvalidCurve(e.to_string());
    w.write_record([
        "signal",
        "k_prime",
        "seed_count",
        "k",
        "auroc_min",
        "auroc_mean",
        "auroc_max",
    ])
    .map_err(err)?;
    for (i, k) in result.k_values.iter().enumerate() {
        w.write_record([
            result.signal.to_string(),
            result.k_prime.to_string(),
            result.n_seeds.to_string(),
            k.to_string(),
            result.auroc_min[i].to_string(),
            result.auroc_mean[i].to_string(),
            result.auroc_max[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidCurve(e.to_string()))
}
