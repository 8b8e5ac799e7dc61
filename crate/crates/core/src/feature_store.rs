//! On-disk feature stores.
//!
//! A store is a pair of files sharing a base path: `<base>.fvs` holds the
//! n×d matrix and `<base>.json` holds per-row metadata.
//!
//! `.fvs` layout (all little-endian):
//!
//! | offset | size    | content                          |
//! |--------|---------|----------------------------------|
//! | 0      | 4       | ASCII `FVS1`                     |
//! | 4      | 4       | format version, u32 (= 1)        |
//! | 8      | 4       | n, u32                           |
//! | 12     | 4       | d, u32                           |
//! | 16     | 4·n·d   | f32 entries, row-major           |

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FVS_MAGIC: &[u8; 4] = b"FVS1";
pub const FVS_VERSION: u32 = 1;
pub const FVS_HEADER_LEN: usize = 16;

/// Anomaly-type label carried by every normal sample.
pub const NORMAL_TYPE: &str = "good";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub image_id: String,
    pub split: Split,
    pub label: Label,
    pub anomaly_type: String,
}

impl SampleMeta {
    pub fn normal(image_id: impl Into<String>, split: Split) -> Self {
        SampleMeta {
            image_id: image_id.into(),
            split,
            label: Label::Normal,
            anomaly_type: NORMAL_TYPE.to_string(),
        }
    }

    pub fn anomalous(image_id: impl Into<String>, anomaly_type: impl Into<String>) -> Self {
        SampleMeta {
            image_id: image_id.into(),
            split: Split::Test,
            label: Label::Anomalous,
            anomaly_type: anomaly_type.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidSample {
            image_id: self.image_id.clone(),
            reason: reason.to_string(),
        };
        match self.label {
            Label::Normal if self.anomaly_type != NORMAL_TYPE => {
                Err(invalid("normal sample must have anomaly_type \"good\""))
            }
            Label::Anomalous if self.anomaly_type == NORMAL_TYPE => Err(invalid(
                "anomalous sample cannot have anomaly_type \"good\"",
            )),
            Label::Anomalous if self.split == Split::Train => {
                Err(invalid("train split holds only normal samples"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    category: String,
    node: String,
    samples: Vec<SampleMeta>,
}

/// Image-level feature vectors of one (category, node) pair plus row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    matrix: Vec<f32>,
    samples: Vec<SampleMeta>,
    node: String,
    category: String,
}

impl FeatureSet {
    /// Builds a set from a row-major matrix, checking every invariant.
    pub fn new(
        matrix: Vec<f32>,
        d: usize,
        samples: Vec<SampleMeta>,
        node: impl Into<String>,
        category: impl Into<String>,
    ) -> Result<Self> {
        let n = samples.len();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDimension { n, d });
        }
        if matrix.len() != n * d {
            return Err(Error::RowMismatch {
                rows: matrix.len() / d,
                samples: n,
            });
        }
        check_finite(&matrix, d)?;
        for s in &samples {
            s.validate()?;
        }
        Ok(FeatureSet {
            n,
            d,
            matrix,
            samples,
            node: node.into(),
            category: category.into(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f32>],
        samples: Vec<SampleMeta>,
        node: impl Into<String>,
        category: impl Into<String>,
    ) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != samples.len() {
            return Err(Error::RowMismatch {
                rows: rows.len(),
                samples: samples.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), d, samples, node, category)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn samples(&self) -> &[SampleMeta] {
        &self.samples
    }

    /// Row-major matrix entries.
    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.matrix.chunks_exact(self.d)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Sorted distinct anomaly types among anomalous rows.
    pub fn anomaly_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self
            .samples
            .iter()
            .filter(|s| s.label.is_anomalous())
            .map(|s| s.anomaly_type.clone())
            .collect();
        types.sort();
        types.dedup();
        types
    }

    /// Keeps the rows whose metadata satisfies `predicate`, in order.
    pub fn filter<P>(&self, predicate: P) -> Result<FeatureSet>
    where
        P: Fn(&SampleMeta) -> bool,
    {
        let rows: Vec<usize> = (0..self.n)
            .filter(|&i| predicate(&self.samples[i]))
            .collect();
        self.select_rows(&rows)
    }

    /// Copies the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureSet> {
        if rows.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut matrix = Vec::with_capacity(rows.len() * self.d);
        let mut samples = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    d: self.n,
                });
            }
            matrix.extend_from_slice(self.row(r));
            samples.push(self.samples[r].clone());
        }
        Ok(FeatureSet {
            n: rows.len(),
            d: self.d,
            matrix,
            samples,
            node: self.node.clone(),
            category: self.category.clone(),
        })
    }
}

/// Free-function form of [`FeatureSet::filter`].
pub fn filter_samples<P>(set: &FeatureSet, predicate: P) -> Result<FeatureSet>
where
    P: Fn(&SampleMeta) -> bool,
{
    set.filter(predicate)
}

fn check_finite(matrix: &[f32], d: usize) -> Result<()> {
    match matrix.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p / d,
            col: p % d,
        }),
        None => Ok(()),
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn matrix_path(base: &Path) -> PathBuf {
    with_suffix(base, ".fvs")
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_suffix(base, ".json")
}

/// Writes `<base>.fvs` and `<base>.json`.
pub fn write_feature_set(set: &FeatureSet, base: impl AsRef<Path>) -> Result<()> {
    let base = base.as_ref();
    if set.samples.len() != set.n || set.matrix.len() != set.n * set.d {
        return Err(Error::RowMismatch {
            rows: set.n,
            samples: set.samples.len(),
        });
    }
    let n = u32::try_from(set.n).map_err(|_| Error::Config("n exceeds u32".into()))?;
    let d = u32::try_from(set.d).map_err(|_| Error::Config("d exceeds u32".into()))?;

    let mut bytes = Vec::with_capacity(FVS_HEADER_LEN + 4 * set.matrix.len());
    bytes.extend_from_slice(FVS_MAGIC);
    bytes.extend_from_slice(&FVS_VERSION.to_le_bytes());
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    for v in &set.matrix {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let fvs = matrix_path(base);
    fs::write(&fvs, bytes).map_err(|e| Error::io(&fvs, e))?;

    let manifest = Manifest {
        category: set.category.clone(),
        node: set.node.clone(),
        samples: set.samples.clone(),
    };
    let json = manifest_path(base);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Manifest {
        path: json.clone(),
        source: e,
    })?;
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(())
}

/// Parses an `.fvs` payload into (n, d, row-major entries).
pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < FVS_HEADER_LEN {
        return Err(Error::PayloadLength {
            expected: FVS_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4-byte slice");
    if &magic != FVS_MAGIC {
        return Err(Error::BadMagic {
            expected: "FVS1",
            found: magic,
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
    let version = word(4);
    if version != FVS_VERSION {
        return Err(Error::VersionMismatch {
            expected: FVS_VERSION,
            found: version,
        });
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    if n == 0 || d == 0 {
        return Err(Error::EmptyDimension { n, d });
    }
    let expected = FVS_HEADER_LEN as u64 + 4 * (n as u64) * (d as u64);
    if bytes.len() as u64 != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len() as u64,
        });
    }
    let matrix: Vec<f32> = bytes[FVS_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    check_finite(&matrix, d)?;
    Ok((n, d, matrix))
}

pub fn read_feature_set(base: impl AsRef<Path>) -> Result<FeatureSet> {
    let base = base.as_ref();
    let fvs = matrix_path(base);
    let bytes = fs::read(&fvs).map_err(|e| Error::io(&fvs, e))?;
    let (n, d, matrix) = decode_matrix(&bytes)?;

    let json = manifest_path(base);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: json.clone(),
        source: e,
    })?;
    if manifest.samples.len() != n {
        return Err(Error::RowMismatch {
            rows: n,
            samples: manifest.samples.len(),
        });
    }
    FeatureSet::new(
        matrix,
        d,
        manifest.samples,
        manifest.node,
        manifest.category,
    )
}

/// Summary printed by `eigengreedy validate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoreReport {
    pub category: String,
    pub node: String,
    pub n: usize,
    pub d: usize,
    pub train: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
    /// Anomalous row count per anomaly type.
    pub anomaly_types: BTreeMap<String, usize>,
}

pub fn validate_store(base: impl AsRef<Path>) -> Result<StoreReport> {
    let set = read_feature_set(base)?;
    let mut report = StoreReport {
        category: set.category.clone(),
        node: set.node.clone(),
        n: set.n,
        d: set.d,
        train: 0,
        test_normal: 0,
        test_anomalous: 0,
        anomaly_types: BTreeMap::new(),
    };
    for s in &set.samples {
        match (s.split, s.label) {
            (Split::Train, _) => report.train += 1,
            (Split::Test, Label::Normal) => report.test_normal += 1,
            (Split::Test, Label::Anomalous) => {
                report.test_anomalous += 1;
                *report
                    .anomaly_types
                    .entry(s.anomaly_type.clone())
                    .or_default() += 1;
            }
        }
    }
    Ok(report)
}
