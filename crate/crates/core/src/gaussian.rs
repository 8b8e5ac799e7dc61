//! Multivariate Gaussian fitted to normal feature vectors.
//!
//! The covariance is shrunk toward a scaled identity (Ledoit-Wolf), then
//! decomposed as `Σ = Q Λ Qᵀ` with eigenvalues ascending. The whitening map
//! `W = Λ^{-1/2} Qᵀ` turns a centered feature vector into a white vector `w`
//! whose Euclidean norm is the Mahalanobis distance, and whose entry `w_i` is
//! the projection onto `q_i` scaled by `λ_i^{-1/2}`. Selecting eigencomponents
//! therefore reduces to selecting entries of `w`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::feature_store::{FeatureSet, Label};
use crate::selection::ComponentSubset;

pub const GMD_MAGIC: &[u8; 4] = b"GMD1";
pub const GMD_VERSION: u32 = 1;

const SYMMETRY_TOL: f64 = 1e-10;

/// Maximum-likelihood mean of the rows.
pub fn fit_mean(train: &FeatureSet) -> Result<Vec<f64>> {
    let n = train.n();
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    let mut mean = vec![0.0f64; train.d()];
    for row in train.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    let inv = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

/// Rows of `train` minus `mean`, as an n×d f64 matrix.
fn centered(train: &FeatureSet, mean: &[f64]) -> DMatrix<f64> {
    let (n, d) = (train.n(), train.d());
    DMatrix::from_fn(n, d, |i, j| train.row(i)[j] as f64 - mean[j])
}

/// Ledoit-Wolf estimate shrunk toward `m·I`, where `m = trace(S)/d`.
///
/// Returns the shrunk covariance and the shrinkage intensity δ ∈ [0, 1].
/// With `⟨A,B⟩ = trace(ABᵀ)/d`:
///
/// ```text
/// dist² = ‖S − m·I‖²
/// b̄²    = (1/n²) Σ_k ‖x̃_k x̃_kᵀ − S‖²
/// δ     = min(b̄², dist²) / dist²        (0 when dist² = 0)
/// ```
///
/// The sum over outer products is evaluated through the identity
/// `Σ_k ‖x̃_k x̃_kᵀ − S‖²_F = Σ_k ‖x̃_k‖⁴ − n‖S‖²_F`, which holds because
/// `Σ_k x̃_k x̃_kᵀ = nS`.
pub fn fit_covariance_ledoit_wolf(train: &FeatureSet, mean: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let (n, d) = (train.n(), train.d());
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if mean.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: mean.len(),
        });
    }
    if let Some(j) = mean.iter().position(|m| !m.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: j });
    }

    let xc = centered(train, mean);
    let nf = n as f64;
    let df = d as f64;
    let sample = xc.tr_mul(&xc) / nf;

    let m = sample.trace() / df;
    if m <= 0.0 {
        return Err(Error::Degenerate(
            "all training rows are identical (zero covariance)".into(),
        ));
    }
    let s_norm2 = sample.norm_squared();
    // ‖S − mI‖²_F = ‖S‖²_F − 2m·trace(S) + m²d = ‖S‖²_F − m²d
    let dist2 = ((s_norm2 - m * m * df) / df).max(0.0);

    let fourth: f64 = xc
        .row_iter()
        .map(|r| {
            let sq = r.norm_squared();
            sq * sq
        })
        .sum();
    let bbar2 = ((fourth - nf * s_norm2) / (df * nf * nf)).max(0.0);
    let b2 = bbar2.min(dist2);
    let delta = if dist2 == 0.0 { 0.0 } else { b2 / dist2 };

    let mut shrunk = sample * (1.0 - delta);
    for i in 0..d {
        shrunk[(i, i)] += delta * m;
    }
    Ok((shrunk, delta))
}

/// Symmetric eigendecomposition with eigenvalues ascending and each
/// eigenvector's first nonzero entry made non-negative.
pub fn eigendecompose(covariance: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = covariance.nrows();
    if covariance.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: covariance.ncols(),
        });
    }
    let scale = covariance.amax();
    let asym = (covariance - covariance.transpose()).amax();
    let rel = if scale > 0.0 { asym / scale } else { asym };
    if rel > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(rel));
    }

    let eig = SymmetricEigen::new(covariance.clone());
    let mut order: Vec<usize> = (0..d).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(0.0);
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }

    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }
    Ok((values, vectors))
}

/// Fitted normality model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    shrinkage: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    whitening: DMatrix<f64>,
}

impl GaussianModel {
    /// Fits mean, shrunk covariance and its eigendecomposition.
    pub fn fit(train: &FeatureSet) -> Result<Self> {
        if let Some(s) = train.samples().iter().find(|s| s.label != Label::Normal) {
            return Err(Error::InvalidSample {
                image_id: s.image_id.clone(),
                reason: "training rows must be normal".into(),
            });
        }
        let mean = fit_mean(train)?;
        let (covariance, shrinkage) = fit_covariance_ledoit_wolf(train, &mean)?;
        Self::from_parts(mean, covariance, shrinkage)
    }

    /// Builds a model from a mean and an SPD covariance.
    pub fn from_parts(mean: Vec<f64>, covariance: DMatrix<f64>, shrinkage: f64) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: covariance.nrows(),
            });
        }
        let (eigenvalues, eigenvectors) = eigendecompose(&covariance)?;
        Ok(Self::assemble(
            mean,
            covariance,
            shrinkage,
            eigenvalues,
            eigenvectors,
        ))
    }

    fn assemble(
        mean: Vec<f64>,
        covariance: DMatrix<f64>,
        shrinkage: f64,
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
    ) -> Self {
        let d = mean.len();
        let whitening = DMatrix::from_fn(d, d, |i, j| eigenvectors[(j, i)] / eigenvalues[i].sqrt());
        GaussianModel {
            mean,
            covariance,
            shrinkage,
            eigenvalues,
            eigenvectors,
            whitening,
        }
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `Λ^{-1/2} Qᵀ`; row i maps onto component i.
    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }

    /// `Q Λ^{-1} Qᵀ`.
    pub fn precision(&self) -> DMatrix<f64> {
        self.spectral(|l| 1.0 / l)
    }

    /// Symmetric square root of the precision, `Q Λ^{-1/2} Qᵀ = Q·W`.
    pub fn precision_sqrt(&self) -> DMatrix<f64> {
        &self.eigenvectors * &self.whitening
    }

    fn spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.d(), self.d(), |i, j| {
            self.eigenvectors[(i, j)] * f(self.eigenvalues[j])
        });
        scaled * self.eigenvectors.transpose()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found,
            });
        }
        Ok(())
    }

    /// White vector `Λ^{-1/2} Qᵀ (x − μ)`.
    pub fn whiten_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        let centered =
            DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok((&self.whitening * centered).as_slice().to_vec())
    }

    /// Whitens every row of `set`, carrying labels and anomaly types along.
    pub fn whiten(&self, set: &FeatureSet) -> Result<WhiteSet> {
        self.check_dim(set.d())?;
        let xc = centered(set, &self.mean);
        // n×d column-major storage == component-major
        let white = &self.whitening * xc.transpose();
        let samples = set.samples();
        Ok(WhiteSet {
            n: set.n(),
            d: set.d(),
            data: white.transpose().as_slice().to_vec(),
            labels: samples.iter().map(|s| s.label).collect(),
            anomaly_types: samples.iter().map(|s| s.anomaly_type.clone()).collect(),
        })
    }

    /// Mahalanobis distance, evaluated as ‖whiten(x)‖₂.
    pub fn mahalanobis(&self, x: &[f64]) -> Result<f64> {
        let w = self.whiten_vector(x)?;
        Ok(w.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// `GMD1` container: magic, u32 version, u32 d, then f64 mean,
    /// eigenvalues, eigenvectors (row-major), covariance (row-major), and
    /// shrinkage. Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.d();
        let mut out = Vec::with_capacity(12 + 8 * (2 * d + 2 * d * d + 1));
        out.extend_from_slice(GMD_MAGIC);
        out.extend_from_slice(&GMD_VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        self.mean.iter().for_each(|&v| put(v));
        self.eigenvalues.iter().for_each(|&v| put(v));
        for i in 0..d {
            for j in 0..d {
                put(self.eigenvectors[(i, j)]);
            }
        }
        for i in 0..d {
            for j in 0..d {
                put(self.covariance[(i, j)]);
            }
        }
        put(self.shrinkage);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::PayloadLength {
                expected: 12,
                found: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4-byte slice");
        if &magic != GMD_MAGIC {
            return Err(Error::BadMagic {
                expected: "GMD1",
                found: magic,
            });
        }
        let word =
            |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
        let version = word(4);
        if version != GMD_VERSION {
            return Err(Error::VersionMismatch {
                expected: GMD_VERSION,
                found: version,
            });
        }
        let d = word(8) as usize;
        if d == 0 {
            return Err(Error::EmptyDimension { n: 0, d });
        }
        let expected = 12 + 8 * (2 * d as u64 + 2 * (d as u64).pow(2) + 1);
        if bytes.len() as u64 != expected {
            return Err(Error::PayloadLength {
                expected,
                found: bytes.len() as u64,
            });
        }
        let mut values = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |count: usize| values.by_ref().take(count).collect::<Vec<f64>>();
        let mean = take(d);
        let eigenvalues = take(d);
        let eigenvectors = DMatrix::from_row_slice(d, d, &take(d * d));
        let covariance = DMatrix::from_row_slice(d, d, &take(d * d));
        let shrinkage = take(1)[0];
        if let Some((index, &value)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v <= 0.0)
        {
            return Err(Error::NonPositiveEigenvalue { index, value });
        }
        Ok(Self::assemble(
            mean,
            covariance,
            shrinkage,
            eigenvalues,
            eigenvectors,
        ))
    }
}

/// White vectors of a labeled set, stored component-major so that one
/// eigencomponent across all samples is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
    labels: Vec<Label>,
    anomaly_types: Vec<String>,
}

impl WhiteSet {
    /// Builds a set from per-sample white vectors.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<Label>,
        anomaly_types: Vec<String>,
    ) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Err(Error::EmptyDimension { n, d });
        }
        if labels.len() != n || anomaly_types.len() != n {
            return Err(Error::RowMismatch {
                rows: n,
                samples: labels.len().min(anomaly_types.len()),
            });
        }
        let mut data = vec![0.0; n * d];
        for (s, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: s, col: i });
                }
                data[i * n + s] = v;
            }
        }
        Ok(WhiteSet {
            n,
            d,
            data,
            labels,
            anomaly_types,
        })
    }

    /// Labeled rows where the anomaly type is derived from the label.
    pub fn from_labeled_rows(rows: &[Vec<f64>], labels: Vec<Label>) -> Result<Self> {
        let types = labels
            .iter()
            .map(|l| match l {
                Label::Normal => crate::feature_store::NORMAL_TYPE.to_string(),
                Label::Anomalous => "anomalous".to_string(),
            })
            .collect();
        Self::from_rows(rows, labels, types)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn anomaly_types(&self) -> &[String] {
        &self.anomaly_types
    }

    /// Entry `i` of every sample's white vector.
    pub fn component(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// White vector of sample `s`.
    pub fn row(&self, s: usize) -> Vec<f64> {
        (0..self.d).map(|i| self.data[i * self.n + s]).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|l| l.is_anomalous())
            && self.labels.iter().any(|l| !l.is_anomalous())
    }

    /// Copies the given sample rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<WhiteSet> {
        if rows.is_empty() {
            return Err(Error::EmptySelection);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                d: self.n,
            });
        }
        let m = rows.len();
        let mut data = Vec::with_capacity(m * self.d);
        for i in 0..self.d {
            let col = self.component(i);
            data.extend(rows.iter().map(|&r| col[r]));
        }
        Ok(WhiteSet {
            n: m,
            d: self.d,
            data,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            anomaly_types: rows
                .iter()
                .map(|&r| self.anomaly_types[r].clone())
                .collect(),
        })
    }
}

/// Euclidean norm of the white-vector entries named by `subset`.
pub fn subset_score(w: &[f64], subset: &ComponentSubset) -> Result<f64> {
    subset.validate(w.len())?;
    Ok(subset
        .indices()
        .iter()
        .map(|&i| w[i] * w[i])
        .sum::<f64>()
        .sqrt())
}
