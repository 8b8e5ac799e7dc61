//! AUROC as the Mann-Whitney statistic.
//!
//! The statistic is accumulated as an integer count of twice the number of
//! (anomalous, normal) pairs won by the anomalous sample, with ties worth one
//! half-pair, so the result is exact and identical to pairwise enumeration.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::feature_store::Label;

/// Scores with matching labels; both classes present, all scores finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        check(&scores, &labels)?;
        Ok(ScoredLabels { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn auroc(&self) -> f64 {
        auroc_unchecked(&self.scores, &self.labels)
    }
}

fn check(scores: &[f64], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let anomalous = labels.iter().filter(|l| l.is_anomalous()).count();
    if anomalous == 0 || anomalous == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Probability that a random anomalous score exceeds a random normal score,
/// ties counted one half.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check(scores, labels)?;
    Ok(auroc_unchecked(scores, labels))
}

/// [`auroc`] without input validation. Scores must be finite and both
/// classes present.
pub(crate) fn auroc_unchecked(scores: &[f64], labels: &[Label]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let (twice_wins, pairs) = twice_wins(scores, labels, &order);
    twice_wins as f64 / (2 * pairs) as f64
}

/// (2·U, n_anomalous·n_normal) over an ascending ordering of the scores.
fn twice_wins(scores: &[f64], labels: &[Label], order: &[usize]) -> (u64, u64) {
    let mut normals_below: u64 = 0;
    let mut anomalous_total: u64 = 0;
    let mut twice: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        let (mut group_normal, mut group_anomalous) = (0u64, 0u64);
        let mut j = i;
        while j < order.len() && scores[order[j]] == value {
            if labels[order[j]].is_anomalous() {
                group_anomalous += 1;
            } else {
                group_normal += 1;
            }
            j += 1;
        }
        twice += group_anomalous * (2 * normals_below + group_normal);
        normals_below += group_normal;
        anomalous_total += group_anomalous;
        i = j;
    }
    (twice, anomalous_total * normals_below)
}
