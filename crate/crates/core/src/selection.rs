//! Greedy eigencomponent selection and truncation baselines.
//!
//! Components are indexed in ascending-eigenvalue order, so index 0 is the
//! smallest-variance axis of the shrunk covariance. The greedy searches use
//! AUROC on a greedy set as their objective; curves report AUROC on a
//! separate eval set for every subset size k = 1..d.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::WhiteSet;
use crate::metrics::auroc_unchecked;

/// Ordered list of distinct component indices, all below `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSubset {
    indices: Vec<usize>,
}

impl ComponentSubset {
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        let subset = ComponentSubset { indices };
        subset.validate(d)?;
        Ok(subset)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = vec![false; d];
        for &i in &self.indices {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, d });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Same members, ascending.
    pub fn sorted(&self) -> ComponentSubset {
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        ComponentSubset { indices }
    }
}

fn check_k(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidK { k, d });
    }
    Ok(())
}

/// First k components (smallest variance).
pub fn npca_subset(d: usize, k: usize) -> Result<ComponentSubset> {
    check_k(d, k)?;
    Ok(ComponentSubset {
        indices: (0..k).collect(),
    })
}

/// Last k components (largest variance).
pub fn pca_subset(d: usize, k: usize) -> Result<ComponentSubset> {
    check_k(d, k)?;
    Ok(ComponentSubset {
        indices: (d - k..d).collect(),
    })
}

/// Contiguous slice `lo..hi`.
pub fn range_subset(d: usize, lo: usize, hi: usize) -> Result<ComponentSubset> {
    if lo >= hi || hi > d {
        return Err(Error::InvalidRange { lo, hi, d });
    }
    Ok(ComponentSubset {
        indices: (lo..hi).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    BottomUp,
    TopDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based.
    pub step: usize,
    pub component: usize,
    pub greedy_auroc: f64,
}

/// Search path of one greedy run: insertion order for bottom-up, removal
/// order for top-down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub mode: SelectionMode,
    pub d: usize,
    pub steps: Vec<TraceStep>,
}

impl SelectionTrace {
    pub fn components(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.component).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let comps = self.components();
        ComponentSubset::new(comps, self.d).map_err(|e| Error::InvalidTrace(e.to_string()))?;
        for (i, s) in self.steps.iter().enumerate() {
            if s.step != i + 1 {
                return Err(Error::InvalidTrace(format!(
                    "step {} listed at position {}",
                    s.step,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// The model with k components implied by this trace.
    pub fn subset_at(&self, k: usize) -> Result<ComponentSubset> {
        check_k(self.d, k)?;
        match self.mode {
            SelectionMode::BottomUp => {
                if k > self.steps.len() {
                    return Err(Error::InvalidTrace(format!(
                        "bottom-up trace has {} steps, k = {k} requested",
                        self.steps.len()
                    )));
                }
                Ok(ComponentSubset {
                    indices: self.steps[..k].iter().map(|s| s.component).collect(),
                })
            }
            SelectionMode::TopDown => {
                let removed = self.d - k;
                if removed > self.steps.len() {
                    return Err(Error::InvalidTrace(format!(
                        "top-down trace has {} removals, k = {k} needs {removed}",
                        self.steps.len()
                    )));
                }
                let mut out = vec![false; self.d];
                for s in &self.steps[..removed] {
                    out[s.component] = true;
                }
                Ok(ComponentSubset {
                    indices: (0..self.d).filter(|&i| !out[i]).collect(),
                })
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let trace: SelectionTrace =
            serde_json::from_str(text).map_err(|e| Error::InvalidTrace(e.to_string()))?;
        trace.validate()?;
        Ok(trace)
    }
}

fn check_greedy_input(set: &WhiteSet, k: usize) -> Result<()> {
    check_k(set.d(), k)?;
    if !set.has_both_classes() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Index of the first maximum, i.e. the smallest candidate on ties.
fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Forward selection: grow the in-set from empty, adding at each step the
/// component that maximizes greedy-set AUROC.
pub fn greedy_bottom_up(set: &WhiteSet, k: usize) -> Result<SelectionTrace> {
    check_greedy_input(set, k)?;
    let n = set.n();
    let labels = set.labels();
    // per-sample sum of squared entries over the in-set, in insertion order
    let mut running = vec![0.0f64; n];
    let mut out: Vec<usize> = (0..set.d()).collect();
    let mut steps = Vec::with_capacity(k);

    for step in 1..=k {
        let evaluations: Vec<f64> = out
            .par_iter()
            .map(|&c| {
                let comp = set.component(c);
                let scores: Vec<f64> = running
                    .iter()
                    .zip(comp)
                    .map(|(r, w)| (r + w * w).sqrt())
                    .collect();
                auroc_unchecked(&scores, labels)
            })
            .collect();
        let best = first_argmax(&evaluations);
        let chosen = out.remove(best);
        for (r, w) in running.iter_mut().zip(set.component(chosen)) {
            *r += w * w;
        }
        steps.push(TraceStep {
            step,
            component: chosen,
            greedy_auroc: evaluations[best],
        });
    }
    Ok(SelectionTrace {
        mode: SelectionMode::BottomUp,
        d: set.d(),
        steps,
    })
}

/// Backward elimination: start from every component and remove, at each
/// step, the one whose removal maximizes greedy-set AUROC, until k remain.
pub fn greedy_top_down(set: &WhiteSet, k: usize) -> Result<SelectionTrace> {
    check_greedy_input(set, k)?;
    let n = set.n();
    let labels = set.labels();
    let mut inset: Vec<usize> = (0..set.d()).collect();
    let mut steps = Vec::with_capacity(set.d() - k);

    while inset.len() > k {
        let m = inset.len();
        // prefix[j] = Σ_{l<j} w², suffix[j] = Σ_{l≥j} w², over the in-set
        let mut prefix = vec![0.0f64; (m + 1) * n];
        let mut suffix = vec![0.0f64; (m + 1) * n];
        for j in 0..m {
            let comp = set.component(inset[j]);
            let (done, next) = prefix.split_at_mut((j + 1) * n);
            for ((p, &q), w) in next[..n].iter_mut().zip(&done[j * n..]).zip(comp) {
                *p = q + w * w;
            }
        }
        for j in (0..m).rev() {
            let comp = set.component(inset[j]);
            let (head, tail) = suffix.split_at_mut((j + 1) * n);
            for ((s, &q), w) in head[j * n..].iter_mut().zip(&tail[..n]).zip(comp) {
                *s = q + w * w;
            }
        }

        let evaluations: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|j| {
                let before = &prefix[j * n..(j + 1) * n];
                let after = &suffix[(j + 1) * n..(j + 2) * n];
                let scores: Vec<f64> = before
                    .iter()
                    .zip(after)
                    .map(|(a, b)| (a + b).sqrt())
                    .collect();
                auroc_unchecked(&scores, labels)
            })
            .collect();
        let best = first_argmax(&evaluations);
        let removed = inset.remove(best);
        steps.push(TraceStep {
            step: steps.len() + 1,
            component: removed,
            greedy_auroc: evaluations[best],
        });
    }
    Ok(SelectionTrace {
        mode: SelectionMode::TopDown,
        d: set.d(),
        steps,
    })
}

/// Per-sample norms over `subset`, summing squares in ascending index order
/// so that equal subsets give bitwise-equal scores however they were built.
pub fn subset_scores(set: &WhiteSet, subset: &ComponentSubset) -> Result<Vec<f64>> {
    subset.validate(set.d())?;
    let mut sums = vec![0.0f64; set.n()];
    for &c in subset.sorted().indices() {
        for (s, w) in sums.iter_mut().zip(set.component(c)) {
            *s += w * w;
        }
    }
    sums.iter_mut().for_each(|s| *s = s.sqrt());
    Ok(sums)
}

/// AUROC of the reduced model `subset` on `set`.
pub fn subset_auroc(set: &WhiteSet, subset: &ComponentSubset) -> Result<f64> {
    if !set.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let scores = subset_scores(set, subset)?;
    Ok(auroc_unchecked(&scores, set.labels()))
}

/// Dimension-reduction strategy evaluated along a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    BottomUp,
    TopDown,
    Pca,
    Npca,
    /// Contiguous window of k components starting at `start`, shifted down
    /// when it would run past d. `start = 0` is NPCA; `start ≥ d − k` is PCA.
    Range {
        start: usize,
    },
}

impl Method {
    pub fn is_greedy(self) -> bool {
        matches!(self, Method::BottomUp | Method::TopDown)
    }

    /// Subset for size k under a data-independent method.
    pub fn baseline_subset(self, d: usize, k: usize) -> Result<ComponentSubset> {
        match self {
            Method::Pca => pca_subset(d, k),
            Method::Npca => npca_subset(d, k),
            Method::Range { start } => {
                check_k(d, k)?;
                let lo = start.min(d - k);
                range_subset(d, lo, lo + k)
            }
            Method::BottomUp | Method::TopDown => Err(Error::Config(format!(
                "{self} needs a greedy search, not index arithmetic"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::BottomUp => f.write_str("bottom_up"),
            Method::TopDown => f.write_str("top_down"),
            Method::Pca => f.write_str("pca"),
            Method::Npca => f.write_str("npca"),
            Method::Range { start } => write!(f, "range:{start}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom_up" => Ok(Method::BottomUp),
            "top_down" => Ok(Method::TopDown),
            "pca" => Ok(Method::Pca),
            "npca" => Ok(Method::Npca),
            other => other
                .strip_prefix("range:")
                .and_then(|start| start.parse().ok())
                .map(|start| Method::Range { start })
                .ok_or_else(|| Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// k ↦ AUROC for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub method: Method,
    pub k_values: Vec<usize>,
    pub auroc_values: Vec<f64>,
    /// Greedy-set objective per k; `None` for data-independent baselines.
    pub greedy_auroc_values: Option<Vec<f64>>,
    /// Component added (bottom-up) or removed (top-down) to reach each k.
    pub component_changes: Option<Vec<Option<usize>>>,
}

impl Curve {
    pub fn d(&self) -> usize {
        self.k_values.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.k_values.len();
        if d == 0 {
            return Err(Error::InvalidCurve("empty curve".into()));
        }
        if self.k_values.iter().enumerate().any(|(i, &k)| k != i + 1) {
            return Err(Error::InvalidCurve("k values must be 1..d".into()));
        }
        if self.auroc_values.len() != d
            || self
                .greedy_auroc_values
                .as_ref()
                .is_some_and(|g| g.len() != d)
        {
            return Err(Error::InvalidCurve("array lengths differ".into()));
        }
        if self.auroc_values.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidCurve("AUROC outside [0, 1]".into()));
        }
        Ok(())
    }
}

fn check_pair(greedy: &WhiteSet, eval: &WhiteSet) -> Result<()> {
    if greedy.d() != eval.d() {
        return Err(Error::DimensionMismatch {
            expected: greedy.d(),
            found: eval.d(),
        });
    }
    if !greedy.has_both_classes() || !eval.has_both_classes() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Evaluates `method` for every k in 1..d: greedy methods search on
/// `greedy` (one full trace, then prefixes), and every subset is scored on
/// `eval`.
pub fn curve(greedy: &WhiteSet, eval: &WhiteSet, method: Method) -> Result<Curve> {
    curve_with_trace(greedy, eval, method).map(|(c, _)| c)
}

/// [`curve`] plus the full greedy trace for greedy methods.
pub fn curve_with_trace(
    greedy: &WhiteSet,
    eval: &WhiteSet,
    method: Method,
) -> Result<(Curve, Option<SelectionTrace>)> {
    check_pair(greedy, eval)?;
    let d = eval.d();
    let trace = match method {
        Method::BottomUp => Some(greedy_bottom_up(greedy, d)?),
        Method::TopDown => Some(greedy_top_down(greedy, 1)?),
        _ => None,
    };
    let subsets: Vec<ComponentSubset> = (1..=d)
        .map(|k| match &trace {
            Some(t) => t.subset_at(k),
            None => method.baseline_subset(d, k),
        })
        .collect::<Result<_>>()?;

    let auroc_values: Vec<f64> = subsets
        .par_iter()
        .map(|s| subset_auroc(eval, s))
        .collect::<Result<_>>()?;

    let (greedy_auroc_values, component_changes) = match &trace {
        Some(t) if t.mode == SelectionMode::BottomUp => (
            Some(t.steps.iter().map(|s| s.greedy_auroc).collect()),
            Some(t.steps.iter().map(|s| Some(s.component)).collect()),
        ),
        Some(t) => {
            // row k reports the removal that left k components; k = d is the full model
            let full = subset_auroc(greedy, &subsets[d - 1])?;
            let mut values = Vec::with_capacity(d);
            let mut changes = Vec::with_capacity(d);
            for k in 1..=d {
                if k == d {
                    values.push(full);
                    changes.push(None);
                } else {
                    let s = &t.steps[d - k - 1];
                    values.push(s.greedy_auroc);
                    changes.push(Some(s.component));
                }
            }
            (Some(values), Some(changes))
        }
        None => (None, None),
    };

    let curve = Curve {
        method,
        k_values: (1..=d).collect(),
        auroc_values,
        greedy_auroc_values,
        component_changes,
    };
    Ok((curve, trace))
}

pub const CURVE_CSV_HEADER: [&str; 5] = [
    "method",
    "k",
    "auroc_eval",
    "auroc_greedy",
    "component_added_or_removed",
];

/// Writes curves as CSV rows `method,k,auroc_eval,auroc_greedy,component_added_or_removed`.
pub fn write_curves_csv<W: Write>(curves: &[Curve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::InvalidCurve(e.to_string());
    w.write_record(CURVE_CSV_HEADER).map_err(io)?;
    for c in curves {
        for i in 0..c.d() {
            let greedy = c
                .greedy_auroc_values
                .as_ref()
                .map(|g| g[i].to_string())
                .unwrap_or_default();
            let change = c
                .component_changes
                .as_ref()
                .and_then(|ch| ch[i])
                .map(|x| x.to_string())
                .unwrap_or_default();
            w.write_record([
                c.method.to_string(),
                c.k_values[i].to_string(),
                c.auroc_values[i].to_string(),
                greedy,
                change,
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidCurve(e.to_string()))?;
    Ok(())
}

/// Parses CSV produced by [`write_curves_csv`], one curve per method in
/// order of first appearance.
pub fn read_curves_csv<R: Read>(reader: R) -> Result<Vec<Curve>> {
    let bad = |msg: String| Error::InvalidCurve(msg);
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().ne(CURVE_CSV_HEADER) {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut curves: Vec<Curve> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let method: Method = record[0].parse()?;
        let k: usize = record[1]
            .parse()
            .map_err(|_| bad(format!("bad k {:?}", &record[1])))?;
        let auroc: f64 = record[2]
            .parse()
            .map_err(|_| bad(format!("bad auroc {:?}", &record[2])))?;
        let greedy: Option<f64> = match &record[3] {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(format!("bad auroc {v:?}")))?),
        };
        let change: Option<usize> = match &record[4] {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(format!("bad component {v:?}")))?),
        };
        let curve = match curves.iter_mut().find(|c| c.method == method) {
            Some(c) => c,
            None => {
                curves.push(Curve {
                    method,
                    k_values: Vec::new(),
                    auroc_values: Vec::new(),
                    greedy_auroc_values: greedy.map(|_| Vec::new()),
                    component_changes: Some(Vec::new()),
                });
                curves.last_mut().expect("just pushed")
            }
        };
        curve.k_values.push(k);
        curve.auroc_values.push(auroc);
        if let (Some(g), Some(values)) = (greedy, curve.greedy_auroc_values.as_mut()) {
            values.push(g);
        }
        if let Some(ch) = curve.component_changes.as_mut() {
            ch.push(change);
        }
    }
    for c in &mut curves {
        if c.component_changes
            .as_ref()
            .is_some_and(|ch| ch.iter().all(Option::is_none))
        {
            c.component_changes = None;
        }
        c.validate()?;
    }
    Ok(curves)
}
