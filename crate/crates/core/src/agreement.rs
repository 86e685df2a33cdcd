//! Annotation behaviour statistics and Krippendorff's alpha.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::record::{MarkingVector, SkipReason, TripleRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("marking vector is empty")]
    EmptyVector,
    #[error("need at least two coders, got {0}")]
    TooFewCoders(usize),
    #[error("unit {unit} has {got} cells, expected {expected}")]
    Ragged { unit: usize, got: usize, expected: usize },
    #[error("no unit is valued by two or more coders")]
    NoPairableUnits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Nominal,
    Interval,
}

impl Scale {
    fn delta2(self, a: f64, b: f64) -> f64 {
        match self {
            Scale::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            Scale::Interval => (a - b) * (a - b),
        }
    }
}

/// Units x coders; `None` marks a missing cell. Nominal labels are encoded as
/// numbers and compared for equality only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMatrix {
    pub coders: Vec<String>,
    pub units: Vec<Vec<Option<f64>>>,
}

impl ReliabilityMatrix {
    pub fn new(coders: Vec<String>, units: Vec<Vec<Option<f64>>>) -> Result<Self, AgreementError> {
        if coders.len() < 2 {
            return Err(AgreementError::TooFewCoders(coders.len()));
        }
        for (i, u) in units.iter().enumerate() {
            if u.len() != coders.len() {
                return Err(AgreementError::Ragged { unit: i, got: u.len(), expected: coders.len() });
            }
        }
        Ok(ReliabilityMatrix { coders, units })
    }

    /// Two-coder submatrix.
    pub fn pair(&self, a: usize, b: usize) -> ReliabilityMatrix {
        ReliabilityMatrix {
            coders: alloc::vec![self.coders[a].clone(), self.coders[b].clone()],
            units: self.units.iter().map(|u| alloc::vec![u[a], u[b]]).collect(),
        }
    }
}

/// Coincidences o_ck between distinct values, and the sorted value list.
pub fn coincidence_matrix(matrix: &ReliabilityMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut values: Vec<f64> = matrix.units.iter().flatten().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value present");

    let mut o = alloc::vec![alloc::vec![0.0; values.len()]; values.len()];
    for unit in &matrix.units {
        let present: Vec<usize> = unit.iter().flatten().map(|&v| index(v)).collect();
        let m = present.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (i, &c) in present.iter().enumerate() {
            for (j, &k) in present.iter().enumerate() {
                if i != j {
                    o[c][k] += w;
                }
            }
        }
    }
    (values, o)
}

/// Krippendorff's alpha. Data with no expected disagreement (every pairable
/// value identical) yields 1.0.
pub fn alpha(matrix: &ReliabilityMatrix, scale: Scale) -> Result<f64, AgreementError> {
    let (values, o) = coincidence_matrix(matrix);
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    if n == 0.0 {
        return Err(AgreementError::NoPairableUnits);
    }
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..values.len() {
        for k in 0..values.len() {
            let d = scale.delta2(values[c], values[k]);
            d_o += o[c][k] * d;
            d_e += n_c[c] * n_c[k] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}

/// Symmetric coder x coder alpha table. The diagonal is 1; pairs without
/// shared units are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAlpha {
    pub coders: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PairwiseAlpha {
    /// Unweighted mean of the defined off-diagonal entries.
    pub fn average(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.coders.len() {
            for j in (i + 1)..self.coders.len() {
                if let Some(v) = self.values[i][j] {
                    sum += v;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

pub fn pairwise_alpha(matrix: &ReliabilityMatrix, scale: Scale) -> PairwiseAlpha {
    let c = matrix.coders.len();
    let mut values = alloc::vec![alloc::vec![None; c]; c];
    for i in 0..c {
        values[i][i] = Some(1.0);
        for j in (i + 1)..c {
            let a = alpha(&matrix.pair(i, j), scale).ok();
            values[i][j] = a;
            values[j][i] = a;
        }
    }
    PairwiseAlpha { coders: matrix.coders.clone(), values }
}

/// Share of BAD tokens.
pub fn percent_marked(markings: &MarkingVector) -> Result<f64, AgreementError> {
    if markings.is_empty() {
        return Err(AgreementError::EmptyVector);
    }
    Ok(markings.bad_count() as f64 / markings.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub annotator: String,
    /// Items with a marking (skips excluded).
    pub annotated: usize,
    pub mean_percent_marked: Option<f64>,
    /// Population standard deviation.
    pub sd_percent_marked: Option<f64>,
    pub unmarked_fraction: Option<f64>,
    pub skips: BTreeMap<SkipReason, usize>,
}

impl AnnotatorStats {
    pub fn skipped(&self) -> usize {
        self.skips.values().sum()
    }
}

fn annotator_of(r: &TripleRecord) -> &str {
    r.annotator_id.as_deref().unwrap_or("")
}

/// Per-annotator percent-marked mean/SD, unmarked share and skip counts.
pub fn behavior_stats(records: &[TripleRecord]) -> Vec<AnnotatorStats> {
    let mut by_annotator: BTreeMap<&str, Vec<&TripleRecord>> = BTreeMap::new();
    for r in records {
        by_annotator.entry(annotator_of(r)).or_default().push(r);
    }
    by_annotator
        .into_iter()
        .map(|(annotator, recs)| {
            let mut skips: BTreeMap<SkipReason, usize> = SkipReason::ALL.iter().map(|&s| (s, 0)).collect();
            let mut fractions = Vec::new();
            for r in recs {
                if let Some(reason) = r.skip {
                    *skips.entry(reason).or_default() += 1;
                } else if let Some(m) = &r.markings {
                    if let Ok(p) = percent_marked(m) {
                        fractions.push(p);
                    }
                }
            }
            let n = fractions.len() as f64;
            let mean = (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / n);
            let sd = mean.map(|mu| libm::sqrt(fractions.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / n));
            let unmarked = (!fractions.is_empty()).then(|| fractions.iter().filter(|&&p| p == 0.0).count() as f64 / n);
            AnnotatorStats {
                annotator: annotator.into(),
                annotated: fractions.len(),
                mean_percent_marked: mean,
                sd_percent_marked: sd,
                unmarked_fraction: unmarked,
                skips,
            }
        })
        .collect()
}

/// Item ids marked (not skipped) by every coder with equal-length vectors,
/// plus the per-coder markings for each.
fn common_items<'r>(records: &'r [TripleRecord], coders: &[String]) -> Vec<(String, Vec<&'r MarkingVector>)> {
    let mut by_item: BTreeMap<&str, BTreeMap<&str, Option<&MarkingVector>>> = BTreeMap::new();
    for r in records {
        let slot = by_item.entry(r.item_id()).or_default();
        let m = if r.skip.is_some() { None } else { r.markings.as_ref() };
        slot.insert(annotator_of(r), m);
    }
    let mut out = Vec::new();
    for (item, per_coder) in by_item {
        let row: Option<Vec<&MarkingVector>> = coders.iter().map(|c| per_coder.get(c.as_str()).copied().flatten()).collect();
        if let Some(row) = row {
            let len = row[0].len();
            if len > 0 && row.iter().all(|m| m.len() == len) {
                out.push((item.into(), row));
            }
        }
    }
    out
}

/// Token-level (nominal OK/BAD) and sentence-level (interval percent-marked)
/// reliability matrices over the items every coder marked.
pub fn reliability_matrices(records: &[TripleRecord]) -> Result<(ReliabilityMatrix, ReliabilityMatrix, usize), AgreementError> {
    let coders: Vec<String> = records.iter().map(annotator_of).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
    if coders.len() < 2 {
        return Err(AgreementError::TooFewCoders(coders.len()));
    }
    let items = common_items(records, &coders);
    let mut tokens = Vec::new();
    let mut sentences = Vec::new();
    for (_, row) in &items {
        for t in 0..row[0].len() {
            tokens.push(row.iter().map(|m| Some(f64::from(m.marks()[t].bit()))).collect());
        }
        sentences.push(row.iter().map(|m| percent_marked(m).ok()).collect());
    }
    Ok((ReliabilityMatrix::new(coders.clone(), tokens)?, ReliabilityMatrix::new(coders, sentences)?, items.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub scale: Scale,
    /// Single alpha over all coders.
    pub alpha: Option<f64>,
    pub pairwise: PairwiseAlpha,
    /// Mean of the pairwise values.
    pub average_pairwise: Option<f64>,
}

fn summarize(matrix: &ReliabilityMatrix, scale: Scale) -> AlphaSummary {
    let pairwise = pairwise_alpha(matrix, scale);
    AlphaSummary { scale, alpha: alpha(matrix, scale).ok(), average_pairwise: pairwise.average(), pairwise }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotators: Vec<AnnotatorStats>,
    pub common_items: usize,
    pub token: Option<AlphaSummary>,
    pub sentence: Option<AlphaSummary>,
}

pub fn agreement_report(records: &[TripleRecord]) -> AgreementReport {
    let annotators = behavior_stats(records);
    match reliability_matrices(records) {
        Ok((tokens, sentences, common)) => AgreementReport {
            annotators,
            common_items: common,
            token: Some(summarize(&tokens, Scale::Nominal)),
            sentence: Some(summarize(&sentences, Scale::Interval)),
        },
        Err(_) => AgreementReport { annotators, common_items: 0, token: None, sentence: None },
    }
}
