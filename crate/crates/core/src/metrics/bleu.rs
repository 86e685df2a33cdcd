//! Corpus BLEU with signature `nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::ops::AddAssign;

use super::tok13a::tokenize_13a;
use super::MetricError;

pub const BLEU_SIGNATURE: &str = "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp";

const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU; adding two is the same as scoring
/// the concatenated corpora.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub hyp_len: u64,
    pub ref_len: u64,
    pub correct: [u64; MAX_ORDER],
    pub total: [u64; MAX_ORDER],
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
        for n in 0..MAX_ORDER {
            self.correct[n] += rhs.correct[n];
            self.total[n] += rhs.total[n];
        }
    }
}

fn ngram_counts(tokens: &[String]) -> BTreeMap<&[String], u64> {
    let mut counts = BTreeMap::new();
    for n in 1..=MAX_ORDER {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Statistics of one segment pair. Trailing whitespace is ignored, as is
/// conventional for line-oriented metric tooling.
pub fn segment_stats(hypothesis: &str, reference: &str) -> BleuStats {
    let hyp = tokenize_13a(hypothesis.trim_end());
    let reference = tokenize_13a(reference.trim_end());
    let ref_counts = ngram_counts(&reference);
    let mut stats = BleuStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..BleuStats::default()
    };
    for (gram, count) in ngram_counts(&hyp) {
        let n = gram.len() - 1;
        stats.total[n] += count;
        if let Some(&r) = ref_counts.get(gram) {
            stats.correct[n] += count.min(r);
        }
    }
    stats
}

/// Score in `[0, 100]` from aggregated statistics.
///
/// Orders with zero matches get precision `1 / (2^k * total)` where `k`
/// counts the zero-match orders seen so far (mteval "exp" smoothing).
pub fn score_from_stats(stats: &BleuStats) -> f64 {
    if stats.correct.iter().all(|&c| c == 0) {
        return 0.0;
    }
    let brevity = if stats.hyp_len < stats.ref_len {
        if stats.hyp_len == 0 {
            0.0
        } else {
            libm::exp(1.0 - stats.ref_len as f64 / stats.hyp_len as f64)
        }
    } else {
        1.0
    };

    let mut log_sum = 0.0;
    let mut smooth = 1.0;
    for n in 0..MAX_ORDER {
        let total = stats.total[n];
        if total == 0 {
            // No n-grams of this order or longer: geometric mean collapses.
            return 0.0;
        }
        let precision = if stats.correct[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * total as f64)
        } else {
            stats.correct[n] as f64 / total as f64
        };
        log_sum += libm::log(precision);
    }
    100.0 * brevity * libm::exp(log_sum / MAX_ORDER as f64)
}

/// Corpus-level BLEU over aligned hypothesis/reference lists.
pub fn bleu_corpus<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<f64, MetricError> {
    check_corpus(hypotheses.len(), references.len())?;
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats += segment_stats(h.as_ref(), r.as_ref());
    }
    Ok(score_from_stats(&stats))
}

pub(crate) fn check_corpus(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch { left: hyps, right: refs });
    }
    if hyps == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}
