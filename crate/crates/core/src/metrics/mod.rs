//! Translation quality metrics: corpus BLEU, TER, word diffs and marking edits.

mod bleu;
mod diff;
mod ter;
mod tok13a;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu_corpus, score_from_stats, segment_stats, BleuStats, BLEU_SIGNATURE};
pub use diff::{me_ue, me_ue_retokenized, word_diff, EditOp, EditScript, MeUeCounts};
pub use ter::{ter_corpus, ter_sentence, ter_tokens, tokenize_tercom, TerStats, TER_SIGNATURE};
pub use tok13a::{tokenize_13a, tokenize_13a_string};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("reference is empty after tokenization")]
    EmptyReference,
}

/// One row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub bleu: f64,
    pub ter: f64,
    /// Micro-averaged marking-edit percentage.
    pub me: Option<f64>,
    /// Micro-averaged unmarking-edit percentage.
    pub ue: Option<f64>,
    /// Mean of per-sentence marking-edit percentages.
    pub me_macro: Option<f64>,
    pub ue_macro: Option<f64>,
    pub counts: Option<MeUeCounts>,
    /// Share of reviewed corrections judged correct, when reviews exist.
    #[serde(default)]
    pub percent_correct: Option<f64>,
    pub scored: usize,
    pub failed: usize,
}

/// Aggregated ME/UE over a test set: micro from summed counts, macro as the
/// mean of defined per-sentence values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeUeSummary {
    pub total: MeUeCounts,
    pub me_macro: Option<f64>,
    pub ue_macro: Option<f64>,
}

pub fn summarize_me_ue(per_sentence: &[MeUeCounts]) -> MeUeSummary {
    let mut total = MeUeCounts::default();
    for c in per_sentence {
        total += *c;
    }
    let mean = |values: Vec<f64>| (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    MeUeSummary {
        total,
        me_macro: mean(per_sentence.iter().filter_map(MeUeCounts::me).collect()),
        ue_macro: mean(per_sentence.iter().filter_map(MeUeCounts::ue).collect()),
    }
}
