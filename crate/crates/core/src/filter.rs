//! Segment-pair filters for building PE-TM candidates from parallel text.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::record::tokenize_ws;

pub const MIN_WORDS: usize = 5;
pub const MAX_WORDS: usize = 25;
pub const MAX_NONALNUM_RATIO: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("text has no non-whitespace characters")]
    EmptyText,
    #[error("language identification unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("segment {index}: {source}")]
    Segment { index: usize, source: Box<FilterError> },
    #[error("no filter rules given")]
    NoRules,
}

/// Share of non-whitespace characters that are not alphanumeric.
pub fn nonalnum_ratio(text: &str) -> Result<f64, FilterError> {
    let mut total = 0usize;
    let mut symbols = 0usize;
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if !c.is_alphanumeric() {
            symbols += 1;
        }
    }
    if total == 0 {
        return Err(FilterError::EmptyText);
    }
    Ok(symbols as f64 / total as f64)
}

/// Best-guess language of a text.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageGuess {
    /// ISO 639-1 code, or `"und"` when nothing identifies the language.
    pub code: String,
    pub confidence: f64,
}

pub trait LanguageIdentifier {
    fn identify(&self, text: &str) -> Result<LanguageGuess, FilterError>;
}

const EN_STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by", "can", "cannot", "could", "did",
    "do", "does", "for", "from", "has", "have", "here", "how", "if", "in", "into", "is", "it", "its", "may", "must", "no",
    "not", "of", "on", "only", "or", "other", "should", "so", "some", "such", "than", "that", "the", "their", "them",
    "then", "there", "these", "this", "those", "to", "too", "under", "used", "using", "was", "were", "what", "when",
    "where", "whether", "which", "while", "who", "will", "with", "would", "you", "your",
];

const DE_STOPWORDS: &[&str] = &[
    "ab", "aber", "alle", "als", "am", "an", "auch", "auf", "aus", "bei", "bis", "das", "dass", "dem", "den", "der",
    "des", "die", "dies", "diese", "dieser", "dieses", "durch", "ein", "eine", "einem", "einen", "einer", "eines", "er",
    "es", "für", "hat", "ihr", "ihre", "im", "in", "ist", "kann", "keine", "können", "mit", "muss", "müssen", "nach",
    "nicht", "noch", "nur", "ob", "oder", "sein", "sich", "sie", "sind", "so", "um", "und", "unter", "vom", "von", "vor",
    "wenn", "werden", "wird", "wie", "zu", "zum", "zur",
];

/// Baseline identifier for English and German: counts function words of
/// each language, with German-only letters as extra evidence.
#[derive(Clone, Copy, Debug, Default)]
pub struct StopwordLanguageId;

impl LanguageIdentifier for StopwordLanguageId {
    fn identify(&self, text: &str) -> Result<LanguageGuess, FilterError> {
        if text.trim().is_empty() {
            return Err(FilterError::EmptyText);
        }
        let mut en = 0.0;
        let mut de = 0.0;
        for raw in text.split(|c: char| !c.is_alphanumeric()) {
            if raw.is_empty() {
                continue;
            }
            let word = raw.to_lowercase();
            let word = word.as_str();
            let in_en = EN_STOPWORDS.contains(&word);
            let in_de = DE_STOPWORDS.contains(&word);
            match (in_en, in_de) {
                (true, false) => en += 1.0,
                (false, true) => de += 1.0,
                (true, true) => {
                    en += 0.5;
                    de += 0.5;
                }
                _ => {}
            }
            if word.contains(['ä', 'ö', 'ü', 'ß']) {
                de += 1.0;
            }
        }
        let total = en + de;
        if total == 0.0 {
            return Ok(LanguageGuess { code: "und".into(), confidence: 0.0 });
        }
        let (code, best) = if en >= de { ("en", en) } else { ("de", de) };
        Ok(LanguageGuess { code: code.into(), confidence: best / total })
    }
}

/// A source/target segment pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub source: String,
    pub target: String,
}

impl SegmentPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        SegmentPair { source: source.into(), target: target.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Empty,
    TooShort,
    TooLong,
    WrongLanguage,
    TooManySymbols,
    Pii,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Empty => "empty",
            DropReason::TooShort => "too_short",
            DropReason::TooLong => "too_long",
            DropReason::WrongLanguage => "wrong_language",
            DropReason::TooManySymbols => "too_many_symbols",
            DropReason::Pii => "pii",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

/// A pure predicate over a segment pair.
pub trait FilterRule {
    fn check(&self, pair: &SegmentPair) -> Result<Verdict, FilterError>;
}

/// Whitespace word count within `[min, max]` on both sides.
#[derive(Clone, Copy, Debug)]
pub struct LengthBounds {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        LengthBounds { min_words: MIN_WORDS, max_words: MAX_WORDS }
    }
}

impl FilterRule for LengthBounds {
    fn check(&self, pair: &SegmentPair) -> Result<Verdict, FilterError> {
        for side in [&pair.source, &pair.target] {
            let n = tokenize_ws(side).len();
            if n == 0 {
                return Ok(Verdict::Drop(DropReason::Empty));
            }
            if n < self.min_words {
                return Ok(Verdict::Drop(DropReason::TooShort));
            }
            if n > self.max_words {
                return Ok(Verdict::Drop(DropReason::TooLong));
            }
        }
        Ok(Verdict::Keep)
    }
}

/// Non-alphanumeric share at most `max` on both sides.
#[derive(Clone, Copy, Debug)]
pub struct NonAlnumRatio {
    pub max: f64,
}

impl Default for NonAlnumRatio {
    fn default() -> Self {
        NonAlnumRatio { max: MAX_NONALNUM_RATIO }
    }
}

impl FilterRule for NonAlnumRatio {
    fn check(&self, pair: &SegmentPair) -> Result<Verdict, FilterError> {
        for side in [&pair.source, &pair.target] {
            match nonalnum_ratio(side) {
                Err(FilterError::EmptyText) => return Ok(Verdict::Drop(DropReason::Empty)),
                Err(e) => return Err(e),
                Ok(r) if r > self.max => return Ok(Verdict::Drop(DropReason::TooManySymbols)),
                Ok(_) => {}
            }
        }
        Ok(Verdict::Keep)
    }
}

/// Source must be identified as `source_lang` and target as `target_lang`.
/// A side with no identifying evidence (`"und"`) is not dropped.
pub struct WrongLanguage<L> {
    pub identifier: L,
    pub source_lang: String,
    pub target_lang: String,
}

impl<L: LanguageIdentifier> WrongLanguage<L> {
    pub fn new(identifier: L) -> Self {
        WrongLanguage { identifier, source_lang: "en".into(), target_lang: "de".into() }
    }
}

impl<L: LanguageIdentifier> FilterRule for WrongLanguage<L> {
    fn check(&self, pair: &SegmentPair) -> Result<Verdict, FilterError> {
        for (side, expected) in [(&pair.source, &self.source_lang), (&pair.target, &self.target_lang)] {
            let guess = match self.identifier.identify(side) {
                Err(FilterError::EmptyText) => return Ok(Verdict::Drop(DropReason::Empty)),
                other => other?,
            };
            if guess.code != "und" && &guess.code != expected {
                return Ok(Verdict::Drop(DropReason::WrongLanguage));
            }
        }
        Ok(Verdict::Keep)
    }
}

/// Retained/dropped accounting of one pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub retained: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl FilterReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn merge(&mut self, other: &FilterReport) {
        self.input += other.input;
        self.retained += other.retained;
        for (&reason, &n) in &other.dropped {
            *self.dropped.entry(reason).or_insert(0) += n;
        }
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {}", self.input)?;
        writeln!(f, "retained: {}", self.retained)?;
        writeln!(f, "dropped: {}", self.dropped_total())?;
        for (reason, n) in &self.dropped {
            writeln!(f, "dropped.{reason}: {n}")?;
        }
        Ok(())
    }
}

/// Applies `rules` in order; a pair is dropped for the first rule that
/// rejects it.
pub fn run_pipeline(pairs: Vec<SegmentPair>, rules: &[&dyn FilterRule]) -> Result<(Vec<SegmentPair>, FilterReport), FilterError> {
    if rules.is_empty() {
        return Err(FilterError::NoRules);
    }
    let mut report = FilterReport { input: pairs.len(), ..FilterReport::default() };
    let mut kept = Vec::new();
    'pairs: for (index, pair) in pairs.into_iter().enumerate() {
        for rule in rules {
            let verdict = rule.check(&pair).map_err(|e| FilterError::Segment { index, source: Box::new(e) })?;
            if let Verdict::Drop(reason) = verdict {
                *report.dropped.entry(reason).or_insert(0) += 1;
                continue 'pairs;
            }
        }
        kept.push(pair);
    }
    report.retained = kept.len();
    Ok((kept, report))
}
