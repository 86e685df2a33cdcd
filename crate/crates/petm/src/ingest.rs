//! Parallel text input and the filter stage that turns it into PE-TM candidates.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use petm_core::filter::{run_pipeline, FilterReport, FilterRule, LengthBounds, NonAlnumRatio, SegmentPair, StopwordLanguageId, WrongLanguage};
use petm_core::record::TripleRecord;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pii::PiiRule;

/// Two line-aligned files.
pub fn read_parallel(source: &Path, target: &Path) -> Result<Vec<SegmentPair>> {
    let src = fs::read_to_string(source).with_context(|| format!("reading {}", source.display()))?;
    let tgt = fs::read_to_string(target).with_context(|| format!("reading {}", target.display()))?;
    let (src, tgt): (Vec<&str>, Vec<&str>) = (src.lines().collect(), tgt.lines().collect());
    if src.len() != tgt.len() {
        bail!("{} has {} lines but {} has {}", source.display(), src.len(), target.display(), tgt.len());
    }
    Ok(src.into_iter().zip(tgt).map(|(s, t)| SegmentPair::new(s, t)).collect())
}

/// `source<TAB>target` per line.
pub fn read_tsv(path: &Path) -> Result<Vec<SegmentPair>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| match line.split_once('\t') {
            Some((s, t)) => Ok(SegmentPair::new(s, t)),
            None => bail!("{}:{}: expected source<TAB>target", path.display(), i + 1),
        })
        .collect()
}

/// Seeded sample of `n` pairs, kept in input order.
pub fn sample_pairs(pairs: Vec<SegmentPair>, n: usize, seed: u64) -> Vec<SegmentPair> {
    if n >= pairs.len() {
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = sample(&mut rng, pairs.len(), n).into_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<SegmentPair>> = pairs.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

/// Candidates carry no hypothesis yet; the target side becomes the reference.
pub fn to_candidates(pairs: &[SegmentPair], id_prefix: &str) -> Vec<TripleRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| TripleRecord::new(format!("{id_prefix}{i:06}"), p.source.clone(), "", p.target.clone()))
        .collect()
}

pub fn from_records(records: &[TripleRecord]) -> Vec<SegmentPair> {
    records.iter().map(|r| SegmentPair::new(r.source.clone(), r.reference.clone())).collect()
}

/// Length, symbol ratio, language and PII filters with default settings.
pub fn default_filters(pairs: Vec<SegmentPair>) -> Result<(Vec<SegmentPair>, FilterReport)> {
    let length = LengthBounds::default();
    let ratio = NonAlnumRatio::default();
    let language = WrongLanguage::new(StopwordLanguageId);
    let rules: [&dyn FilterRule; 4] = [&length, &ratio, &language, &PiiRule];
    Ok(run_pipeline(pairs, &rules)?)
}
