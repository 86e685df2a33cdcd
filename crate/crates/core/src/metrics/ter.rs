//! Translation edit rate with block shifts, signature
//! `nrefs:1|case:lc|tok:tercom|norm:no|punct:yes|asian:no`.
//!
//! Shift search follows tercom: candidate spans must match a reference span
//! exactly, must be misaligned on both sides, and the best distance-reducing
//! shift is applied greedily until none helps or the candidate budget runs
//! out. The edit distance itself is a beam-restricted Levenshtein around the
//! length-ratio diagonal.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::AddAssign;

use super::bleu::check_corpus;
use super::tok13a::split_ws;
use super::MetricError;

pub const TER_SIGNATURE: &str = "nrefs:1|case:lc|tok:tercom|norm:no|punct:yes|asian:no";

const MAX_SHIFT_SIZE: usize = 10;
const MAX_SHIFT_DIST: usize = 50;
const BEAM_WIDTH: usize = 25;
const MAX_SHIFT_CANDIDATES: usize = 1000;
const INFINITY: i64 = 10_000_000_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Nop,
    Sub,
    /// Consumes a reference word.
    Ins,
    /// Consumes a hypothesis word.
    Del,
    Undef,
}

/// Lowercased whitespace tokens (tercom tokenization, no normalization,
/// punctuation kept).
pub fn tokenize_tercom(text: &str) -> Vec<String> {
    let lowered = text.trim_end().to_lowercase();
    split_ws(&lowered).map(String::from).collect()
}

struct BeamEditDistance<'r> {
    reference: &'r [String],
}

impl<'r> BeamEditDistance<'r> {
    /// Edit distance and the operation trace rewriting `hyp` into the reference.
    fn distance(&self, hyp: &[String]) -> (i64, Vec<Op>) {
        let n_ref = self.reference.len();
        let n_hyp = hyp.len();
        let width = n_ref + 1;
        let mut dist = vec![(INFINITY, Op::Undef); (n_hyp + 1) * width];
        for (j, cell) in dist[..width].iter_mut().enumerate() {
            *cell = (j as i64, Op::Ins);
        }

        let length_ratio = if n_hyp == 0 { 1.0 } else { n_ref as f64 / n_hyp as f64 };
        let beam = if (BEAM_WIDTH as f64) < length_ratio / 2.0 {
            libm::ceil(length_ratio / 2.0 + BEAM_WIDTH as f64) as i64
        } else {
            BEAM_WIDTH as i64
        };

        for i in 1..=n_hyp {
            let diag = libm::floor(i as f64 * length_ratio) as i64;
            let min_j = (diag - beam).max(0) as usize;
            let mut max_j = (diag + beam).min(width as i64).max(0) as usize;
            if i == n_hyp {
                max_j = width;
            }
            for j in min_j..max_j {
                let here = i * width + j;
                if j == 0 {
                    dist[here] = (dist[here - width].0 + 1, Op::Del);
                    continue;
                }
                let (cost_sub, op_sub) = if hyp[i - 1] == self.reference[j - 1] { (0, Op::Nop) } else { (1, Op::Sub) };
                let candidates = [
                    (dist[here - width - 1].0 + cost_sub, op_sub),
                    (dist[here - width].0 + 1, Op::Del),
                    (dist[here - 1].0 + 1, Op::Ins),
                ];
                for (cost, op) in candidates {
                    if dist[here].0 > cost {
                        dist[here] = (cost, op);
                    }
                }
            }
        }

        let mut trace = Vec::with_capacity(n_hyp + n_ref);
        let (mut i, mut j) = (n_hyp, n_ref);
        while i > 0 || j > 0 {
            let op = dist[i * width + j].1;
            trace.push(op);
            match op {
                Op::Nop | Op::Sub => {
                    i -= 1;
                    j -= 1;
                }
                Op::Ins => j -= 1,
                Op::Del => i -= 1,
                Op::Undef => unreachable!("trace left the beam"),
            }
        }
        trace.reverse();
        (dist[n_hyp * width + n_ref].0, trace)
    }
}

struct Alignment {
    /// Hypothesis position aligned to each reference position (-1 = before start).
    ref_to_hyp: Vec<i64>,
    ref_err: Vec<bool>,
    hyp_err: Vec<bool>,
}

/// Alignment from a hypothesis-to-reference trace, read in the reverse
/// direction (reference rewritten into hypothesis).
fn alignment(trace: &[Op]) -> Alignment {
    let mut pos_hyp: i64 = -1;
    let mut al = Alignment { ref_to_hyp: Vec::new(), ref_err: Vec::new(), hyp_err: Vec::new() };
    for &op in trace {
        match op {
            Op::Nop | Op::Sub => {
                pos_hyp += 1;
                al.ref_to_hyp.push(pos_hyp);
                al.hyp_err.push(op == Op::Sub);
                al.ref_err.push(op == Op::Sub);
            }
            // A hypothesis-consuming step is an insertion from the reference's view.
            Op::Del => {
                pos_hyp += 1;
                al.hyp_err.push(true);
            }
            Op::Ins => {
                al.ref_to_hyp.push(pos_hyp);
                al.ref_err.push(true);
            }
            Op::Undef => unreachable!(),
        }
    }
    al
}

fn perform_shift(words: &[String], start: usize, len: usize, target: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len());
    if target < start {
        out.extend_from_slice(&words[..target]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[target..start]);
        out.extend_from_slice(&words[start + len..]);
    } else if target > start + len {
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..target]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[target..]);
    } else {
        let split = (len + target).min(words.len());
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..split]);
        out.extend_from_slice(&words[start..start + len]);
        out.extend_from_slice(&words[split..]);
    }
    out
}

/// `(hyp_start, ref_start, len)` for every common span, shortest first per
/// start pair.
fn shifted_pairs(hyp: &[String], reference: &[String]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for start_h in 0..hyp.len() {
        for start_r in 0..reference.len() {
            if start_r.abs_diff(start_h) > MAX_SHIFT_DIST {
                continue;
            }
            let mut len = 0;
            while len < MAX_SHIFT_SIZE && hyp[start_h + len] == reference[start_r + len] {
                len += 1;
                out.push((start_h, start_r, len));
                if start_h + len == hyp.len() || start_r + len == reference.len() {
                    break;
                }
            }
        }
    }
    out
}

struct Candidate {
    gain: i64,
    len: usize,
    start_h: usize,
    target: usize,
    words: Vec<String>,
}

impl Candidate {
    /// Larger gain, then longer span, then earlier start, then earlier
    /// target, then lexicographically larger result.
    fn cmp_rank(&self, other: &Candidate) -> Ordering {
        self.gain
            .cmp(&other.gain)
            .then(self.len.cmp(&other.len))
            .then(other.start_h.cmp(&self.start_h))
            .then(other.target.cmp(&self.target))
            .then_with(|| self.words.cmp(&other.words))
    }
}

fn best_shift(
    hyp: &[String],
    reference: &[String],
    ed: &BeamEditDistance<'_>,
    checked: &mut usize,
) -> Option<Candidate> {
    let (pre_score, trace) = ed.distance(hyp);
    let al = alignment(&trace);
    let mut best: Option<Candidate> = None;

    for (start_h, start_r, len) in shifted_pairs(hyp, reference) {
        if !al.hyp_err[start_h..start_h + len].iter().any(|&e| e) {
            continue;
        }
        if !al.ref_err[start_r..start_r + len].iter().any(|&e| e) {
            continue;
        }
        let aligned = al.ref_to_hyp[start_r];
        if start_h as i64 <= aligned && aligned < (start_h + len) as i64 {
            continue;
        }

        let mut prev_target: i64 = -1;
        for offset in -1..len as i64 {
            let r = start_r as i64 + offset;
            let target = if r == -1 {
                0
            } else if (r as usize) < al.ref_to_hyp.len() {
                al.ref_to_hyp[r as usize] + 1
            } else {
                break;
            };
            if target == prev_target {
                continue;
            }
            prev_target = target;

            let target = target as usize;
            let words = perform_shift(hyp, start_h, len, target);
            let candidate = Candidate { gain: pre_score - ed.distance(&words).0, len, start_h, target, words };
            *checked += 1;
            if best.as_ref().is_none_or(|b| candidate.cmp_rank(b) == Ordering::Greater) {
                best = Some(candidate);
            }
        }
        if *checked >= MAX_SHIFT_CANDIDATES {
            break;
        }
    }
    best
}

/// Edit statistics of one segment: edits including shifts, and reference length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TerStats {
    pub edits: u64,
    pub ref_len: u64,
}

impl AddAssign for TerStats {
    fn add_assign(&mut self, rhs: Self) {
        self.edits += rhs.edits;
        self.ref_len += rhs.ref_len;
    }
}

impl TerStats {
    /// Percentage; `None` when the reference side is empty.
    pub fn score(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| 100.0 * self.edits as f64 / self.ref_len as f64)
    }
}

/// Edits over already-tokenized sequences. An empty reference costs one
/// edit per hypothesis word.
pub fn ter_tokens(hyp: &[String], reference: &[String]) -> TerStats {
    if reference.is_empty() {
        return TerStats { edits: hyp.len() as u64, ref_len: 0 };
    }
    let ed = BeamEditDistance { reference };
    let mut words = hyp.to_vec();
    let mut shifts = 0u64;
    let mut checked = 0usize;
    loop {
        let best = best_shift(&words, reference, &ed, &mut checked);
        if checked >= MAX_SHIFT_CANDIDATES {
            break;
        }
        match best {
            Some(c) if c.gain > 0 => {
                shifts += 1;
                words = c.words;
            }
            _ => break,
        }
    }
    let (distance, _) = ed.distance(&words);
    TerStats { edits: shifts + distance as u64, ref_len: reference.len() as u64 }
}

/// `(edit count, reference length)` for one pair.
pub fn ter_sentence(hypothesis: &str, reference: &str) -> Result<TerStats, MetricError> {
    let reference = tokenize_tercom(reference);
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(ter_tokens(&tokenize_tercom(hypothesis), &reference))
}

/// Corpus TER in percent: total edits over total reference words.
pub fn ter_corpus<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<f64, MetricError> {
    check_corpus(hypotheses.len(), references.len())?;
    let mut total = TerStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total += ter_tokens(&tokenize_tercom(h.as_ref()), &tokenize_tercom(r.as_ref()));
    }
    total.score().ok_or(MetricError::EmptyReference)
}
