//! Word-level minimal edit scripts and the marking-edit statistics built on them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::record::{Mark, MarkingVector};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EditOp {
    Match(String),
    Substitute { from: String, to: String },
    Delete(String),
    Insert(String),
}

impl EditOp {
    /// Whether this step consumes a token of the original sequence.
    pub fn consumes_original(&self) -> bool {
        !matches!(self, EditOp::Insert(_))
    }

    /// Whether the consumed original token counts as edited.
    pub fn edits_original(&self) -> bool {
        matches!(self, EditOp::Substitute { .. } | EditOp::Delete(_))
    }
}

/// Unit-cost alignment of an original sequence onto a revised one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    /// Number of non-match operations.
    pub fn cost(&self) -> usize {
        self.ops.iter().filter(|op| !matches!(op, EditOp::Match(_))).count()
    }

    /// Rewrites `original` with this script, checking every consumed token.
    pub fn apply<S: AsRef<str>>(&self, original: &[S]) -> Option<Vec<String>> {
        let mut out = Vec::new();
        let mut src = original.iter();
        for op in &self.ops {
            match op {
                EditOp::Match(t) => {
                    (src.next()?.as_ref() == t).then_some(())?;
                    out.push(t.clone());
                }
                EditOp::Substitute { from, to } => {
                    (src.next()?.as_ref() == from).then_some(())?;
                    out.push(to.clone());
                }
                EditOp::Delete(t) => {
                    (src.next()?.as_ref() == t).then_some(())?;
                }
                EditOp::Insert(t) => out.push(t.clone()),
            }
        }
        src.next().is_none().then_some(out)
    }

    /// For each original token, whether it was substituted or deleted.
    pub fn edited_original(&self) -> Vec<bool> {
        self.ops.iter().filter(|op| op.consumes_original()).map(EditOp::edits_original).collect()
    }
}

/// Minimal (Levenshtein) edit script with exact, case-sensitive token equality.
///
/// Among equal-cost alignments the traceback prefers a diagonal step, then
/// deletion, then insertion.
pub fn word_diff<A: AsRef<str>, B: AsRef<str>>(original: &[A], revised: &[B]) -> EditScript {
    let n = original.len();
    let m = revised.len();
    let width = m + 1;
    let mut dist = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        dist[j] = j;
    }
    for i in 1..=n {
        dist[i * width] = i;
        for j in 1..=m {
            let same = original[i - 1].as_ref() == revised[j - 1].as_ref();
            let diag = dist[(i - 1) * width + j - 1] + usize::from(!same);
            let del = dist[(i - 1) * width + j] + 1;
            let ins = dist[i * width + j - 1] + 1;
            dist[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && j > 0 {
            let a = original[i - 1].as_ref();
            let b = revised[j - 1].as_ref();
            let same = a == b;
            if here == dist[(i - 1) * width + j - 1] + usize::from(!same) {
                ops.push(if same {
                    EditOp::Match(a.into())
                } else {
                    EditOp::Substitute { from: a.into(), to: b.into() }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dist[(i - 1) * width + j] + 1 {
            ops.push(EditOp::Delete(original[i - 1].as_ref().into()));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(revised[j - 1].as_ref().into()));
            j -= 1;
        }
    }
    ops.reverse();
    EditScript { ops }
}

/// Marked tokens edited / total marked, unmarked tokens edited / total unmarked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeUeCounts {
    pub me_num: u64,
    pub me_den: u64,
    pub ue_num: u64,
    pub ue_den: u64,
}

impl core::ops::AddAssign for MeUeCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.me_num += rhs.me_num;
        self.me_den += rhs.me_den;
        self.ue_num += rhs.ue_num;
        self.ue_den += rhs.ue_den;
    }
}

impl MeUeCounts {
    /// Marking-edit percentage; `None` without marked tokens.
    pub fn me(&self) -> Option<f64> {
        percent(self.me_num, self.me_den)
    }

    /// Unmarking-edit percentage; `None` without unmarked tokens.
    pub fn ue(&self) -> Option<f64> {
        percent(self.ue_num, self.ue_den)
    }
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Counts which original tokens, split by their marking, were substituted
/// or deleted on the way to `revised`. Insertions touch no original token.
pub fn me_ue<A: AsRef<str>, B: AsRef<str>>(
    original: &[A],
    markings: &MarkingVector,
    revised: &[B],
) -> Result<MeUeCounts, MetricError> {
    if original.len() != markings.len() {
        return Err(MetricError::LengthMismatch { left: original.len(), right: markings.len() });
    }
    let edited = word_diff(original, revised).edited_original();
    Ok(count_edits(markings, &edited))
}

fn count_edits(markings: &MarkingVector, edited: &[bool]) -> MeUeCounts {
    let mut counts = MeUeCounts::default();
    for (&mark, &edited) in markings.marks().iter().zip(edited) {
        match mark {
            Mark::Bad => {
                counts.me_den += 1;
                counts.me_num += u64::from(edited);
            }
            Mark::Ok => {
                counts.ue_den += 1;
                counts.ue_num += u64::from(edited);
            }
        }
    }
    counts
}

/// [`me_ue`] on re-tokenized text: every original token is split with
/// `tokenize`, the revised text likewise, and an original token counts as
/// edited when any of its pieces is. Denominators stay per original token.
pub fn me_ue_retokenized<A: AsRef<str>>(
    original: &[A],
    markings: &MarkingVector,
    revised: &str,
    tokenize: impl Fn(&str) -> Vec<String>,
) -> Result<MeUeCounts, MetricError> {
    if original.len() != markings.len() {
        return Err(MetricError::LengthMismatch { left: original.len(), right: markings.len() });
    }
    let mut pieces = Vec::new();
    let mut owner = Vec::new();
    for (i, tok) in original.iter().enumerate() {
        for piece in tokenize(tok.as_ref()) {
            pieces.push(piece);
            owner.push(i);
        }
    }
    let piece_edited = word_diff(&pieces, &tokenize(revised)).edited_original();
    let mut edited = vec![false; original.len()];
    for (i, e) in owner.into_iter().zip(piece_edited) {
        edited[i] |= e;
    }
    Ok(count_edits(markings, &edited))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::tokenize_ws;

    #[test]
    fn retokenized_ignores_attached_punctuation() {
        let tok = |s: &str| crate::metrics::tokenize_13a(s);
        let original = tokenize_ws("Öffnen Sie die Akte in einem neuen Fenster .");
        let marks = MarkingVector::with_bad(9, &[3]);
        let c = me_ue_retokenized(&original, &marks, "Öffnen Sie die Datei in einem neuen Fenster.", tok).unwrap();
        assert_eq!((c.me(), c.ue()), (Some(100.0), Some(0.0)));
        let plain = me_ue(&original, &marks, &tokenize_ws("Öffnen Sie die Datei in einem neuen Fenster.")).unwrap();
        assert_eq!(plain.ue_num, 2);
        let same = me_ue_retokenized(&original, &marks, &original.join(" "), tok).unwrap();
        assert_eq!((same.me_num, same.ue_num), (0, 0));
    }

    #[test]
    fn identical_sequences_all_match() {
        let a = ["A", "B", "C"];
        let s = word_diff(&a, &a);
        assert!(s.ops.iter().all(|op| matches!(op, EditOp::Match(_))));
        assert_eq!(s.cost(), 0);
    }

    #[test]
    fn middle_substitution() {
        let s = word_diff(&["A", "B", "C"], &["A", "X", "C"]);
        assert_eq!(
            s.ops,
            vec![
                EditOp::Match("A".into()),
                EditOp::Substitute { from: "B".into(), to: "X".into() },
                EditOp::Match("C".into()),
            ]
        );
    }

    #[test]
    fn empty_sides() {
        assert_eq!(word_diff::<&str, &str>(&[], &["a", "b"]).ops, vec![EditOp::Insert("a".into()), EditOp::Insert("b".into())]);
        assert_eq!(word_diff::<&str, &str>(&["a"], &[]).ops, vec![EditOp::Delete("a".into())]);
        assert!(word_diff::<&str, &str>(&[], &[]).ops.is_empty());
    }

    #[test]
    fn case_sensitive() {
        assert_eq!(word_diff(&["Cookie"], &["cookie"]).cost(), 1);
    }

    #[test]
    fn me_ue_examples() {
        let orig = ["a", "b", "c", "d"];
        let m = MarkingVector::with_bad(4, &[2]);
        let same = me_ue(&orig, &m, &orig).unwrap();
        assert_eq!((same.me_num, same.ue_num), (0, 0));

        let c = me_ue(&orig, &m, &["a", "b", "X", "d"]).unwrap();
        assert_eq!(c, MeUeCounts { me_num: 1, me_den: 1, ue_num: 0, ue_den: 3 });
        assert_eq!(c.me(), Some(100.0));
        assert_eq!(c.ue(), Some(0.0));

        let ok = me_ue(&orig, &MarkingVector::all_ok(4), &["a"]).unwrap();
        assert_eq!(ok.me(), None);
        assert_eq!(ok.ue(), Some(75.0));

        assert!(matches!(me_ue(&orig, &MarkingVector::all_ok(3), &orig), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn insertions_do_not_count() {
        let orig = ["a", "b"];
        let m = MarkingVector::with_bad(2, &[0]);
        let c = me_ue(&orig, &m, &["x", "a", "y", "b", "z"]).unwrap();
        assert_eq!((c.me_num, c.ue_num), (0, 0));
    }

    #[test]
    fn environment_variable_correction_edits_marked_token() {
        let orig = tokenize_ws("Einige wichtige Umweltvariablen , die von KDE verwendet werden");
        let revised = tokenize_ws("Einige wichtige Umgebungsvariablen , die von KDE verwendet werden");
        let m = MarkingVector::with_bad(orig.len(), &[2]);
        let c = me_ue(&orig, &m, &revised).unwrap();
        assert!(c.me_num >= 1);
        assert_eq!(c.ue_num, 0);
    }
}
