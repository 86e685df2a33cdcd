//! PE-TM records: source, machine translation, reference and the token-level
//! error markings an annotator attached to the machine translation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Splits `text` into maximal runs of non-whitespace.
pub fn tokenize_ws(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Per-token quality judgement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mark {
    Ok,
    Bad,
}

impl Mark {
    pub fn is_bad(self) -> bool {
        self == Mark::Bad
    }

    pub fn from_bit(bit: u8) -> Option<Mark> {
        match bit {
            0 => Some(Mark::Ok),
            1 => Some(Mark::Bad),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Mark::Ok => 0,
            Mark::Bad => 1,
        }
    }
}

/// One OK/BAD label per whitespace token of a hypothesis.
///
/// Serialized as an array of `0`/`1` integers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MarkingVector(Vec<Mark>);

impl MarkingVector {
    pub fn new(marks: Vec<Mark>) -> Self {
        MarkingVector(marks)
    }

    pub fn all_ok(len: usize) -> Self {
        MarkingVector(alloc::vec![Mark::Ok; len])
    }

    /// Builds a vector from `0`/`1` bits; any other value yields `None`.
    pub fn from_bits(bits: &[u8]) -> Option<Self> {
        bits.iter().map(|&b| Mark::from_bit(b)).collect::<Option<Vec<_>>>().map(MarkingVector)
    }

    /// All-OK vector of `len` tokens with the given indices marked BAD.
    pub fn with_bad(len: usize, bad: &[usize]) -> Self {
        let mut marks = alloc::vec![Mark::Ok; len];
        for &i in bad {
            marks[i] = Mark::Bad;
        }
        MarkingVector(marks)
    }

    pub fn marks(&self) -> &[Mark] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bad_count(&self) -> usize {
        self.0.iter().filter(|m| m.is_bad()).count()
    }

    pub fn has_bad(&self) -> bool {
        self.0.iter().any(|m| m.is_bad())
    }

    /// Number of maximal runs of consecutive BAD marks.
    pub fn bad_runs(&self) -> usize {
        let mut runs = 0;
        let mut prev = Mark::Ok;
        for &m in &self.0 {
            if m.is_bad() && !prev.is_bad() {
                runs += 1;
            }
            prev = m;
        }
        runs
    }
}

impl From<Vec<Mark>> for MarkingVector {
    fn from(marks: Vec<Mark>) -> Self {
        MarkingVector(marks)
    }
}

impl Serialize for MarkingVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|m| m.bit()))
    }
}

impl<'de> Deserialize<'de> for MarkingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BitsVisitor;

        impl<'de> Visitor<'de> for BitsVisitor {
            type Value = MarkingVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of 0/1 marks")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut marks = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(bit) = seq.next_element::<u8>()? {
                    let mark = Mark::from_bit(bit).ok_or_else(|| {
                        de::Error::invalid_value(de::Unexpected::Unsigned(bit.into()), &"0 or 1")
                    })?;
                    marks.push(mark);
                }
                Ok(MarkingVector(marks))
            }
        }

        deserializer.deserialize_seq(BitsVisitor)
    }
}

/// Why an annotator declined to mark an item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    SourceIncomprehensible,
    SourceAmbiguous,
    MissingKnowledge,
    Other,
}

impl SkipReason {
    pub const ALL: [SkipReason; 4] = [
        SkipReason::SourceIncomprehensible,
        SkipReason::SourceAmbiguous,
        SkipReason::MissingKnowledge,
        SkipReason::Other,
    ];

    /// Label shown to annotators.
    pub fn label(self) -> &'static str {
        match self {
            SkipReason::SourceIncomprehensible => "Source Incomprehensible",
            SkipReason::SourceAmbiguous => "Source Ambiguous",
            SkipReason::MissingKnowledge => "Missing Knowledge",
            SkipReason::Other => "Other",
        }
    }
}

/// Experiment partition a record belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pool,
    Test,
    #[default]
    Unassigned,
}

/// One PE-TM entry.
///
/// Field order is the on-disk key order; `None` fields are omitted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub id: String,
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markings: Option<MarkingVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<SkipReason>,
    #[serde(default)]
    pub split: Split,
}

impl TripleRecord {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        hypothesis: impl Into<String>,
        reference: impl Into<String>,
    ) -> Self {
        TripleRecord {
            id: id.into(),
            source: source.into(),
            hypothesis: hypothesis.into(),
            reference: reference.into(),
            markings: None,
            annotator_id: None,
            skip: None,
            split: Split::Unassigned,
        }
    }

    pub fn with_markings(mut self, markings: MarkingVector) -> Self {
        self.markings = Some(markings);
        self
    }

    pub fn hypothesis_tokens(&self) -> Vec<&str> {
        tokenize_ws(&self.hypothesis)
    }

    /// Unskipped and carrying at least one BAD mark.
    pub fn is_usable(&self) -> bool {
        self.skip.is_none() && self.markings.as_ref().is_some_and(|m| m.has_bad())
    }

    /// Item id with any `@annotator` suffix removed (see [`annotation_record_id`]).
    pub fn item_id(&self) -> &str {
        match &self.annotator_id {
            Some(a) => self
                .id
                .strip_suffix(a.as_str())
                .and_then(|rest| rest.strip_suffix('@'))
                .unwrap_or(&self.id),
            None => &self.id,
        }
    }
}

/// Record id used when one item is annotated by several annotators.
pub fn annotation_record_id(item_id: &str, annotator_id: &str) -> String {
    let mut id = String::with_capacity(item_id.len() + annotator_id.len() + 1);
    id.push_str(item_id);
    id.push('@');
    id.push_str(annotator_id);
    id
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    MarkingLengthMismatch { tokens: usize, marks: usize },
    SkipMarkingConflict,
    EmptyMarkings,
    EmptyField(&'static str),
}

impl Violation {
    /// Violations that make a record unfit for storage (as opposed to
    /// incomplete, like a candidate still missing its hypothesis).
    pub fn is_structural(&self) -> bool {
        !matches!(self, Violation::EmptyField(_))
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MarkingLengthMismatch { tokens, marks } => {
                write!(f, "hypothesis has {tokens} tokens but {marks} marks")
            }
            Violation::SkipMarkingConflict => f.write_str("record is both skipped and marked"),
            Violation::EmptyMarkings => f.write_str("marking vector is empty"),
            Violation::EmptyField(name) => write!(f, "field `{name}` is empty"),
        }
    }
}

/// Every invariant violation of `record`; empty means valid.
pub fn validate_record(record: &TripleRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, value) in [
        ("id", &record.id),
        ("source", &record.source),
        ("hypothesis", &record.hypothesis),
        ("reference", &record.reference),
    ] {
        if value.trim().is_empty() {
            out.push(Violation::EmptyField(name));
        }
    }
    if let Some(markings) = &record.markings {
        let tokens = tokenize_ws(&record.hypothesis).len();
        if markings.is_empty() {
            out.push(Violation::EmptyMarkings);
        }
        if markings.len() != tokens && !(markings.is_empty() && tokens == 0) {
            out.push(Violation::MarkingLengthMismatch { tokens, marks: markings.len() });
        }
        if record.skip.is_some() {
            out.push(Violation::SkipMarkingConflict);
        }
    }
    out
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("requested {requested} usable records but only {available} are available")]
    InsufficientData { requested: usize, available: usize },
}

/// Seeded disjoint partition of the usable records into pool and test ids.
///
/// Usable ids are taken in store order, shuffled with ChaCha8 seeded by
/// `seed`, and sliced.
pub fn split_pool(
    records: &[TripleRecord],
    pool_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), SplitError> {
    let mut usable: Vec<&str> = records.iter().filter(|r| r.is_usable()).map(|r| r.id.as_str()).collect();
    let requested = pool_size + test_size;
    if requested > usable.len() {
        return Err(SplitError::InsufficientData { requested, available: usable.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    usable.shuffle(&mut rng);
    let pool = usable[..pool_size].iter().map(|s| String::from(*s)).collect();
    let test = usable[pool_size..requested].iter().map(|s| String::from(*s)).collect();
    Ok((pool, test))
}

/// Writes split assignments into `records`; ids in neither list become unassigned.
pub fn assign_split(records: &mut [TripleRecord], pool: &[String], test: &[String]) {
    let pool: alloc::collections::BTreeSet<&str> = pool.iter().map(String::as_str).collect();
    let test: alloc::collections::BTreeSet<&str> = test.iter().map(String::as_str).collect();
    for r in records {
        r.split = if pool.contains(r.id.as_str()) {
            Split::Pool
        } else if test.contains(r.id.as_str()) {
            Split::Test
        } else {
            Split::Unassigned
        };
    }
}
