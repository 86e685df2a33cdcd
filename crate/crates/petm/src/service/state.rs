//! Sessions, answers, corrections and review verdicts, rebuilt from an
//! append-only event log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use petm_core::record::{annotation_record_id, tokenize_ws, validate_record, MarkingVector, SkipReason, TripleRecord};
use serde::{Deserialize, Serialize};

use super::error::ServiceError;
use crate::experiment::ReviewAggregate;

/// Condition name for corrections produced while annotating.
pub const LIVE_CONDITION: &str = "live";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Trial,
    Main,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Trial => "trial",
            Phase::Main => "main",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Marked(MarkingVector),
    Skipped(SkipReason),
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub annotator_id: String,
    pub phase: Phase,
    pub items: Vec<String>,
    pub answers: HashMap<String, Answer>,
}

impl Session {
    pub fn cursor(&self) -> usize {
        self.items.iter().position(|i| !self.answers.contains_key(i)).unwrap_or(self.items.len())
    }

    pub fn summary(&self) -> SessionSummary {
        let skipped = self.answers.values().filter(|a| matches!(a, Answer::Skipped(_))).count();
        SessionSummary {
            session_id: self.id.clone(),
            annotator_id: self.annotator_id.clone(),
            phase: self.phase,
            items: self.items.clone(),
            cursor: self.cursor(),
            completed: self.answers.len() - skipped,
            skipped,
            total: self.items.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub annotator_id: String,
    pub phase: Phase,
    pub items: Vec<String>,
    pub cursor: usize,
    pub completed: usize,
    pub skipped: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextItem {
    pub item_id: String,
    pub source: String,
    /// Whitespace tokens; mark indices refer to this list.
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextResponse {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<NextItem>,
    pub position: usize,
    pub total: usize,
    pub completed: usize,
    pub skipped: usize,
}

/// A correction awaiting yes/no review.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub item_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTarget {
    pub condition: String,
    pub target_id: String,
    pub item_id: String,
    pub source: String,
    pub hypothesis: String,
    pub correction: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated { session_id: String, annotator_id: String, phase: Phase, items: Vec<String> },
    Marked { session_id: String, item_id: String, marks: MarkingVector },
    Skipped { session_id: String, item_id: String, reason: SkipReason },
    Corrected { condition: String, target_id: String, item_id: String, text: String },
    Reviewed { condition: String, target_id: String, reviewer_id: String, correct: bool },
}

/// Append-only JSONL event file.
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens `path` for appending and returns the events already in it.
    pub fn open(path: &Path) -> std::io::Result<(Self, Vec<Event>)> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut events = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                events.push(event);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((EventLog { path: path.to_path_buf(), file }, events))
    }

    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub struct Store {
    items: Vec<TripleRecord>,
    by_id: HashMap<String, usize>,
    trial_size: usize,
    block_size: usize,
    sessions: BTreeMap<String, Session>,
    main_blocks_taken: usize,
    corrections: BTreeMap<(String, String), Correction>,
    reviews: BTreeMap<(String, String, String), bool>,
    log: Option<EventLog>,
}

pub fn session_id(annotator_id: &str, phase: Phase) -> String {
    format!("{annotator_id}-{}", phase.as_str())
}

impl Store {
    pub fn new(items: Vec<TripleRecord>, trial_size: usize, block_size: usize) -> Self {
        let by_id = items.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        Store {
            items,
            by_id,
            trial_size,
            block_size: block_size.max(1),
            sessions: BTreeMap::new(),
            main_blocks_taken: 0,
            corrections: BTreeMap::new(),
            reviews: BTreeMap::new(),
            log: None,
        }
    }

    /// Replays `log` and appends future events to it.
    pub fn with_log(mut self, log: EventLog, events: Vec<Event>) -> Result<Self, ServiceError> {
        for event in events {
            self.apply(event);
        }
        self.log = Some(log);
        Ok(self)
    }

    pub fn item(&self, id: &str) -> Option<&TripleRecord> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    fn commit(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some(log) = &mut self.log {
            log.append(&event).map_err(|e| ServiceError::Internal(format!("writing {}: {e}", log.path().display())))?;
        }
        self.apply(event);
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionCreated { session_id, annotator_id, phase, items } => {
                if phase == Phase::Main {
                    self.main_blocks_taken += 1;
                }
                self.sessions.insert(session_id.clone(), Session { id: session_id, annotator_id, phase, items, answers: HashMap::new() });
            }
            Event::Marked { session_id, item_id, marks } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    s.answers.insert(item_id, Answer::Marked(marks));
                }
            }
            Event::Skipped { session_id, item_id, reason } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    s.answers.insert(item_id, Answer::Skipped(reason));
                }
            }
            Event::Corrected { condition, target_id, item_id, text } => {
                self.corrections.insert((condition, target_id), Correction { item_id, text });
            }
            Event::Reviewed { condition, target_id, reviewer_id, correct } => {
                self.reviews.insert((condition, target_id, reviewer_id), correct);
            }
        }
    }

    fn main_block(&self, n: usize) -> Option<Vec<String>> {
        let start = self.trial_size.min(self.items.len()) + n * self.block_size;
        if start >= self.items.len() {
            return None;
        }
        let end = (start + self.block_size).min(self.items.len());
        Some(self.items[start..end].iter().map(|r| r.id.clone()).collect())
    }

    /// Existing session for the annotator and phase, or a new one.
    pub fn create_session(&mut self, annotator_id: &str, phase: Phase) -> Result<SessionSummary, ServiceError> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("annotator_id must not be empty".into()));
        }
        let id = session_id(annotator_id, phase);
        if let Some(s) = self.sessions.get(&id) {
            return Ok(s.summary());
        }
        let items = match phase {
            Phase::Trial => {
                let n = self.trial_size.min(self.items.len());
                if n == 0 {
                    return Err(ServiceError::NoBlocksAvailable);
                }
                self.items[..n].iter().map(|r| r.id.clone()).collect()
            }
            Phase::Main => self.main_block(self.main_blocks_taken).ok_or(ServiceError::NoBlocksAvailable)?,
        };
        self.commit(Event::SessionCreated { session_id: id.clone(), annotator_id: annotator_id.into(), phase, items })?;
        Ok(self.sessions[&id].summary())
    }

    pub fn session(&self, id: &str) -> Result<&Session, ServiceError> {
        self.sessions.get(id).ok_or_else(|| ServiceError::SessionNotFound(id.into()))
    }

    pub fn next_item(&self, session_id: &str) -> Result<NextResponse, ServiceError> {
        let s = self.session(session_id)?;
        let summary = s.summary();
        let item = s.items.get(summary.cursor).map(|id| {
            let r = self.item(id).expect("session items exist");
            NextItem { item_id: id.clone(), source: r.source.clone(), tokens: tokenize_ws(&r.hypothesis).into_iter().map(String::from).collect() }
        });
        Ok(NextResponse {
            done: item.is_none(),
            item,
            position: summary.cursor,
            total: summary.total,
            completed: summary.completed,
            skipped: summary.skipped,
        })
    }

    fn check_unanswered(&self, session_id: &str, item_id: &str) -> Result<&TripleRecord, ServiceError> {
        let s = self.session(session_id)?;
        if !s.items.iter().any(|i| i == item_id) {
            return Err(ServiceError::ItemNotInSession { item: item_id.into(), session: session_id.into() });
        }
        if s.answers.contains_key(item_id) {
            return Err(ServiceError::AlreadyAnswered(item_id.into()));
        }
        Ok(self.item(item_id).expect("session items exist"))
    }

    /// Stores the marks and returns the record a live correction should use.
    pub fn submit_marks(&mut self, session_id: &str, item_id: &str, marks: MarkingVector) -> Result<TripleRecord, ServiceError> {
        let item = self.check_unanswered(session_id, item_id)?;
        let expected = tokenize_ws(&item.hypothesis).len();
        if marks.len() != expected {
            return Err(ServiceError::LengthMismatch { got: marks.len(), expected });
        }
        let annotator = self.sessions[session_id].annotator_id.clone();
        let mut record = item.clone().with_markings(marks.clone());
        record.id = annotation_record_id(item_id, &annotator);
        record.annotator_id = Some(annotator);
        let violations: Vec<_> = validate_record(&record).into_iter().filter(|v| v.is_structural()).collect();
        if !violations.is_empty() {
            return Err(ServiceError::InvalidRequest(format!("{violations:?}")));
        }
        self.commit(Event::Marked { session_id: session_id.into(), item_id: item_id.into(), marks })?;
        Ok(record)
    }

    pub fn skip_item(&mut self, session_id: &str, item_id: &str, reason: SkipReason) -> Result<(), ServiceError> {
        self.check_unanswered(session_id, item_id)?;
        self.commit(Event::Skipped { session_id: session_id.into(), item_id: item_id.into(), reason })
    }

    pub fn record_correction(&mut self, condition: &str, target_id: &str, item_id: &str, text: &str) -> Result<(), ServiceError> {
        self.commit(Event::Corrected { condition: condition.into(), target_id: target_id.into(), item_id: item_id.into(), text: text.into() })
    }

    /// Adds a reviewable correction without logging it (offline outputs).
    pub fn seed_correction(&mut self, condition: &str, target_id: &str, item_id: &str, text: &str) {
        self.apply(Event::Corrected { condition: condition.into(), target_id: target_id.into(), item_id: item_id.into(), text: text.into() });
    }

    pub fn correction(&self, condition: &str, target_id: &str) -> Option<&Correction> {
        self.corrections.get(&(condition.to_string(), target_id.to_string()))
    }

    /// Stores or overwrites the reviewer's verdict.
    pub fn submit_review(&mut self, condition: &str, target_id: &str, reviewer_id: &str, correct: bool) -> Result<(), ServiceError> {
        if reviewer_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("reviewer_id must not be empty".into()));
        }
        if self.correction(condition, target_id).is_none() {
            return Err(ServiceError::NothingToReview { condition: condition.into(), target: target_id.into() });
        }
        self.commit(Event::Reviewed { condition: condition.into(), target_id: target_id.into(), reviewer_id: reviewer_id.into(), correct })
    }

    /// First correction of `condition` the reviewer has not judged yet.
    pub fn next_review(&self, condition: &str, reviewer_id: &str) -> Option<ReviewTarget> {
        self.corrections
            .iter()
            .filter(|((c, _), _)| c == condition)
            .find(|((c, t), _)| !self.reviews.contains_key(&(c.clone(), t.clone(), reviewer_id.to_string())))
            .map(|((c, t), corr)| {
                let item = self.item(&corr.item_id);
                ReviewTarget {
                    condition: c.clone(),
                    target_id: t.clone(),
                    item_id: corr.item_id.clone(),
                    source: item.map(|r| r.source.clone()).unwrap_or_default(),
                    hypothesis: item.map(|r| r.hypothesis.clone()).unwrap_or_default(),
                    correction: corr.text.clone(),
                }
            })
    }

    /// Percent judged correct per condition; null where nothing was reviewed.
    pub fn review_aggregates(&self) -> Vec<ReviewAggregate> {
        let mut by_condition: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (c, _) in self.corrections.keys() {
            by_condition.entry(c).or_default();
        }
        for ((c, _, _), &correct) in &self.reviews {
            let e = by_condition.entry(c).or_default();
            e.0 += 1;
            e.1 += correct as usize;
        }
        by_condition
            .into_iter()
            .map(|(c, (reviews, correct))| ReviewAggregate {
                condition: c.into(),
                reviews,
                correct,
                percent_correct: (reviews > 0).then(|| 100.0 * correct as f64 / reviews as f64),
            })
            .collect()
    }

    /// Answered items as PE-TM records, one per (item, annotator).
    pub fn export(&self, phase: Option<Phase>, annotator: Option<&str>) -> Vec<TripleRecord> {
        let mut out = Vec::new();
        for s in self.sessions.values() {
            if phase.is_some_and(|p| p != s.phase) || annotator.is_some_and(|a| a != s.annotator_id) {
                continue;
            }
            for item_id in &s.items {
                let Some(answer) = s.answers.get(item_id) else { continue };
                let mut r = self.item(item_id).expect("session items exist").clone();
                r.id = annotation_record_id(item_id, &s.annotator_id);
                r.annotator_id = Some(s.annotator_id.clone());
                r.split = Default::default();
                match answer {
                    Answer::Marked(m) => r.markings = Some(m.clone()),
                    Answer::Skipped(reason) => {
                        r.markings = None;
                        r.skip = Some(*reason);
                    }
                }
                out.push(r);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(n: usize, trial: usize, block: usize) -> Store {
        let items = (0..n).map(|i| TripleRecord::new(format!("i{i:03}"), format!("source {i}"), "a b c", "a b d")).collect();
        Store::new(items, trial, block)
    }

    #[test]
    fn trial_is_shared_and_main_blocks_are_disjoint() {
        let mut s = store(12, 4, 3);
        let t: Vec<_> = ["a", "b", "c"].iter().map(|a| s.create_session(a, Phase::Trial).unwrap().items).collect();
        assert!(t.iter().all(|i| *i == t[0]) && t[0].len() == 4);
        let m1 = s.create_session("a", Phase::Main).unwrap().items;
        let m2 = s.create_session("b", Phase::Main).unwrap().items;
        assert!(m1.iter().all(|i| !m2.contains(i) && !t[0].contains(i)));
        assert_eq!(s.create_session("a", Phase::Main).unwrap().items, m1);
        s.create_session("c", Phase::Main).unwrap();
        assert_eq!(s.create_session("d", Phase::Main).unwrap_err(), ServiceError::NoBlocksAvailable);
    }

    #[test]
    fn answers_are_single_and_validated() {
        let mut s = store(3, 3, 10);
        let id = s.create_session("a", Phase::Trial).unwrap().session_id;
        assert!(matches!(s.submit_marks(&id, "i000", MarkingVector::all_ok(2)), Err(ServiceError::LengthMismatch { got: 2, expected: 3 })));
        assert_eq!(s.next_item(&id).unwrap().item.unwrap().item_id, "i000");
        s.submit_marks(&id, "i000", MarkingVector::with_bad(3, &[2])).unwrap();
        assert!(matches!(s.skip_item(&id, "i000", SkipReason::Other), Err(ServiceError::AlreadyAnswered(_))));
        s.skip_item(&id, "i001", SkipReason::MissingKnowledge).unwrap();
        assert!(matches!(s.skip_item(&id, "nope", SkipReason::Other), Err(ServiceError::ItemNotInSession { .. })));
        let next = s.next_item(&id).unwrap();
        assert_eq!((next.position, next.completed, next.skipped), (2, 1, 1));
        s.submit_marks(&id, "i002", MarkingVector::all_ok(3)).unwrap();
        assert!(s.next_item(&id).unwrap().done);
    }

    #[test]
    fn reviews_overwrite_and_aggregate() {
        let mut s = store(3, 3, 10);
        assert!(s.review_aggregates().is_empty());
        s.record_correction("mrk", "i000", "i000", "x").unwrap();
        assert_eq!(s.review_aggregates()[0].percent_correct, None);
        assert!(matches!(s.submit_review("mrk", "i001", "r", true), Err(ServiceError::NothingToReview { .. })));
        s.submit_review("mrk", "i000", "r", false).unwrap();
        s.submit_review("mrk", "i000", "r", true).unwrap();
        assert_eq!(s.review_aggregates()[0].percent_correct, Some(100.0));
        assert!(s.next_review("mrk", "r").is_none());
        assert_eq!(s.next_review("mrk", "q").unwrap().correction, "x");
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let (log, events) = EventLog::open(&path).unwrap();
            let mut s = store(5, 2, 2).with_log(log, events).unwrap();
            let id = s.create_session("a", Phase::Main).unwrap().session_id;
            s.submit_marks(&id, "i002", MarkingVector::with_bad(3, &[0])).unwrap();
        }
        let (log, events) = EventLog::open(&path).unwrap();
        let mut s = store(5, 2, 2).with_log(log, events).unwrap();
        assert_eq!(s.next_item("a-main").unwrap().item.unwrap().item_id, "i003");
        assert_eq!(s.create_session("b", Phase::Main).unwrap().items, vec!["i004"]);
        assert_eq!(s.export(Some(Phase::Main), None).len(), 1);
    }
}
