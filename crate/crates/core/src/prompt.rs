//! Few-shot prompt rendering for translation (MT), post-editing (APE) and
//! post-editing with in-line error tags (MRK).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::record::{tokenize_ws, Mark, MarkingVector, TripleRecord};

pub const BAD_OPEN: &str = "<bad>";
pub const BAD_CLOSE: &str = "</bad>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Mt,
    Ape,
    Mrk,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Mt, TaskKind::Ape, TaskKind::Mrk];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Mt => "MT",
            TaskKind::Ape => "APE",
            TaskKind::Mrk => "MRK",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Mt => "mt",
            TaskKind::Ape => "ape",
            TaskKind::Mrk => "mrk",
        }
    }

    pub fn shows_hypothesis(self) -> bool {
        self != TaskKind::Mt
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(TaskKind::Mt),
            "ape" => Ok(TaskKind::Ape),
            "mrk" => Ok(TaskKind::Mrk),
            other => Err(alloc::format!("unknown task `{other}` (expected mt, ape or mrk)")),
        }
    }
}

/// Instruction blocks and line labels for one language pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub source_label: String,
    pub hypothesis_label: String,
    pub target_label: String,
    pub instruction_mt: String,
    pub instruction_ape: String,
    pub instruction_mrk: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            source_label: "English".into(),
            hypothesis_label: "Hypothesis".into(),
            target_label: "German".into(),
            instruction_mt: include_str!("../data/instruction_mt.txt").trim_end().into(),
            instruction_ape: include_str!("../data/instruction_ape.txt").trim_end().into(),
            instruction_mrk: include_str!("../data/instruction_mrk.txt").trim_end().into(),
        }
    }
}

impl PromptTemplate {
    /// English-German template whose MRK instruction is split over three lines.
    pub fn with_multiline_mrk() -> Self {
        PromptTemplate {
            instruction_mrk: include_str!("../data/instruction_mrk_multiline.txt").trim_end().into(),
            ..PromptTemplate::default()
        }
    }

    pub fn instruction(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::Mt => &self.instruction_mt,
            TaskKind::Ape => &self.instruction_ape,
            TaskKind::Mrk => &self.instruction_mrk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{tokens} tokens but {marks} marks")]
    LengthMismatch { tokens: usize, marks: usize },
    #[error("record `{0}` has no markings but the MRK task needs them")]
    MissingMarkings(String),
    #[error("no demonstration examples and zero-shot was not requested")]
    EmptyShots,
}

/// A hypothesis rendered with `<bad> ... </bad>` around every maximal run of
/// BAD tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedText(String);

impl MarkedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for MarkedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn insert_marks<S: AsRef<str>>(tokens: &[S], marks: &MarkingVector) -> Result<MarkedText, PromptError> {
    if tokens.len() != marks.len() {
        return Err(PromptError::LengthMismatch { tokens: tokens.len(), marks: marks.len() });
    }
    let mut parts: Vec<&str> = Vec::with_capacity(tokens.len() + 2 * marks.bad_runs());
    let mut open = false;
    for (token, &mark) in tokens.iter().zip(marks.marks()) {
        match (mark, open) {
            (Mark::Bad, false) => {
                parts.push(BAD_OPEN);
                open = true;
            }
            (Mark::Ok, true) => {
                parts.push(BAD_CLOSE);
                open = false;
            }
            _ => {}
        }
        parts.push(token.as_ref());
    }
    if open {
        parts.push(BAD_CLOSE);
    }
    Ok(MarkedText(parts.join(" ")))
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let (h, n) = (haystack.as_bytes(), needle.as_bytes());
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Removes every `<bad>`/`</bad>` tag (balanced or not, any ASCII case) and
/// collapses whitespace to single spaces.
pub fn strip_marks(text: &str) -> String {
    let mut rest = String::from(text);
    for tag in [BAD_CLOSE, BAD_OPEN] {
        let mut out = String::with_capacity(rest.len());
        let mut cursor = rest.as_str();
        while let Some(pos) = find_ascii_ci(cursor, tag) {
            out.push_str(&cursor[..pos]);
            out.push(' ');
            cursor = &cursor[pos + tag.len()..];
        }
        out.push_str(cursor);
        rest = out;
    }
    tokenize_ws(&rest).join(" ")
}

/// What to render: the task, ordered demonstrations, and the item to solve.
#[derive(Clone, Debug)]
pub struct PromptSpec<'a> {
    pub task: TaskKind,
    /// Rendered in the given order, nearest the test item last.
    pub shots: Vec<&'a TripleRecord>,
    pub test: &'a TripleRecord,
    pub template: &'a PromptTemplate,
    pub zero_shot: bool,
}

fn one_line(text: &str) -> String {
    if text.contains(['\n', '\r']) {
        text.replace(['\n', '\r'], " ")
    } else {
        text.to_string()
    }
}

fn hypothesis_line(task: TaskKind, record: &TripleRecord) -> Result<String, PromptError> {
    let tokens = tokenize_ws(&record.hypothesis);
    match task {
        TaskKind::Mrk => {
            let marks = record.markings.as_ref().ok_or_else(|| PromptError::MissingMarkings(record.id.clone()))?;
            Ok(insert_marks(&tokens, marks)?.into_string())
        }
        _ => Ok(tokens.join(" ")),
    }
}

fn push_item(out: &mut String, spec: &PromptSpec<'_>, record: &TripleRecord, reference: Option<&str>) -> Result<(), PromptError> {
    let t = spec.template;
    out.push_str(&t.source_label);
    out.push_str(": ");
    out.push_str(&one_line(&record.source));
    out.push('\n');
    if spec.task.shows_hypothesis() {
        out.push_str(&t.hypothesis_label);
        out.push_str(": ");
        out.push_str(&hypothesis_line(spec.task, record)?);
        out.push('\n');
    }
    out.push_str(&t.target_label);
    out.push(':');
    if let Some(reference) = reference {
        out.push(' ');
        out.push_str(&one_line(reference));
        out.push_str("\n\n");
    }
    Ok(())
}

/// Renders the prompt; the text ends with the bare target label of the test item.
pub fn build_prompt(spec: &PromptSpec<'_>) -> Result<String, PromptError> {
    if spec.shots.is_empty() && !spec.zero_shot {
        return Err(PromptError::EmptyShots);
    }
    let mut out = String::new();
    out.push_str(spec.template.instruction(spec.task));
    out.push_str("\n\n");
    for shot in &spec.shots {
        push_item(&mut out, spec, shot, Some(&shot.reference))?;
    }
    push_item(&mut out, spec, spec.test, None)?;
    Ok(out)
}
