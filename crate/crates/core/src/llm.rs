//! Provider-agnostic completion interface, deterministic mock providers, and
//! clean-up of raw model output.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::{strip_marks, PromptTemplate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// JSON chat-completions endpoint, prompt sent as a single user message.
    Chat,
    /// Plain completions endpoint for local servers.
    Completion,
    #[default]
    Mock,
}

pub fn default_stop() -> Vec<String> {
    alloc::vec!["\n\n".into(), "\nEnglish:".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub provider: ProviderKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub stop: Vec<String>,
    /// Prompts with more whitespace tokens than this are rejected before sending.
    pub max_prompt_tokens: Option<usize>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            provider: ProviderKind::Mock,
            model: "mock".into(),
            temperature: 0.0,
            max_tokens: Some(256),
            stop: default_stop(),
            max_prompt_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("provider unavailable: {message}")]
    ProviderUnavailable { message: String, retry_after_ms: Option<u64> },
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("prompt exceeds the provider's context: {0}")]
    ContextOverflow(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("no recorded response for prompt {0}")]
    MockMiss(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
}

impl GatewayError {
    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::ProviderUnavailable { .. } | GatewayError::RateLimited { .. })
    }

    pub fn retry_after_ms(&self) -> Option<u64> {
        match self {
            GatewayError::ProviderUnavailable { retry_after_ms, .. } | GatewayError::RateLimited { retry_after_ms } => *retry_after_ms,
            _ => None,
        }
    }
}

/// Anything that answers a single user message.
pub trait CompletionProvider {
    /// Short identifier used in logs and cache keys.
    fn name(&self) -> String;

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError>;
}

/// Hex SHA-256 of the prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        use core::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Rejects empty prompts and prompts over the configured token budget.
pub fn check_prompt(prompt: &str, params: &GenerationParams) -> Result<(), GatewayError> {
    if prompt.trim().is_empty() {
        return Err(GatewayError::EmptyPrompt);
    }
    if let Some(limit) = params.max_prompt_tokens {
        let n = prompt.split_whitespace().count();
        if n > limit {
            return Err(GatewayError::ContextOverflow(alloc::format!("{n} tokens > limit {limit}")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockMode {
    /// Answer with the test item's hypothesis line, tags included.
    EchoHypothesis,
    /// Answer with the test item's reference.
    ReturnReference,
    /// Answer from a table keyed by prompt digest.
    Recorded,
}

/// Known texts for a test source, used by the echo and reference modes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MockEntry {
    pub hypothesis: String,
    pub reference: String,
}

/// Deterministic offline provider.
#[derive(Clone, Debug)]
pub struct MockProvider {
    pub mode: MockMode,
    pub template: PromptTemplate,
    /// Test source -> known hypothesis/reference.
    pub items: BTreeMap<String, MockEntry>,
    /// Prompt digest -> response.
    pub recorded: BTreeMap<String, String>,
}

impl MockProvider {
    pub fn new(mode: MockMode) -> Self {
        MockProvider { mode, template: PromptTemplate::default(), items: BTreeMap::new(), recorded: BTreeMap::new() }
    }

    pub fn with_items(mut self, items: impl IntoIterator<Item = (String, MockEntry)>) -> Self {
        self.items.extend(items);
        self
    }

    pub fn with_recorded(mut self, recorded: BTreeMap<String, String>) -> Self {
        self.recorded = recorded;
        self
    }

    fn last_field<'p>(&self, prompt: &'p str, label: &str) -> Option<&'p str> {
        prompt.lines().rev().find_map(|line| line.strip_prefix(label).and_then(|rest| rest.strip_prefix(": ")))
    }

    fn test_entry(&self, prompt: &str) -> Result<&MockEntry, GatewayError> {
        let source = self
            .last_field(prompt, &self.template.source_label)
            .ok_or_else(|| GatewayError::Protocol("prompt has no source line".into()))?;
        self.items.get(source).ok_or_else(|| GatewayError::MockMiss(prompt_digest(prompt)))
    }
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> String {
        match self.mode {
            MockMode::EchoHypothesis => "mock:echo-hypothesis",
            MockMode::ReturnReference => "mock:return-reference",
            MockMode::Recorded => "mock:recorded",
        }
        .to_string()
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        check_prompt(prompt, params)?;
        match self.mode {
            MockMode::EchoHypothesis => match self.last_field(prompt, &self.template.hypothesis_label) {
                Some(h) => Ok(h.to_string()),
                None => Ok(self.test_entry(prompt)?.hypothesis.clone()),
            },
            MockMode::ReturnReference => Ok(self.test_entry(prompt)?.reference.clone()),
            MockMode::Recorded => {
                let digest = prompt_digest(prompt);
                self.recorded.get(&digest).cloned().ok_or(GatewayError::MockMiss(digest))
            }
        }
    }
}

/// Final hypothesis extracted from a raw model response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Postprocessed {
    pub text: String,
    /// Nothing usable remained; callers fall back to the original hypothesis.
    pub empty: bool,
}

/// Keeps the first generated line (dropping a repeated target label and any
/// continuation into further examples), strips error tags and normalizes
/// whitespace.
pub fn postprocess(raw: &str, template: &PromptTemplate) -> Postprocessed {
    let normalized = raw.replace("\r\n", "\n");
    let mut text = normalized.trim_start();
    if let Some(rest) = text.strip_prefix(template.target_label.as_str()).and_then(|r| r.strip_prefix(':')) {
        text = rest.trim_start();
    }
    let first_line = text.split('\n').next().unwrap_or("");
    let cleaned = strip_marks(first_line);
    let empty = cleaned.is_empty();
    Postprocessed { text: cleaned, empty }
}
