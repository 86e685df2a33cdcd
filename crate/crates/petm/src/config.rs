//! Experiment configuration file (TOML). Relative paths are resolved against
//! the directory containing the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use petm_core::llm::{default_stop, MockMode, ProviderKind};
use petm_core::prompt::{PromptTemplate, TaskKind};
use petm_core::retrieval::DEFAULT_SHOTS;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotOrder {
    /// Most similar demonstration directly before the test item.
    #[default]
    NearestLast,
    NearestFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Shown in report rows, e.g. "MRK (Llama)".
    pub label: Option<String>,
    pub mock: Option<MockMode>,
    /// JSON object mapping prompt digests to responses.
    pub recorded: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub stop: Vec<String>,
    pub max_prompt_tokens: Option<usize>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    /// Response cache; defaults to `<output_dir>/cache.jsonl`.
    pub cache: Option<PathBuf>,
    pub no_cache: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            model: "mock".into(),
            label: None,
            mock: Some(MockMode::EchoHypothesis),
            recorded: None,
            temperature: 0.0,
            max_tokens: Some(256),
            stop: default_stop(),
            max_prompt_tokens: None,
            retries: 3,
            backoff_ms: 1000,
            timeout_secs: 120,
            concurrency: 4,
            cache: None,
            no_cache: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    #[default]
    CharNgram,
    Remote,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Sidecar vector cache for the pool.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub store: PathBuf,
    pub output_dir: PathBuf,
    pub tasks: Vec<TaskKind>,
    pub shots: usize,
    /// Use the first `shots` pool records for every test item.
    pub fixed_shots: bool,
    pub shot_order: ShotOrder,
    pub seed: u64,
    /// When both sizes are set the store is split with `seed`; otherwise the
    /// records' own split labels are used.
    pub pool_size: Option<usize>,
    pub test_size: Option<usize>,
    pub diff_ignore_case: bool,
    /// Review aggregate (as served by the annotation service) for the
    /// correct-ME column.
    pub reviews: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub embedding: EmbeddingConfig,
    pub template: PromptTemplate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            store: PathBuf::from("petm.jsonl"),
            output_dir: PathBuf::from("out"),
            tasks: TaskKind::ALL.to_vec(),
            shots: DEFAULT_SHOTS,
            fixed_shots: false,
            shot_order: ShotOrder::default(),
            seed: 0,
            pool_size: None,
            test_size: None,
            diff_ignore_case: false,
            reviews: None,
            provider: ProviderConfig::default(),
            embedding: EmbeddingConfig::default(),
            template: PromptTemplate::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: ExperimentConfig = toml::from_str(text).context("parsing experiment config")?;
        resolve(base, &mut c.store);
        resolve(base, &mut c.output_dir);
        for p in [&mut c.reviews, &mut c.provider.recorded, &mut c.provider.cache, &mut c.embedding.cache].into_iter().flatten() {
            resolve(base, p);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            bail!("`tasks` must name at least one of mt, ape, mrk");
        }
        if self.provider.kind != ProviderKind::Mock && self.provider.endpoint.is_none() {
            bail!("provider.endpoint is required for {:?} providers", self.provider.kind);
        }
        if self.provider.kind == ProviderKind::Mock && self.provider.mock == Some(MockMode::Recorded) && self.provider.recorded.is_none() {
            bail!("provider.recorded is required for the recorded mock");
        }
        if self.embedding.kind == EmbeddingKind::Remote && self.embedding.endpoint.is_none() {
            bail!("embedding.endpoint is required for remote embeddings");
        }
        if self.pool_size.is_some() != self.test_size.is_some() {
            bail!("set both pool_size and test_size, or neither");
        }
        Ok(())
    }

    pub fn outputs_dir(&self) -> PathBuf {
        self.output_dir.join("outputs")
    }

    pub fn output_path(&self, task: TaskKind) -> PathBuf {
        self.outputs_dir().join(format!("{}.jsonl", task.slug()))
    }

    pub fn cache_path(&self) -> Option<PathBuf> {
        if self.provider.no_cache {
            return None;
        }
        Some(self.provider.cache.clone().unwrap_or_else(|| self.output_dir.join("cache.jsonl")))
    }

    pub fn provider_label(&self, fallback: &str) -> String {
        self.provider.label.clone().unwrap_or_else(|| fallback.to_string())
    }
}
