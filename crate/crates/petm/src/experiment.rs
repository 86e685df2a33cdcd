//! Runs MT/APE/MRK conditions over the test split and scores their outputs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use petm_core::llm::{postprocess, prompt_digest, GenerationParams, MockEntry, MockMode, MockProvider, ProviderKind};
use petm_core::metrics::{bleu_corpus, me_ue_retokenized, summarize_me_ue, tokenize_13a, ter_corpus, MeUeCounts, MetricReport};
use petm_core::prompt::{build_prompt, PromptSpec, PromptTemplate, TaskKind};
use petm_core::record::{split_pool, tokenize_ws, Split, TripleRecord};
use petm_core::retrieval::{CharNgramProvider, EmbeddingProvider, RetrievalIndex};
use serde::{Deserialize, Serialize};

use crate::config::{EmbeddingKind, ExperimentConfig, ShotOrder};
use crate::embedding::{build_index_cached, RemoteEmbeddingProvider};
use crate::gateway::{Gateway, HttpProvider, RequestContext, RequestLog, ResponseCache, RetryPolicy};
use crate::report::{Report, BASELINE_LABEL};
use crate::store::read_records;

/// One test item's result under one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub item_id: String,
    pub task: TaskKind,
    pub prompt_digest: String,
    pub shots: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    /// Post-processed text; the original hypothesis when the model returned nothing usable.
    pub hypothesis: String,
    #[serde(default)]
    pub empty_output: bool,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Pool and test records in store order.
pub struct SplitData {
    pub pool: Vec<TripleRecord>,
    pub test: Vec<TripleRecord>,
}

pub fn resolve_split(config: &ExperimentConfig, records: &[TripleRecord]) -> Result<SplitData> {
    let (pool_ids, test_ids): (Vec<String>, Vec<String>) = match (config.pool_size, config.test_size) {
        (Some(p), Some(t)) => split_pool(records, p, t, config.seed)?,
        _ => (
            records.iter().filter(|r| r.split == Split::Pool).map(|r| r.id.clone()).collect(),
            records.iter().filter(|r| r.split == Split::Test).map(|r| r.id.clone()).collect(),
        ),
    };
    let pick = |ids: &[String]| {
        let set: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        records.iter().filter(|r| set.contains(r.id.as_str())).cloned().collect::<Vec<_>>()
    };
    let data = SplitData { pool: pick(&pool_ids), test: pick(&test_ids) };
    if data.test.is_empty() {
        bail!("the test split is empty; label records with \"split\" or set pool_size/test_size");
    }
    Ok(data)
}

fn mock_items(records: &[TripleRecord]) -> Vec<(String, MockEntry)> {
    records
        .iter()
        .map(|r| (r.source.clone(), MockEntry { hypothesis: r.hypothesis.clone(), reference: r.reference.clone() }))
        .collect()
}

pub fn load_recorded(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn generation_params(config: &ExperimentConfig) -> GenerationParams {
    let p = &config.provider;
    GenerationParams {
        provider: p.kind,
        model: p.model.clone(),
        temperature: p.temperature,
        max_tokens: p.max_tokens,
        stop: p.stop.clone(),
        max_prompt_tokens: p.max_prompt_tokens,
    }
}

/// Gateway for the configured provider; mock lookups use `records`.
pub fn build_gateway(config: &ExperimentConfig, records: &[TripleRecord], log: Option<&Path>) -> Result<Gateway> {
    let p = &config.provider;
    let provider: Box<dyn petm_core::llm::CompletionProvider + Send + Sync> = match p.kind {
        ProviderKind::Mock => {
            let mode = p.mock.unwrap_or(MockMode::EchoHypothesis);
            let mut mock = MockProvider::new(mode).with_items(mock_items(records));
            mock.template = config.template.clone();
            if let Some(path) = &p.recorded {
                mock = mock.with_recorded(load_recorded(path)?);
            }
            Box::new(mock)
        }
        kind => {
            let mut http = HttpProvider::new(kind, p.endpoint.clone().ok_or_else(|| anyhow!("provider.endpoint missing"))?);
            http.timeout = Duration::from_secs(p.timeout_secs);
            Box::new(http)
        }
    };
    let mut gateway = Gateway::new(provider, generation_params(config))
        .with_retry(RetryPolicy { retries: p.retries, backoff_ms: p.backoff_ms })
        .with_max_in_flight(p.concurrency);
    if let Some(cache) = config.cache_path() {
        gateway = gateway.with_cache(ResponseCache::open(&cache).with_context(|| format!("opening {}", cache.display()))?);
    }
    if let Some(log) = log {
        gateway = gateway.with_log(RequestLog::open(log)?);
    }
    Ok(gateway)
}

pub fn embedding_provider(config: &ExperimentConfig, pool: &[TripleRecord]) -> Box<dyn EmbeddingProvider + Send + Sync> {
    match config.embedding.kind {
        EmbeddingKind::CharNgram => Box::new(CharNgramProvider::fit(&pool.iter().map(|r| r.source.as_str()).collect::<Vec<_>>())),
        EmbeddingKind::Remote => {
            let e = &config.embedding;
            let mut remote = RemoteEmbeddingProvider::new(e.endpoint.clone().unwrap_or_default(), e.model.clone().unwrap_or_default());
            remote.retries = config.provider.retries;
            remote.backoff_ms = config.provider.backoff_ms;
            Box::new(remote)
        }
    }
}

/// Shot selection for every test item.
pub struct ShotPlanner {
    pool: Vec<TripleRecord>,
    by_id: HashMap<String, usize>,
    index: Option<(RetrievalIndex, Box<dyn EmbeddingProvider + Send + Sync>)>,
    k: usize,
    fixed: bool,
    order: ShotOrder,
}

impl ShotPlanner {
    pub fn new(config: &ExperimentConfig, pool: &[TripleRecord]) -> Result<Self> {
        let by_id = pool.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let index = if config.shots > 0 && !config.fixed_shots && !pool.is_empty() {
            let provider = embedding_provider(config, pool);
            let pairs: Vec<(&str, &str)> = pool.iter().map(|r| (r.id.as_str(), r.source.as_str())).collect();
            let index = build_index_cached(provider.as_ref(), &pairs, config.embedding.cache.as_deref())?;
            Some((index, provider))
        } else {
            None
        };
        if config.shots > pool.len() {
            eprintln!("warning: pool has {} records, fewer than {} shots", pool.len(), config.shots);
        }
        Ok(ShotPlanner { pool: pool.to_vec(), by_id, index, k: config.shots, fixed: config.fixed_shots, order: config.shot_order })
    }

    pub fn pool(&self) -> &[TripleRecord] {
        &self.pool
    }

    /// Demonstrations in rendering order.
    pub fn shots(&self, test: &TripleRecord) -> Result<Vec<&TripleRecord>> {
        if self.k == 0 {
            return Ok(Vec::new());
        }
        let mut ranked: Vec<&TripleRecord> = match &self.index {
            _ if self.fixed => self.pool.iter().filter(|r| r.id != test.id).take(self.k).collect(),
            Some((index, provider)) => index
                .query(provider.as_ref(), &test.source, Some(&test.id), self.k)?
                .into_iter()
                .map(|s| &self.pool[self.by_id[&s.id]])
                .collect(),
            None => Vec::new(),
        };
        if self.order == ShotOrder::NearestLast && !self.fixed {
            ranked.reverse();
        }
        Ok(ranked)
    }
}

/// Prompts, calls and post-processes every test item; items are processed
/// concurrently up to the gateway bound and returned in test order.
pub fn run_condition(
    task: TaskKind,
    test: &[TripleRecord],
    planner: &ShotPlanner,
    template: &PromptTemplate,
    gateway: &Gateway,
    workers: usize,
) -> Result<Vec<OutputRecord>> {
    let results: Vec<Mutex<Option<OutputRecord>>> = test.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let fatal: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, test.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= test.len() || fatal.lock().unwrap().is_some() {
                    break;
                }
                match run_item(task, &test[i], planner, template, gateway) {
                    Ok(out) => *results[i].lock().unwrap() = Some(out),
                    Err(e) => *fatal.lock().unwrap() = Some(e),
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    Ok(results.into_iter().map(|m| m.into_inner().unwrap().expect("every item processed")).collect())
}

/// The prompt sent for `item` and the ids of its demonstrations.
pub fn item_prompt(task: TaskKind, item: &TripleRecord, planner: &ShotPlanner, template: &PromptTemplate) -> Result<(String, Vec<String>)> {
    let shots = planner.shots(item)?;
    let spec = PromptSpec { task, shots: shots.clone(), test: item, template, zero_shot: shots.is_empty() };
    let prompt = build_prompt(&spec).with_context(|| format!("building the {task} prompt for {}", item.id))?;
    Ok((prompt, shots.iter().map(|r| r.id.clone()).collect()))
}

pub fn run_item(task: TaskKind, item: &TripleRecord, planner: &ShotPlanner, template: &PromptTemplate, gateway: &Gateway) -> Result<OutputRecord> {
    let (prompt, shot_ids) = item_prompt(task, item, planner, template)?;
    let ctx = RequestContext { task: Some(task.slug().into()), item_id: Some(item.id.clone()) };
    Ok(match gateway.complete(&prompt, &ctx) {
        Ok(c) => {
            let post = postprocess(&c.raw, template);
            let hypothesis = if post.empty { tokenize_ws(&item.hypothesis).join(" ") } else { post.text };
            OutputRecord {
                item_id: item.id.clone(),
                task,
                prompt_digest: c.digest,
                shots: shot_ids,
                raw: Some(c.raw),
                hypothesis,
                empty_output: post.empty,
                failed: false,
                error: None,
            }
        }
        Err(f) => OutputRecord {
            item_id: item.id.clone(),
            task,
            prompt_digest: prompt_digest(&prompt),
            shots: shot_ids,
            raw: None,
            hypothesis: String::new(),
            empty_output: false,
            failed: true,
            error: Some(f.to_string()),
        },
    })
}

pub fn write_outputs(path: &Path, outputs: &[OutputRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for o in outputs {
        writeln!(f, "{}", serde_json::to_string(o)?)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_outputs(path: &Path) -> Result<Vec<OutputRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Scores (hypothesis, reference) pairs, plus ME/UE against the marked
/// original hypotheses when `with_me_ue` is set. Both sides are 13a-tokenized
/// for the diff so detokenized output is not penalized for punctuation.
pub fn score_rows(
    label: &str,
    rows: &[(&TripleRecord, &str)],
    with_me_ue: bool,
    ignore_case: bool,
    failed: usize,
) -> Result<MetricReport> {
    if rows.is_empty() {
        bail!("no scored outputs for {label}");
    }
    let hyps: Vec<&str> = rows.iter().map(|(_, h)| *h).collect();
    let refs: Vec<&str> = rows.iter().map(|(r, _)| r.reference.as_str()).collect();
    let bleu = bleu_corpus(&hyps, &refs)?;
    let ter = ter_corpus(&hyps, &refs)?;
    let mut report = MetricReport {
        label: label.into(),
        bleu,
        ter,
        me: None,
        ue: None,
        me_macro: None,
        ue_macro: None,
        counts: None,
        percent_correct: None,
        scored: rows.len(),
        failed,
    };
    if with_me_ue {
        let mut per_sentence: Vec<MeUeCounts> = Vec::with_capacity(rows.len());
        for (record, hyp) in rows {
            let Some(marks) = &record.markings else { continue };
            let tokenize = |text: &str| {
                let toks = tokenize_13a(text);
                if ignore_case { toks.into_iter().map(|t| t.to_lowercase()).collect() } else { toks }
            };
            per_sentence.push(me_ue_retokenized(&tokenize_ws(&record.hypothesis), marks, hyp, tokenize)?);
        }
        let summary = summarize_me_ue(&per_sentence);
        report.me = summary.total.me();
        report.ue = summary.total.ue();
        report.me_macro = summary.me_macro;
        report.ue_macro = summary.ue_macro;
        report.counts = Some(summary.total);
    }
    Ok(report)
}

/// Metric row for one condition; failed items are excluded and counted.
pub fn score_condition(label: &str, task: TaskKind, outputs: &[OutputRecord], test: &[TripleRecord], ignore_case: bool) -> Result<MetricReport> {
    let by_id: HashMap<&str, &TripleRecord> = test.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut rows = Vec::new();
    let mut failed = 0;
    for o in outputs {
        let record = by_id.get(o.item_id.as_str()).ok_or_else(|| anyhow!("output for unknown test item {}", o.item_id))?;
        if o.failed {
            failed += 1;
        } else {
            rows.push((*record, o.hypothesis.as_str()));
        }
    }
    score_rows(label, &rows, task != TaskKind::Mt, ignore_case, failed)
}

/// The stored hypotheses scored against the references.
pub fn baseline(test: &[TripleRecord]) -> Result<MetricReport> {
    let hyps: Vec<String> = test.iter().map(|r| tokenize_ws(&r.hypothesis).join(" ")).collect();
    let rows: Vec<(&TripleRecord, &str)> = test.iter().zip(&hyps).map(|(r, h)| (r, h.as_str())).collect();
    score_rows(BASELINE_LABEL, &rows, false, false, 0)
}

pub fn condition_label(task: TaskKind, provider_label: &str) -> String {
    format!("{} ({provider_label})", task.name())
}

/// Review aggregate rows as served by the annotation service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewAggregate {
    pub condition: String,
    pub reviews: usize,
    pub correct: usize,
    pub percent_correct: Option<f64>,
}

/// Everything `run` needs, loaded once.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub records: Vec<TripleRecord>,
    pub split: SplitData,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let records = read_records(&config.store)?;
        let split = resolve_split(&config, &records)?;
        Ok(Experiment { config, records, split })
    }

    pub fn request_log_path(&self) -> std::path::PathBuf {
        self.config.output_dir.join("requests.log.jsonl")
    }

    /// Runs `tasks` (default: all configured) and writes their output files.
    pub fn run(&self, tasks: &[TaskKind]) -> Result<Vec<(TaskKind, Vec<OutputRecord>)>> {
        fs::create_dir_all(&self.config.output_dir)?;
        let gateway = build_gateway(&self.config, &self.records, Some(&self.request_log_path()))?;
        let planner = ShotPlanner::new(&self.config, &self.split.pool)?;
        let mut all = Vec::new();
        for &task in tasks {
            let outputs = run_condition(task, &self.split.test, &planner, &self.config.template, &gateway, self.config.provider.concurrency)?;
            write_outputs(&self.config.output_path(task), &outputs)?;
            all.push((task, outputs));
        }
        Ok(all)
    }

    /// Baseline plus one row per configured task with an output file.
    pub fn score(&self) -> Result<Report> {
        let provider_label = self.config.provider_label(&self.provider_name());
        let reviews = match &self.config.reviews {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<Vec<ReviewAggregate>>(&text)?
            }
            None => Vec::new(),
        };
        let mut rows = vec![baseline(&self.split.test)?];
        for &task in &self.config.tasks {
            let path = self.config.output_path(task);
            if !path.exists() {
                continue;
            }
            let outputs = read_outputs(&path)?;
            let mut row = score_condition(&condition_label(task, &provider_label), task, &outputs, &self.split.test, self.config.diff_ignore_case)?;
            row.percent_correct = reviews.iter().find(|r| r.condition == task.slug()).and_then(|r| r.percent_correct);
            rows.push(row);
        }
        Ok(Report::new(rows))
    }

    fn provider_name(&self) -> String {
        let p = &self.config.provider;
        match p.kind {
            ProviderKind::Mock => match p.mock.unwrap_or(MockMode::EchoHypothesis) {
                MockMode::EchoHypothesis => "mock:echo-hypothesis".into(),
                MockMode::ReturnReference => "mock:return-reference".into(),
                MockMode::Recorded => "mock:recorded".into(),
            },
            _ => p.model.clone(),
        }
    }
}
