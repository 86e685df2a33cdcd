use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use petm::config::ExperimentConfig;
use petm::experiment::{score_rows, Experiment};
use petm::ingest::{default_filters, from_records, read_parallel, read_tsv, sample_pairs, to_candidates};
use petm::report::Report;
use petm::service::{serve, ServiceConfig};
use petm::store::{read_records, write_records};
use petm_core::agreement::agreement_report;
use petm_core::prompt::TaskKind;
use petm_core::record::{assign_split, split_pool, TripleRecord};

#[derive(Parser)]
#[command(name = "petm", version, about = "Post-editing translation memory workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a parallel corpus into PE-TM candidates.
    Ingest(IngestArgs),
    /// Apply the length, symbol, language and PII filters to a store.
    Filter {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign a seeded pool/test split.
    Split {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        pool_size: usize,
        #[arg(long)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to rewriting the store in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate outputs for one or more conditions.
    Run(RunArgs),
    /// Score outputs into report.json.
    Score(ScoreArgs),
    /// Inter-annotator agreement over an annotated store.
    Agree {
        #[arg(long)]
        store: PathBuf,
    },
    /// Render report.json as a table (written to report.txt).
    Report {
        #[arg(long, conflicts_with = "json")]
        config: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, requires = "target", conflicts_with = "tsv")]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "seg-")]
    id_prefix: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Repeatable; defaults to the configured tasks.
    #[arg(long, value_parser = parse_task)]
    task: Vec<TaskKind>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    fixed_shots: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, conflicts_with_all = ["hyp", "reference"])]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Plain hypothesis file, one segment per line.
    #[arg(long, requires = "reference")]
    hyp: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Store with the original hypotheses and markings for ME/UE in plain mode.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "Hypotheses")]
    label: String,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value = "annotation-data")]
    data_dir: PathBuf,
    /// Experiment config enabling live correction.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 50)]
    trial_size: usize,
    #[arg(long, default_value_t = 500)]
    block_size: usize,
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::ALL.into_iter().find(|t| t.slug() == s).ok_or_else(|| format!("unknown task {s:?}; expected mt, ape or mrk"))
}

fn load_config(path: &Path, output_dir: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    Ok(config)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => {
            let pairs = match (&a.tsv, &a.source, &a.target) {
                (Some(tsv), _, _) => read_tsv(tsv)?,
                (None, Some(s), Some(t)) => read_parallel(s, t)?,
                _ => bail!("give --tsv or both --source and --target"),
            };
            let total = pairs.len();
            let pairs = match a.sample {
                Some(n) => sample_pairs(pairs, n, a.seed),
                None => pairs,
            };
            let records = to_candidates(&pairs, &a.id_prefix);
            write_records(&a.out, &records)?;
            eprintln!("{} of {total} pairs written to {}", records.len(), a.out.display());
        }
        Command::Filter { store, out } => {
            let records = read_records(&store)?;
            let (kept, report) = default_filters(from_records(&records))?;
            let mut kept = kept.into_iter().peekable();
            let retained: Vec<TripleRecord> = records
                .into_iter()
                .filter(|r| match kept.peek() {
                    Some(p) if p.source == r.source && p.target == r.reference => {
                        kept.next();
                        true
                    }
                    _ => false,
                })
                .collect();
            write_records(&out, &retained)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Split { store, pool_size, test_size, seed, out } => {
            let mut records = read_records(&store)?;
            let (pool, test) = split_pool(&records, pool_size, test_size, seed)?;
            assign_split(&mut records, &pool, &test);
            write_records(out.as_ref().unwrap_or(&store), &records)?;
            eprintln!("pool {}, test {}", pool.len(), test.len());
        }
        Command::Run(a) => {
            let mut config = load_config(&a.config, a.output_dir)?;
            if let Some(k) = a.shots {
                config.shots = k;
            }
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            config.fixed_shots |= a.fixed_shots;
            config.provider.no_cache |= a.no_cache;
            let tasks = if a.task.is_empty() { config.tasks.clone() } else { a.task };
            let experiment = Experiment::load(config)?;
            for (task, outputs) in experiment.run(&tasks)? {
                let failed = outputs.iter().filter(|o| o.failed).count();
                let empty = outputs.iter().filter(|o| o.empty_output).count();
                eprintln!("{}: {} items, {failed} failed, {empty} empty outputs", task.name(), outputs.len());
            }
        }
        Command::Score(a) => match (a.config, a.hyp, a.reference) {
            (Some(config), _, _) => {
                let experiment = Experiment::load(load_config(&config, a.output_dir)?)?;
                let report = experiment.score()?;
                let path = experiment.config.output_dir.join("report.json");
                std::fs::write(&path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
                print!("{}", report.render_text());
            }
            (None, Some(hyp), Some(reference)) => {
                let hyps = std::fs::read_to_string(&hyp)?;
                let refs = std::fs::read_to_string(&reference)?;
                let hyps: Vec<&str> = hyps.lines().collect();
                let mut records: Vec<TripleRecord> = match &a.store {
                    Some(store) => read_records(store)?,
                    None => refs.lines().enumerate().map(|(i, r)| TripleRecord::new(i.to_string(), "", "", r)).collect(),
                };
                if records.len() != hyps.len() {
                    bail!("{} hypotheses for {} references", hyps.len(), records.len());
                }
                for (r, line) in records.iter_mut().zip(refs.lines()) {
                    r.reference = line.to_string();
                }
                let rows: Vec<(&TripleRecord, &str)> = records.iter().zip(hyps).collect();
                let with_me_ue = a.store.is_some() && records.iter().all(|r| r.markings.is_some());
                let report = Report::new(vec![score_rows(&a.label, &rows, with_me_ue, false, 0)?]);
                print!("{}", report.render_text());
            }
            _ => bail!("give --config, or --hyp and --ref"),
        },
        Command::Agree { store } => {
            let report = agreement_report(&read_records(&store)?);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { config, json } => {
            let (json_path, out) = match (config, json) {
                (Some(c), _) => {
                    let dir = ExperimentConfig::load(&c)?.output_dir;
                    (dir.join("report.json"), dir.join("report.txt"))
                }
                (None, Some(j)) => {
                    let out = j.with_file_name("report.txt");
                    (j, out)
                }
                _ => bail!("give --config or --json"),
            };
            let text = std::fs::read_to_string(&json_path).with_context(|| format!("reading {}", json_path.display()))?;
            let rendered = Report::from_json(&text)?.render_text();
            std::fs::write(&out, &rendered)?;
            print!("{rendered}");
        }
        Command::Serve(a) => {
            let mut config = ServiceConfig::new(a.items, a.data_dir);
            config.trial_size = a.trial_size;
            config.block_size = a.block_size;
            config.static_dir = a.static_dir;
            config.experiment = a.config.as_deref().map(ExperimentConfig::load).transpose()?;
            tokio::runtime::Runtime::new()?.block_on(serve(&config, a.addr))?;
        }
    }
    Ok(())
}
