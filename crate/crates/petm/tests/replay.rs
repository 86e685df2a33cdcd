mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{petm, replay, synthetic_dir, write_config};
use petm::config::ExperimentConfig;
use petm::experiment::{item_prompt, read_outputs, Experiment, ShotPlanner};
use petm::report::{Report, BASELINE_LABEL};
use petm_core::llm::prompt_digest;
use petm_core::prompt::TaskKind;

#[test]
fn recorded_replay_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "recorded");
    let text = replay(&config);
    let golden = fs::read_to_string(synthetic_dir().join("golden/report.txt")).unwrap();
    assert_eq!(text, golden);

    let report = Report::from_json(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report.rows[0].label, BASELINE_LABEL);
    assert_eq!(report.row("MT (Replay)").unwrap().failed, 1);
}

#[test]
fn warm_cache_rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "recorded");
    let first = replay(&config);
    let outputs: Vec<Vec<u8>> = TaskKind::ALL.iter().map(|t| fs::read(dir.path().join(format!("out/outputs/{}.jsonl", t.slug()))).unwrap()).collect();
    let second = replay(&config);
    assert_eq!(first, second);
    for (t, before) in TaskKind::ALL.iter().zip(outputs) {
        assert_eq!(fs::read(dir.path().join(format!("out/outputs/{}.jsonl", t.slug()))).unwrap(), before);
    }
    let log = fs::read_to_string(dir.path().join("out/requests.log.jsonl")).unwrap();
    assert!(log.lines().any(|l| l.contains("\"status\":\"cached\"")));
}

#[test]
fn echo_mock_reproduces_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "echo-hypothesis");
    replay(&config);
    let report = Report::from_json(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let base = &report.rows[0];
    for row in &report.rows[1..] {
        assert_eq!((row.bleu, row.ter), (base.bleu, base.ter), "{}", row.label);
    }
    let (ape, mrk) = (report.row("APE (Replay)").unwrap(), report.row("MRK (Replay)").unwrap());
    assert_eq!((ape.me, ape.ue), (Some(0.0), Some(0.0)));
    assert_eq!((mrk.bleu, mrk.ter, mrk.me, mrk.ue), (ape.bleu, ape.ter, ape.me, ape.ue));
}

#[test]
fn reference_mock_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "return-reference");
    replay(&config);
    let report = Report::from_json(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    for row in &report.rows[1..] {
        assert_eq!((row.bleu, row.ter), (100.0, 0.0), "{}", row.label);
    }
}

#[test]
fn outputs_follow_test_order_and_strip_tags() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "recorded");
    petm(&["run", "--config", config.to_str().unwrap(), "--task", "ape"]);
    let experiment = Experiment::load(ExperimentConfig::load(&config).unwrap()).unwrap();
    let outputs = read_outputs(&experiment.config.output_path(TaskKind::Ape)).unwrap();
    let ids: Vec<&str> = outputs.iter().map(|o| o.item_id.as_str()).collect();
    let test: Vec<&str> = experiment.split.test.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, test);
    assert!(outputs.iter().all(|o| !o.hypothesis.contains("<bad>") && o.shots.len() == 5));
    assert!(!dir.path().join("out/outputs/mrk.jsonl").exists());
}

/// Rebuilds recorded.json from canned.jsonl and the golden report from a
/// fresh replay. Run with `cargo test -p petm --test replay -- --ignored`.
#[test]
#[ignore = "rewrites the committed replay fixtures"]
fn regenerate_replay_fixtures() {
    let data = synthetic_dir();
    let config = ExperimentConfig::load(&data.join("experiment.toml")).unwrap();
    let experiment = Experiment::load(config).unwrap();
    let canned: BTreeMap<String, BTreeMap<String, String>> = fs::read_to_string(data.join("canned.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: BTreeMap<String, String> = serde_json::from_str(l).unwrap();
            (v.remove("id").unwrap(), v)
        })
        .collect();
    let planner = ShotPlanner::new(&experiment.config, &experiment.split.pool).unwrap();
    let mut recorded = BTreeMap::new();
    for &task in &experiment.config.tasks {
        for item in &experiment.split.test {
            let (prompt, _) = item_prompt(task, item, &planner, &experiment.config.template).unwrap();
            if let Some(response) = canned[&item.id].get(task.slug()) {
                recorded.insert(prompt_digest(&prompt), response.clone());
            }
        }
    }
    fs::write(data.join("recorded.json"), serde_json::to_string_pretty(&recorded).unwrap() + "\n").unwrap();

    let dir = tempfile::tempdir().unwrap();
    let text = replay(&write_config(dir.path(), "recorded"));
    fs::create_dir_all(data.join("golden")).unwrap();
    fs::write(data.join("golden/report.txt"), text).unwrap();
    fs::copy(dir.path().join("out/report.json"), data.join("golden/report.json")).unwrap();
}
