use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use petm::config::ExperimentConfig;
use petm::experiment::{item_prompt, write_outputs, OutputRecord, ShotPlanner};
use petm::service::{load_state, router, spawn_local, ServiceConfig};
use petm::store::{read_records, write_records};
use petm_core::agreement::agreement_report;
use petm_core::llm::prompt_digest;
use petm_core::prompt::TaskKind;
use petm_core::record::{annotation_record_id, MarkingVector, Split, TripleRecord};
use serde_json::{json, Value};

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(addr: SocketAddr) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(20)))
            .build()
            .into();
        Client { base: format!("http://{addr}"), agent }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
    }

    fn text(&self, path: &str) -> (u16, String) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut resp = self.agent.post(&format!("{}{path}", self.base)).send_json(&body).unwrap();
        (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
    }

    fn session(&self, annotator: &str, phase: &str) -> Value {
        let (status, body) = self.post("/api/sessions", json!({"annotator_id": annotator, "phase": phase}));
        assert_eq!(status, 200, "{body}");
        body
    }
}

fn items(n: usize) -> Vec<TripleRecord> {
    (0..n)
        .map(|i| TripleRecord::new(format!("it{i:03}"), format!("Source sentence number {i}"), "Der Satz ist gut .", "Der Satz ist gut."))
        .collect()
}

fn start(config: &ServiceConfig) -> Client {
    let app = router(load_state(config).unwrap(), config.static_dir.as_deref());
    Client::new(spawn_local(app).unwrap())
}

fn service(dir: &Path, records: &[TripleRecord], trial: usize, block: usize) -> ServiceConfig {
    let path = dir.join("items.jsonl");
    write_records(&path, records).unwrap();
    let mut config = ServiceConfig::new(path, dir.join("data"));
    config.trial_size = trial;
    config.block_size = block;
    config
}

#[test]
fn sessions_share_trial_and_split_main() {
    let dir = tempfile::tempdir().unwrap();
    let client = start(&service(dir.path(), &items(9), 3, 2));
    let trial: Vec<Value> = ["a", "b", "c"].iter().map(|a| client.session(a, "trial")["items"].clone()).collect();
    assert!(trial.iter().all(|t| *t == trial[0]));
    assert_eq!(trial[0].as_array().unwrap().len(), 3);

    let a = client.session("a", "main");
    let b = client.session("b", "main");
    let (ia, ib) = (a["items"].as_array().unwrap(), b["items"].as_array().unwrap());
    assert!(ia.iter().all(|i| !ib.contains(i) && !trial[0].as_array().unwrap().contains(i)));
    assert_eq!(client.session("a", "main")["session_id"], a["session_id"]);
    client.session("c", "main");
    let (status, err) = client.post("/api/sessions", json!({"annotator_id": "d", "phase": "main"}));
    assert_eq!((status, err["code"].as_str()), (409, Some("no_blocks_available")));

    let (status, err) = client.get("/api/sessions/nobody-trial/next");
    assert_eq!((status, err["code"].as_str()), (404, Some("session_not_found")));
}

#[test]
fn marking_skipping_and_single_answer() {
    let dir = tempfile::tempdir().unwrap();
    let config = service(dir.path(), &items(3), 3, 10);
    let client = start(&config);
    let sid = client.session("ann", "trial")["session_id"].as_str().unwrap().to_string();

    let (_, next) = client.get(&format!("/api/sessions/{sid}/next"));
    assert_eq!(next["item"]["item_id"], "it000");
    assert_eq!(next["item"]["tokens"], json!(["Der", "Satz", "ist", "gut", "."]));

    let (status, err) = client.post("/api/items/it000/marks", json!({"session_id": sid, "marks": [0, 1]}));
    assert_eq!((status, err["code"].as_str()), (422, Some("length_mismatch")));
    assert_eq!(client.get(&format!("/api/sessions/{sid}/next")).1["item"]["item_id"], "it000");

    let (status, stored) = client.post("/api/items/it000/marks", json!({"session_id": sid, "marks": [0, 0, 0, 0, 0]}));
    assert_eq!(status, 200);
    assert_eq!(stored, json!({"stored": true}));

    let (status, err) = client.post("/api/items/it000/skip", json!({"session_id": sid, "reason": "other"}));
    assert_eq!((status, err["code"].as_str()), (409, Some("already_answered")));
    let (status, err) = client.post("/api/items/it001/skip", json!({"session_id": sid, "reason": "bored"}));
    assert_eq!((status, err["code"].as_str()), (422, Some("invalid_request")));
    let (status, err) = client.post("/api/items/zzz/skip", json!({"session_id": sid, "reason": "other"}));
    assert_eq!((status, err["code"].as_str()), (422, Some("item_not_in_session")));

    let (status, _) = client.post("/api/items/it001/skip", json!({"session_id": sid, "reason": "missing_knowledge"}));
    assert_eq!(status, 200);
    let (_, next) = client.get(&format!("/api/sessions/{sid}/next"));
    assert_eq!((next["item"]["item_id"].as_str(), next["completed"].as_u64(), next["skipped"].as_u64()), (Some("it002"), Some(1), Some(1)));
    client.post("/api/items/it002/marks", json!({"session_id": sid, "marks": [1, 0, 0, 0, 0]}));
    assert_eq!(client.get(&format!("/api/sessions/{sid}/next")).1["done"], true);

    let (_, export) = client.text("/api/export?phase=trial");
    let path = dir.path().join("export.jsonl");
    fs::write(&path, export).unwrap();
    let records = read_records(&path).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[1].skip.map(|s| s.label()), Some("Missing Knowledge"));
    assert_eq!(records[1].id, "it001@ann");

    // a restarted service continues from the event log
    let again = start(&config);
    assert_eq!(again.get(&format!("/api/sessions/{sid}/next")).1["done"], true);
}

#[test]
fn agreement_endpoint_matches_offline_computation() {
    let dir = tempfile::tempdir().unwrap();
    let client = start(&service(dir.path(), &items(6), 4, 1));
    let marks = [
        ("a", [[0, 1, 0, 0, 0], [0, 0, 0, 0, 0], [1, 1, 0, 0, 0], [0, 0, 0, 1, 0]]),
        ("b", [[0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [1, 0, 0, 0, 0], [0, 0, 0, 1, 0]]),
        ("c", [[0, 1, 1, 0, 0], [0, 0, 0, 0, 0], [1, 1, 0, 0, 0], [0, 0, 0, 0, 0]]),
    ];
    for (annotator, rows) in marks {
        let sid = client.session(annotator, "trial")["session_id"].as_str().unwrap().to_string();
        for (i, m) in rows.iter().enumerate() {
            let (status, _) = client.post(&format!("/api/items/it{i:03}/marks"), json!({"session_id": sid, "marks": m}));
            assert_eq!(status, 200);
        }
    }
    let sid = client.session("a", "main")["session_id"].as_str().unwrap().to_string();
    client.post("/api/items/it004/marks", json!({"session_id": sid, "marks": [1, 1, 1, 1, 1]}));

    let (_, online) = client.get("/api/agreement?phase=trial");
    let path = dir.path().join("trial.jsonl");
    fs::write(&path, client.text("/api/export?phase=trial").1).unwrap();
    let offline = serde_json::to_value(agreement_report(&read_records(&path).unwrap())).unwrap();
    assert_eq!(online, offline);
    assert_eq!(online["common_items"], 4);

    let (_, main) = client.text("/api/export?phase=main");
    assert_eq!(main.lines().count(), 1);
    let (_, only_b) = client.text("/api/export?annotator=b");
    assert!(only_b.lines().all(|l| l.contains("\"annotator_id\":\"b\"")) && only_b.lines().count() == 4);
}

fn figure_demo() -> TripleRecord {
    let mut r = TripleRecord::new(
        "demo-env",
        "This environment variable can also be used to make sure that other operations are working on uploaded files, as well.",
        "Dieses Umweltvariable kann auch verwendet werden , um sicherzustellen , dass andere Operationen auf hochgeladene Dateien arbeiten .",
        "Mittels dieser Umgebungsvariable kann auch sichergestellt werden, dass auch andere Operationen an hochgeladenen Dateien arbeiten können.",
    )
    .with_markings(MarkingVector::with_bad(18, &[1, 11, 12, 15]));
    r.split = Split::Pool;
    r
}

fn kde_item() -> TripleRecord {
    TripleRecord::new(
        "kde-1",
        "Some important environment variables used by KDE",
        "Einige wichtige Umweltvariablen , die von KDE verwendet werden",
        "Einige wichtige Umgebungsvariablen, die von KDE verwendet werden",
    )
}

/// Service with live correction from a recorded table built by `record`.
fn live_service(dir: &Path, record: impl Fn(&ExperimentConfig, &[TripleRecord]) -> BTreeMap<String, String>) -> ServiceConfig {
    let pool_path = dir.join("pool.jsonl");
    write_records(&pool_path, &[figure_demo()]).unwrap();
    let config = service(dir, &[kde_item()], 1, 10);
    let recorded_path = dir.join("recorded.json");
    fs::write(&recorded_path, "{}").unwrap();
    let mut exp = ExperimentConfig::from_toml(
        &format!(
            "store = {pool_path:?}\noutput_dir = {:?}\nshots = 1\n\n[provider]\nkind = \"mock\"\nmock = \"recorded\"\nrecorded = {recorded_path:?}\nretries = 0\n",
            dir.join("out")
        ),
        dir,
    )
    .unwrap();
    let table = record(&exp, &[figure_demo()]);
    fs::write(&recorded_path, serde_json::to_string(&table).unwrap()).unwrap();
    exp.provider.no_cache = true;
    ServiceConfig { experiment: Some(exp), ..config }
}

#[test]
fn live_correction_uses_the_marks() {
    let dir = tempfile::tempdir().unwrap();
    let config = live_service(dir.path(), |exp, pool| {
        let planner = ShotPlanner::new(exp, pool).unwrap();
        let mut marked = kde_item().with_markings(MarkingVector::with_bad(9, &[2]));
        marked.id = annotation_record_id("kde-1", "ann");
        marked.annotator_id = Some("ann".into());
        let (prompt, shots) = item_prompt(TaskKind::Mrk, &marked, &planner, &exp.template).unwrap();
        assert_eq!(shots, ["demo-env"]);
        assert!(prompt.contains("<bad> Umweltvariablen </bad>"));
        BTreeMap::from([(prompt_digest(&prompt), "Einige wichtige Umgebungsvariablen, die von KDE verwendet werden".to_string())])
    });
    let client = start(&config);
    let sid = client.session("ann", "trial")["session_id"].as_str().unwrap().to_string();
    let (status, body) = client.post("/api/items/kde-1/marks", json!({"session_id": sid, "marks": [0, 0, 1, 0, 0, 0, 0, 0, 0]}));
    assert_eq!(status, 200, "{body}");
    let correction = body["correction"].as_str().unwrap();
    assert!(correction.contains("Umgebungsvariablen") && !correction.contains("<bad>"));

    let (_, target) = client.get("/api/review/next?reviewer_id=r1");
    assert_eq!(target["target_id"], "kde-1@ann");
    assert_eq!(target["correction"], correction);
    let (status, _) = client.post("/api/items/kde-1@ann/review", json!({"reviewer_id": "r1", "correct": true}));
    assert_eq!(status, 200);
    let (_, reviews) = client.get("/api/reviews");
    assert_eq!(reviews, json!([{"condition": "live", "reviews": 1, "correct": 1, "percent_correct": 100.0}]));
    assert_eq!(client.get("/api/review/next?reviewer_id=r1").1, Value::Null);
}

#[test]
fn failed_correction_degrades_gracefully() {
    let dir = tempfile::tempdir().unwrap();
    let client = start(&live_service(dir.path(), |_, _| BTreeMap::new()));
    let sid = client.session("ann", "trial")["session_id"].as_str().unwrap().to_string();
    let (status, body) = client.post("/api/items/kde-1/marks", json!({"session_id": sid, "marks": [0, 0, 1, 0, 0, 0, 0, 0, 0]}));
    assert_eq!(status, 200);
    assert_eq!(body["stored"], true);
    assert!(body.get("correction").is_none());
    assert!(body["warning"].as_str().unwrap().contains("no recorded response"));
    assert_eq!(client.get(&format!("/api/sessions/{sid}/next")).1["done"], true);
    let (status, err) = client.post("/api/items/kde-1@ann/review", json!({"reviewer_id": "r", "correct": true}));
    assert_eq!((status, err["code"].as_str()), (404, Some("nothing_to_review")));
}

#[test]
fn review_percentages_per_condition() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<TripleRecord> = items(100).into_iter().map(|r| r.with_markings(MarkingVector::with_bad(5, &[1]))).collect();
    let mut config = service(dir.path(), &records, 100, 100);
    let exp = ExperimentConfig::from_toml(
        &format!("store = {:?}\noutput_dir = {:?}\ntasks = [\"mrk\"]\n", config.items, dir.path().join("out")),
        dir.path(),
    )
    .unwrap();
    let outputs: Vec<OutputRecord> = records
        .iter()
        .map(|r| OutputRecord {
            item_id: r.id.clone(),
            task: TaskKind::Mrk,
            prompt_digest: String::new(),
            shots: Vec::new(),
            raw: None,
            hypothesis: r.reference.clone(),
            empty_output: false,
            failed: false,
            error: None,
        })
        .collect();
    write_outputs(&exp.output_path(TaskKind::Mrk), &outputs).unwrap();
    config.experiment = Some(exp);
    let client = start(&config);

    let (_, before) = client.get("/api/reviews");
    assert_eq!(before, json!([{"condition": "mrk", "reviews": 0, "correct": 0, "percent_correct": null}]));
    for (i, r) in records.iter().enumerate() {
        let body = json!({"reviewer_id": "judge", "correct": i < 67, "condition": "mrk"});
        assert_eq!(client.post(&format!("/api/items/{}/review", r.id), body).0, 200);
    }
    assert_eq!(client.get("/api/reviews").1[0]["percent_correct"], 67.0);
    client.post("/api/items/it099/review", json!({"reviewer_id": "judge", "correct": true, "condition": "mrk"}));
    assert_eq!(client.get("/api/reviews").1[0]["percent_correct"], 68.0);
}

#[test]
fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let web = dir.path().join("web");
    fs::create_dir_all(&web).unwrap();
    fs::write(web.join("index.html"), "<!doctype html><title>petm</title>").unwrap();
    let mut config = service(dir.path(), &items(1), 1, 1);
    config.static_dir = Some(web);
    let client = start(&config);
    let (status, body) = client.text("/index.html");
    assert_eq!((status, body.as_str()), (200, "<!doctype html><title>petm</title>"));
    let (status, err) = client.get("/api/nope");
    assert_eq!((status, err["code"].as_str()), (404, Some("not_found")));
}
