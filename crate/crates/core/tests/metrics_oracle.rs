//! Metric values checked against fixtures frozen from a reference implementation.

use petm_core::metrics::{bleu_corpus, segment_stats, ter_corpus, ter_sentence, tokenize_13a_string, BleuStats, BLEU_SIGNATURE, TER_SIGNATURE};
use serde_json::Value;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn jsonl(name: &str) -> Vec<Value> {
    fixture(name).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn tok13a_matches_fixture() {
    let cases = jsonl("tok13a_cases.jsonl");
    assert!(cases.len() > 400);
    for c in cases {
        let input = c["input"].as_str().unwrap();
        assert_eq!(tokenize_13a_string(input), c["expected"].as_str().unwrap(), "input {input:?}");
    }
}

struct Corpus {
    raw: Value,
    hyps: Vec<String>,
    refs: Vec<String>,
}

fn corpus() -> Corpus {
    let raw: Value = serde_json::from_str(&fixture("mt_metrics_20.json")).unwrap();
    let pairs = raw["pairs"].as_array().unwrap();
    let hyps = pairs.iter().map(|p| p["hypothesis"].as_str().unwrap().to_string()).collect();
    let refs = pairs.iter().map(|p| p["reference"].as_str().unwrap().to_string()).collect();
    Corpus { raw, hyps, refs }
}

#[test]
fn signatures_match_reference() {
    let c = corpus();
    assert!(c.raw["bleu_signature"].as_str().unwrap().starts_with(BLEU_SIGNATURE));
    assert!(c.raw["ter_signature"].as_str().unwrap().starts_with(TER_SIGNATURE));
}

#[test]
fn bleu_corpus_matches_reference() {
    let c = corpus();
    assert_eq!(c.hyps.len(), 20);
    let mut stats = BleuStats::default();
    for (h, r) in c.hyps.iter().zip(&c.refs) {
        stats += segment_stats(h, r);
    }
    let counts: Vec<u64> = c.raw["bleu_counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let totals: Vec<u64> = c.raw["bleu_totals"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(stats.correct.to_vec(), counts);
    assert_eq!(stats.total.to_vec(), totals);
    assert_eq!(stats.hyp_len, c.raw["sys_len"].as_u64().unwrap());
    assert_eq!(stats.ref_len, c.raw["ref_len"].as_u64().unwrap());

    let score = bleu_corpus(&c.hyps, &c.refs).unwrap();
    let expected = c.raw["corpus_bleu"].as_f64().unwrap();
    assert!((score - expected).abs() <= 0.01, "{score} vs {expected}");
    assert_eq!(bleu_corpus(&c.refs, &c.refs).unwrap(), 100.0);
}

#[test]
fn bleu_single_segments_match_reference() {
    let c = corpus();
    for p in c.raw["pairs"].as_array().unwrap() {
        let h = p["hypothesis"].as_str().unwrap();
        let r = p["reference"].as_str().unwrap();
        let score = bleu_corpus(&[h], &[r]).unwrap();
        let expected = p["sentence_bleu"].as_f64().unwrap();
        assert!((score - expected).abs() <= 0.01, "{h:?}: {score} vs {expected}");
    }
}

#[test]
fn ter_matches_reference() {
    let c = corpus();
    let score = ter_corpus(&c.hyps, &c.refs).unwrap();
    let expected = c.raw["corpus_ter"].as_f64().unwrap();
    assert!((score - expected).abs() <= 0.01, "{score} vs {expected}");
    for p in c.raw["pairs"].as_array().unwrap() {
        let h = p["hypothesis"].as_str().unwrap();
        let r = p["reference"].as_str().unwrap();
        let s = ter_sentence(h, r).unwrap().score().unwrap();
        assert!((s - p["sentence_ter"].as_f64().unwrap()).abs() <= 0.01, "{h:?}");
    }
    assert_eq!(ter_corpus(&c.refs, &c.refs).unwrap(), 0.0);
}

#[test]
fn ter_random_shift_cases_match_reference() {
    for case in jsonl("ter_random.jsonl") {
        let h = case["hypothesis"].as_str().unwrap();
        let r = case["reference"].as_str().unwrap();
        let stats = ter_sentence(h, r).unwrap();
        assert_eq!(stats.edits as f64, case["edits"].as_f64().unwrap(), "{h:?} / {r:?}");
        assert_eq!(stats.ref_len as f64, case["ref_len"].as_f64().unwrap());
    }
}
