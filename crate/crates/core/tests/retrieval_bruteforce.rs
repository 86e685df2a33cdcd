use std::collections::BTreeMap;

use petm_core::retrieval::{CharNgramProvider, EmbeddingProvider, RetrievalIndex, Values};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "the", "file", "could", "not", "be", "opened", "select", "folder", "backup", "password", "server", "connection",
    "failed", "window", "settings", "saved", "print", "document", "environment", "variables", "session", "console",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(3..10);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn sparse_map(v: &Values) -> BTreeMap<u32, f64> {
    match v {
        Values::Sparse(e) => e.iter().copied().collect(),
        Values::Dense(d) => d.iter().enumerate().map(|(i, &x)| (i as u32, x)).collect(),
    }
}

fn cosine(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[test]
fn top5_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pool: Vec<(String, String)> = (0..50).map(|i| (format!("p{i:02}"), sentence(&mut rng))).collect();
    let sources: Vec<&str> = pool.iter().map(|(_, s)| s.as_str()).collect();
    let provider = CharNgramProvider::fit(&sources);
    let pairs: Vec<(&str, &str)> = pool.iter().map(|(i, s)| (i.as_str(), s.as_str())).collect();
    let index = RetrievalIndex::build(&provider, &pairs).unwrap();
    let raw: Vec<BTreeMap<u32, f64>> = provider.embed_raw(&sources).unwrap().iter().map(|v| sparse_map(&v.values)).collect();

    for q in 0..200 {
        let (text, exclude) = if q % 4 == 0 {
            let (id, s) = &pool[q % 50];
            (s.clone(), Some(id.as_str()))
        } else {
            (sentence(&mut rng), None)
        };
        let qv = sparse_map(&provider.embed_raw(&[&text]).unwrap()[0].values);
        let mut brute: Vec<(f64, &str)> = pool
            .iter()
            .zip(&raw)
            .filter(|((id, _), _)| Some(id.as_str()) != exclude)
            .map(|((id, _), v)| (cosine(&qv, v), id.as_str()))
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let got = index.query(&provider, &text, exclude, 5).unwrap();
        let got_ids: Vec<&str> = got.iter().map(|r| r.id.as_str()).collect();
        let want_ids: Vec<&str> = brute[..5].iter().map(|(_, id)| *id).collect();
        if got_ids != want_ids {
            // Only acceptable difference: floating-point near-ties.
            for (g, (w, _)) in got.iter().zip(&brute) {
                assert!((g.score - w).abs() < 1e-9, "query {q}: {got_ids:?} vs {want_ids:?}");
            }
        }
        for (g, (w, _)) in got.iter().zip(&brute) {
            assert!((g.score - w).abs() < 1e-9);
        }
    }
}

#[test]
fn self_match_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pool: Vec<(String, String)> = (0..50).map(|i| (format!("p{i}"), sentence(&mut rng))).collect();
    let pairs: Vec<(&str, &str)> = pool.iter().map(|(i, s)| (i.as_str(), s.as_str())).collect();
    let provider = CharNgramProvider::fit(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let index = RetrievalIndex::build(&provider, &pairs).unwrap();
    for (_, s) in &pairs {
        let top = index.query(&provider, s, None, 1).unwrap();
        assert!((top[0].score - 1.0).abs() < 1e-6);
    }
}
