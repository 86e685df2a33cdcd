use proptest::prelude::*;

use petm_core::agreement::{alpha, pairwise_alpha, ReliabilityMatrix, Scale};
use petm_core::filter::{nonalnum_ratio, run_pipeline, FilterRule, LengthBounds, NonAlnumRatio, SegmentPair, WrongLanguage, StopwordLanguageId};
use petm_core::metrics::{bleu_corpus, me_ue, ter_sentence, word_diff, EditOp};
use petm_core::prompt::{insert_marks, strip_marks};
use petm_core::record::{split_pool, MarkingVector, TripleRecord};

fn token() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9äöüß.,;:!?%&()-]{1,8}"
}

fn tokens_and_marks(max: usize) -> impl Strategy<Value = (Vec<String>, Vec<u8>)> {
    prop::collection::vec((token(), 0u8..2), 1..max).prop_map(|v| v.into_iter().unzip())
}

fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn words(seq: &[u8]) -> Vec<String> {
    seq.iter().map(|c| ((b'a' + c) as char).to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strip_inverts_insert((tokens, bits) in tokens_and_marks(20)) {
        let marks = MarkingVector::from_bits(&bits).unwrap();
        let marked = insert_marks(&tokens, &marks).unwrap();
        prop_assert_eq!(marked.as_str().matches("<bad>").count(), marks.bad_runs());
        prop_assert_eq!(strip_marks(marked.as_str()), tokens.join(" "));
    }

    #[test]
    fn word_diff_is_minimal_and_applies(
        a in prop::collection::vec(0u8..5, 0..=12),
        b in prop::collection::vec(0u8..5, 0..=12),
    ) {
        let (wa, wb) = (words(&a), words(&b));
        let script = word_diff(&wa, &wb);
        prop_assert_eq!(script.cost(), levenshtein(&a, &b));
        prop_assert_eq!(script.apply(&wa).unwrap(), wb);
    }
}

proptest! {
    #[test]
    fn me_ue_properties(
        (tokens, bits) in tokens_and_marks(15),
        revised in prop::collection::vec(token(), 0..15),
    ) {
        let marks = MarkingVector::from_bits(&bits).unwrap();
        let same = me_ue(&tokens, &marks, &tokens).unwrap();
        prop_assert_eq!((same.me_num, same.ue_num), (0, 0));
        let c = me_ue(&tokens, &marks, &revised).unwrap();
        for v in [c.me(), c.ue()].into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert_eq!(c.me_den as usize, marks.bad_count());
        let ok = me_ue(&tokens, &MarkingVector::all_ok(tokens.len()), &revised).unwrap();
        prop_assert_eq!(ok.me(), None);
    }

    #[test]
    fn single_bad_substitution((tokens, _) in tokens_and_marks(12), pick in any::<prop::sample::Index>()) {
        let i = pick.index(tokens.len());
        let marks = MarkingVector::with_bad(tokens.len(), &[i]);
        let mut revised = tokens.clone();
        revised[i] = "<<replaced>>".into();
        let c = me_ue(&tokens, &marks, &revised).unwrap();
        prop_assert_eq!(c.me(), Some(100.0));
        prop_assert_eq!(c.ue().unwrap_or(0.0), 0.0);
    }

    #[test]
    fn filter_retains_only_valid_pairs(pairs in prop::collection::vec(("[a-z!?#@ ]{0,160}", "[a-zäöü!?#@ ]{0,160}"), 0..40)) {
        let input: Vec<SegmentPair> = pairs.into_iter().map(|(s, t)| SegmentPair::new(s, t)).collect();
        let n = input.len();
        let rules: [&dyn FilterRule; 3] = [&LengthBounds::default(), &NonAlnumRatio::default(), &WrongLanguage::new(StopwordLanguageId)];
        let (kept, report) = run_pipeline(input, &rules).unwrap();
        prop_assert_eq!(report.input, n);
        prop_assert_eq!(report.retained, kept.len());
        prop_assert_eq!(report.retained + report.dropped_total(), report.input);
        for p in &kept {
            for side in [&p.source, &p.target] {
                let w = side.split_whitespace().count();
                prop_assert!((5..=25).contains(&w));
                prop_assert!(nonalnum_ratio(side).unwrap() <= 0.20);
            }
        }
    }

    #[test]
    fn bleu_ignores_segment_order(pairs in prop::collection::vec(("[a-c ]{1,30}", "[a-c ]{1,30}"), 1..10), seed in any::<u64>()) {
        let (h, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let mut idx: Vec<usize> = (0..h.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let h2: Vec<&String> = idx.iter().map(|&i| &h[i]).collect();
        let r2: Vec<&String> = idx.iter().map(|&i| &r[i]).collect();
        let a = bleu_corpus(&h, &r).unwrap();
        prop_assert_eq!(a, bleu_corpus(&h2, &r2).unwrap());
        prop_assert!((0.0..=100.0).contains(&a));
    }

    #[test]
    fn ter_zero_iff_equal(a in "[a-d]( [a-d]){0,10}", b in "[a-d]( [a-d]){0,10}") {
        let t = ter_sentence(&a, &b).unwrap();
        prop_assert_eq!(t.edits == 0, a == b);
        prop_assert_eq!(ter_sentence(&b, &b).unwrap().edits, 0);
    }

    #[test]
    fn alpha_bounded_and_order_invariant(
        units in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, 0u8..3), 3), 2..20),
        rot in 0usize..20,
    ) {
        let coders = vec!["a".to_string(), "b".into(), "c".into()];
        let cells = |u: &Vec<Option<u8>>| u.iter().map(|c| c.map(f64::from)).collect::<Vec<_>>();
        let m = ReliabilityMatrix::new(coders.clone(), units.iter().map(cells).collect()).unwrap();
        let mut rotated_units = m.units.clone();
        let r = rot % rotated_units.len();
        rotated_units.rotate_left(r);
        rotated_units.reverse();
        let rotated = ReliabilityMatrix::new(coders.clone(), rotated_units).unwrap();
        for scale in [Scale::Nominal, Scale::Interval] {
            match alpha(&m, scale) {
                Ok(a) => {
                    prop_assert!(a <= 1.0 + 1e-12);
                    prop_assert!((alpha(&rotated, scale).unwrap() - a).abs() < 1e-9);
                }
                Err(_) => prop_assert!(alpha(&rotated, scale).is_err()),
            }
            let p = pairwise_alpha(&m, scale);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(p.values[i][j], p.values[j][i]);
                }
            }
        }
        let swapped: Vec<Vec<Option<f64>>> = m.units.iter().map(|u| u.iter().map(|c| c.map(|v| (v + 1.0) % 3.0)).collect()).collect();
        let swapped = ReliabilityMatrix::new(coders, swapped).unwrap();
        if let Ok(a) = alpha(&m, Scale::Nominal) {
            prop_assert!((alpha(&swapped, Scale::Nominal).unwrap() - a).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicated_coder_agrees_with_itself(values in prop::collection::vec(0u8..4, 2..30)) {
        let units: Vec<Vec<Option<f64>>> = values.iter().map(|&v| vec![Some(f64::from(v)); 2]).collect();
        let m = ReliabilityMatrix::new(vec!["x".into(), "x2".into()], units).unwrap();
        prop_assert_eq!(alpha(&m, Scale::Nominal).unwrap(), 1.0);
        prop_assert_eq!(alpha(&m, Scale::Interval).unwrap(), 1.0);
    }

    #[test]
    fn split_partitions_usable_records(n in 0usize..60, pool in 0usize..40, test in 0usize..40, seed in any::<u64>()) {
        let records: Vec<TripleRecord> = (0..n)
            .map(|i| TripleRecord::new(format!("r{i}"), "s", "h", "r").with_markings(MarkingVector::with_bad(1, &[0])))
            .collect();
        match split_pool(&records, pool, test, seed) {
            Ok((p, t)) => {
                prop_assert_eq!((p.len(), t.len()), (pool, test));
                prop_assert!(p.iter().all(|id| !t.contains(id)));
                prop_assert_eq!(split_pool(&records, pool, test, seed).unwrap(), (p, t));
            }
            Err(_) => prop_assert!(pool + test > n),
        }
    }
}

#[test]
fn diff_script_marks_substitution() {
    let s = word_diff(&["a", "b"], &["a", "c"]);
    assert!(matches!(s.ops[1], EditOp::Substitute { .. }));
}
