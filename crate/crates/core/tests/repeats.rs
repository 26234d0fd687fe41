mod common;

use std::collections::BTreeMap;

use overdx_core::eventlog::TraceVariant;
use overdx_core::repeats::{euclidean, feature_space, log_repeats, maximal_repeats, FeatureVector};
use proptest::prelude::*;

fn as_map<T: Ord + Clone>(
    found: &[overdx_core::repeats::MaximalRepeat<T>],
) -> BTreeMap<Vec<T>, usize> {
    found
        .iter()
        .map(|r| (r.pattern.clone(), r.occurrences))
        .collect()
}

fn variant(seq: &[u8], freq: usize, tag: usize) -> TraceVariant {
    TraceVariant::new(
        seq.iter()
            .map(|c| ((b'a' + c) as char).to_string())
            .collect(),
        (0..freq).map(|i| format!("v{tag}-{i}")).collect(),
    )
}

proptest! {
    #[test]
    fn matches_brute_force(seq in prop::collection::vec(0u8..5, 0..=12)) {
        let found = maximal_repeats(&seq);
        prop_assert_eq!(as_map(&found), common::brute_force_maximal_repeats(&seq));
    }

    #[test]
    fn repeats_cannot_be_extended_uniformly(seq in prop::collection::vec(0u8..3, 2..=16)) {
        for r in maximal_repeats(&seq) {
            prop_assert!(r.occurrences >= 2);
            let len = r.pattern.len();
            let starts: Vec<usize> = (0..=seq.len() - len)
                .filter(|&s| seq[s..s + len] == r.pattern[..])
                .collect();
            prop_assert_eq!(starts.len(), r.occurrences);
            let lefts: Vec<Option<u8>> = starts.iter().map(|&s| s.checked_sub(1).map(|p| seq[p])).collect();
            let rights: Vec<Option<u8>> = starts.iter().map(|&s| seq.get(s + len).copied()).collect();
            let uniform = |c: &[Option<u8>]| c[0].is_some() && c.iter().all(|x| *x == c[0]);
            prop_assert!(!uniform(&lefts));
            prop_assert!(!uniform(&rights));
        }
    }

    #[test]
    fn log_repeats_match_brute_force_on_delimited_log(
        traces in prop::collection::vec((prop::collection::vec(0u8..4, 1..6), 1usize..3), 1..5)
    ) {
        let variants: Vec<TraceVariant> = traces
            .iter()
            .enumerate()
            .map(|(i, (s, f))| variant(s, *f, i))
            .collect();
        // delimiters are encoded as distinct negative numbers
        let mut seq: Vec<i32> = Vec::new();
        let mut delim = -1;
        for (s, f) in &traces {
            for _ in 0..*f {
                if !seq.is_empty() {
                    seq.push(delim);
                    delim -= 1;
                }
                seq.extend(s.iter().map(|&c| c as i32));
            }
        }
        let expected: BTreeMap<Vec<String>, usize> = common::brute_force_maximal_repeats(&seq)
            .into_iter()
            .map(|(p, c)| (p.iter().map(|&x| ((b'a' + x as u8) as char).to_string()).collect(), c))
            .collect();
        prop_assert_eq!(as_map(&log_repeats(&variants)), expected);
    }

    #[test]
    fn vectors_are_permutation_stable(
        traces in prop::collection::vec(prop::collection::vec(0u8..4, 1..6), 2..6),
        rotate in 0usize..6,
    ) {
        let variants: Vec<TraceVariant> = traces.iter().enumerate().map(|(i, s)| variant(s, 1 + i % 2, i)).collect();
        let mut shuffled = variants.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let (b1, v1) = feature_space(&variants, false);
        let (b2, v2) = feature_space(&shuffled, false);
        prop_assert_eq!(b1, b2);
        let mut v1_rot = v1.clone();
        v1_rot.rotate_left(k);
        prop_assert_eq!(v1_rot, v2);
    }

    #[test]
    fn euclidean_is_a_metric(
        a in prop::collection::vec(0.0f64..10.0, 4),
        b in prop::collection::vec(0.0f64..10.0, 4),
        c in prop::collection::vec(0.0f64..10.0, 4),
    ) {
        let (a, b, c) = (FeatureVector(a), FeatureVector(b), FeatureVector(c));
        let ab = euclidean(&a, &b).unwrap();
        prop_assert_eq!(ab, euclidean(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= euclidean(&a, &c).unwrap() + euclidean(&c, &b).unwrap() + 1e-9);
    }
}

#[test]
fn long_repetitive_log_is_handled() {
    let variants: Vec<TraceVariant> = (0..40)
        .map(|i| variant(&[0, 1, 2, (i % 4) as u8, 3], 25, i))
        .collect();
    let repeats = log_repeats(&variants);
    assert!(repeats
        .iter()
        .any(|r| r.pattern == ["a", "b", "c"] && r.occurrences == 1000));
}
