use std::collections::BTreeSet;

use overdx_core::eventlog::{AttributeTable, CaseAttributes};
use overdx_core::overdx::{
    flag_candidates, overdiagnosis_report, summarize_cluster, ClusterMembership, FlagRule,
};
use proptest::prelude::*;

/// Clusters of random cases; each case is (y_true, sofa, died).
fn cohort() -> impl Strategy<Value = Vec<Vec<(bool, u8, bool)>>> {
    prop::collection::vec(
        prop::collection::vec(
            (
                prop::bool::weighted(0.3),
                0u8..=24,
                prop::bool::weighted(0.2),
            ),
            1..60,
        ),
        1..6,
    )
}

fn build(clusters: &[Vec<(bool, u8, bool)>]) -> (ClusterMembership, AttributeTable) {
    let mut attrs = AttributeTable::new();
    let mut membership = ClusterMembership::default();
    for (k, cases) in clusters.iter().enumerate() {
        let mut ids = Vec::new();
        for (i, &(y_true, sofa_24h, died)) in cases.iter().enumerate() {
            let id = format!("k{k}-{i}");
            attrs.insert(
                id.clone(),
                CaseAttributes {
                    case_id: id.clone(),
                    y_true,
                    y_pred: y_true,
                    sofa_24h,
                    died,
                    discharge_location: if died { "DIED".into() } else { "HOME".into() },
                },
            );
            ids.push(id);
        }
        if k == clusters.len() - 1 && clusters.len() > 1 {
            membership.residual = ids;
        } else {
            membership.clusters.push((k + 1, ids));
        }
    }
    (membership, attrs)
}

proptest! {
    #[test]
    fn flagged_cases_are_exactly_the_positives_of_flagged_clusters(
        clusters in cohort(),
        min_pos in 0usize..12,
        alpha in 0.0f64..0.5,
    ) {
        let (membership, attrs) = build(&clusters);
        let rule = FlagRule { min_pos, alpha, ..FlagRule::default() };
        let report = overdiagnosis_report(&membership, &attrs, &rule, true).unwrap();
        let flagged: BTreeSet<usize> = report.flagged_cluster_ids.iter().copied().collect();
        let mut expected: Vec<String> = membership
            .clusters
            .iter()
            .filter(|(id, _)| flagged.contains(id))
            .flat_map(|(_, ids)| ids.iter().filter(|id| attrs[*id].y_true).cloned())
            .collect();
        expected.sort();
        prop_assert_eq!(&report.flagged_case_ids, &expected);
        for id in &membership.residual {
            prop_assert!(!report.flagged_case_ids.contains(id));
        }
        let positives = attrs.values().filter(|a| a.y_true).count();
        prop_assert_eq!(report.total_positive, positives);
        if positives > 0 {
            prop_assert!((report.rate - report.count as f64 / positives as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn rule_is_monotone(
        clusters in cohort(),
        alpha in 0.0f64..0.3,
        raise in 0.0f64..0.3,
        min_pos in 0usize..10,
        extra in 0usize..10,
    ) {
        let (membership, attrs) = build(&clusters);
        let summaries: Vec<_> = membership
            .clusters
            .iter()
            .map(|(id, ids)| summarize_cluster(*id, ids, &attrs, true).unwrap())
            .collect();
        let base = FlagRule { alpha, min_pos, ..FlagRule::default() };
        let flagged = flag_candidates(&summaries, &base);
        let stricter_alpha = flag_candidates(&summaries, &FlagRule { alpha: alpha + raise, ..base.clone() });
        let stricter_min = flag_candidates(&summaries, &FlagRule { min_pos: min_pos + extra, ..base.clone() });
        prop_assert!(stricter_alpha.is_subset(&flagged));
        prop_assert!(stricter_min.is_subset(&flagged));
    }
}
