use overdx_core::eventlog::{filter_cohort, CaseAttributes, CohortPolicy};
use overdx_core::synth::{generate, PlantedOutcome, SynthConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planted_count_and_attribute_invariants(
        seed in any::<u64>(),
        traces in 20usize..80,
        planted_share in 0.0f64..0.45,
        noise in 0.0f64..0.5,
    ) {
        let mut config = SynthConfig { seed, traces_per_family: traces, noise_rate: noise, ..SynthConfig::default() };
        let positives = (planted_share * traces as f64) as usize;
        config.families[config.planted.family].positive_cases = positives;
        config.planted.n_tp_cases = positives / 2;
        for f in &mut config.families {
            f.positive_cases = f.positive_cases.min(traces);
        }
        let cohort = generate(&config).unwrap();
        prop_assert_eq!(cohort.truth.overdiagnosed_case_ids.len(), config.planted.n_tp_cases);
        prop_assert_eq!(cohort.log.len(), traces * config.n_families());
        for id in &cohort.truth.overdiagnosed_case_ids {
            prop_assert!(cohort.attrs[id].y_true);
            prop_assert_eq!(cohort.truth.case_family[id], config.planted.family);
        }
        for a in cohort.attrs.values() {
            prop_assert!(a.sofa_24h <= CaseAttributes::MAX_SOFA);
            prop_assert_eq!(a.y_pred, a.y_true);
        }
        let (kept, stats) = filter_cohort(&cohort.log, &cohort.attrs, &CohortPolicy::default()).unwrap();
        prop_assert_eq!(kept.len(), cohort.log.len());
        prop_assert_eq!(stats.dropped_misclassified, 0);
    }
}

#[test]
fn positive_outcome_control_differs_from_negatives() {
    let mut config = SynthConfig::default();
    config.planted.outcome = PlantedOutcome::PositiveDistribution;
    let cohort = generate(&config).unwrap();
    let mean = |ids: Vec<&CaseAttributes>| {
        ids.iter().map(|a| f64::from(a.sofa_24h)).sum::<f64>() / ids.len() as f64
    };
    let planted = mean(
        cohort
            .truth
            .overdiagnosed_case_ids
            .iter()
            .map(|id| &cohort.attrs[id])
            .collect(),
    );
    let negatives = mean(cohort.attrs.values().filter(|a| !a.y_true).collect());
    assert!(planted - negatives > 2.5, "{planted} vs {negatives}");
}
