//! Property tests for category aggregation: whatever outcomes a run
//! contains, the category counts must sum to the number of samples at
//! both levels, and per-mode aggregation must equal an independent
//! brute-force mean over runs.

use proptest::prelude::*;

use vqforge_core::outcomes::{
    aggregate, normalized_counts, sample_counts, CategoryCounts, RunEvaluation, SampleEvaluation,
    TestOutcome,
};

fn outcome_strategy() -> impl Strategy<Value = TestOutcome> {
    prop_oneof![
        Just(TestOutcome::Pass),
        Just(TestOutcome::AssertionError),
        Just(TestOutcome::AttributeError),
        Just(TestOutcome::NameError),
        Just(TestOutcome::Timeout),
        "[A-Z][a-zA-Z]{2,12}Error".prop_map(TestOutcome::OtherError),
    ]
}

/// 5 runs of the same mode over a shared sample-id set, with outcomes
/// drawn independently per run.
fn runs_strategy() -> impl Strategy<Value = Vec<RunEvaluation>> {
    (1usize..20).prop_flat_map(|sample_count| {
        let one_run = proptest::collection::vec(
            proptest::collection::vec(outcome_strategy(), 1..6),
            sample_count,
        );
        proptest::collection::vec(one_run, 5).prop_map(move |runs| {
            runs.into_iter()
                .enumerate()
                .map(|(seed, outcome_sets)| RunEvaluation {
                    mode: "targeted_vq".to_string(),
                    seed: seed as u64,
                    samples: outcome_sets
                        .into_iter()
                        .enumerate()
                        .map(|(i, outcomes)| SampleEvaluation {
                            sample_id: format!("s{i}"),
                            task_id: format!("t{i}"),
                            outcomes,
                        })
                        .collect(),
                })
                .collect()
        })
    })
}

fn brute_force_mean(runs: &[RunEvaluation], level: fn(&[SampleEvaluation]) -> CategoryCounts) -> [f64; 4] {
    let mut sums = [0.0f64; 4];
    for run in runs {
        let c = level(&run.samples);
        sums[0] += c.runnable;
        sums[1] += c.attribute;
        sums[2] += c.name;
        sums[3] += c.other;
    }
    sums.map(|s| s / runs.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counts_sum_to_sample_count(runs in runs_strategy()) {
        for run in &runs {
            let n = run.samples.len() as f64;
            prop_assert!((normalized_counts(&run.samples).total() - n).abs() < 1e-9);
            prop_assert!((sample_counts(&run.samples).total() - n).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregate_matches_brute_force_mean(runs in runs_strategy()) {
        let report = aggregate(&runs).unwrap();
        prop_assert_eq!(report.modes.len(), 1);
        let mode = &report.modes[0];
        prop_assert_eq!(mode.runs, 5);

        let expect_norm = brute_force_mean(&runs, normalized_counts);
        let got_norm = [mode.normalized.runnable, mode.normalized.attribute,
                        mode.normalized.name, mode.normalized.other];
        for (got, want) in got_norm.iter().zip(expect_norm.iter()) {
            prop_assert!((got - want).abs() < 1e-9, "normalized {got} vs {want}");
        }

        let expect_sample = brute_force_mean(&runs, sample_counts);
        let got_sample = [mode.sample_level.runnable, mode.sample_level.attribute,
                          mode.sample_level.name, mode.sample_level.other];
        for (got, want) in got_sample.iter().zip(expect_sample.iter()) {
            prop_assert!((got - want).abs() < 1e-9, "sample {got} vs {want}");
        }

        // Conservation survives averaging.
        let n = mode.sample_count as f64;
        prop_assert!((mode.normalized.total() - n).abs() < 1e-9);
        prop_assert!((mode.sample_level.total() - n).abs() < 1e-9);
    }
}
