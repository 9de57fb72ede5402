mod support;

use proptest::prelude::*;
use support::invariants::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn root_split_is_optimal(data in small_data(24, 3, 3), criterion in criterion()) {
        check_root_split_oracle(&data, criterion)?;
    }

    #[test]
    fn splits_reduce_impurity_and_leaves_count_rows(
        data in small_data(40, 4, 4),
        criterion in criterion(),
        subsample in 1usize..5,
    ) {
        check_impurity_decrease_and_routing(&data, criterion, subsample)?;
    }

    #[test]
    fn forest_vote_identity(data in small_data(30, 3, 4)) {
        check_vote_identity(&data)?;
    }

    #[test]
    fn partition_is_exact(data in small_data(40, 3, 3), metric in metric()) {
        check_partition_exactness(&data, metric)?;
    }

    #[test]
    fn easy_set_monotone(data in small_data(40, 3, 3), metric in metric(), bump in 0.0f64..0.5) {
        check_easy_set_monotonicity(&data, metric, bump)?;
    }

    #[test]
    fn score_ranges(stats in leaf_stats()) {
        check_score_ranges(&stats)?;
    }

    #[test]
    fn survivor_counts(
        fitness in prop::collection::vec(-1.0f64..1.0, 1..40),
        ratio in 0.0f64..0.99,
    ) {
        check_survivor_counts(&fitness, ratio)?;
    }

    #[test]
    fn survivor_counts_with_ties(
        fitness in prop::collection::vec(prop::sample::select(vec![0.1, 0.2, 0.3]), 1..20),
        ratio in 0.0f64..0.99,
    ) {
        check_survivor_counts(&fitness, ratio)?;
    }

    #[test]
    fn auc_properties((scores, truth) in scores_and_truth()) {
        check_auc_properties(&scores, &truth)?;
    }

    #[test]
    fn accuracy_is_confusion_trace(
        pairs in prop::collection::vec((0u32..4, 0u32..4), 1..50),
    ) {
        let (pred, truth): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
        check_accuracy_trace(&pred, &truth, 4)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prediction_coverage(data in small_data(40, 3, 3), metric in metric()) {
        check_prediction_coverage(&data, metric)?;
    }

    #[test]
    fn monotone_data_flow(data in small_data(50, 3, 3), metric in metric()) {
        check_monotone_data_flow(&data, metric)?;
    }

    #[test]
    fn thread_count_does_not_matter(data in small_data(40, 3, 3), metric in metric()) {
        check_thread_determinism(&data, metric)?;
    }

    #[test]
    fn one_level_cascade_is_a_forest(data in small_data(40, 4, 3), n_trees in 1usize..8) {
        check_rf_equivalence(&data, n_trees)?;
    }

    #[test]
    fn persist_round_trip(data in small_data(30, 3, 3), metric in metric()) {
        check_persist_round_trip(&data, metric)?;
    }
}
