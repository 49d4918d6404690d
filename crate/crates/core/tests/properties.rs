mod common;

use common::*;
use ga_ensemble::corpus::OovUnit;
use proptest::prelude::*;

fn label_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
    (2usize..=6, 1usize..=200).prop_flat_map(|(c, n)| {
        (
            prop::collection::vec(0..c, n),
            prop::collection::vec(0..c, n),
            Just(c),
        )
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z]{1,6}",
        "[0-9]{1,3}",
        "[a-z]{1,4}[!?.,]{0,2}",
        Just("படம்".to_string()),
        Just("സിനിമ".to_string()),
        Just("«super»".to_string()),
        Just("(ಚಿತ್ರ)".to_string()),
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..8).prop_map(|w| w.join(" "))
}

fn corpus_records() -> impl Strategy<Value = Vec<(String, String)>> {
    let label = prop_oneof![
        Just("Not_offensive".to_string()),
        Just("Offensive_Untargetede".to_string()),
        Just("not-Tamil".to_string()),
        Just("spam".to_string()),
    ];
    prop::collection::vec((text(), label), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_naive_oracle((gold, pred, c) in label_pair()) {
        check_metric_oracle(&gold, &pred, c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn metrics_are_bounded((gold, pred, c) in label_pair()) {
        check_metric_bounds(&gold, &pred, c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn metrics_invariant_under_class_relabeling(
        ((gold, pred, c), perm) in label_pair().prop_flat_map(|p| { let c = p.2; (Just(p), permutation(c)) })
    ) {
        check_class_permutation(&gold, &pred, c, &perm).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn equal_supports_give_equal_macro_and_weighted(
        (per_class, c, pred) in (1usize..20, 2usize..=6).prop_flat_map(|(k, c)| {
            (Just(k), Just(c), prop::collection::vec(0..c, k * c))
        })
    ) {
        check_equal_support(per_class, c, &pred).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gold_against_itself_scores_one((gold, _, c) in label_pair()) {
        check_self_agreement(&gold, c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn metrics_ignore_example_order(
        ((gold, pred, c), order) in label_pair().prop_flat_map(|p| { let n = p.0.len(); (Just(p), permutation(n)) })
    ) {
        check_example_order(&gold, &pred, c, &order).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn weighted_average_rows_stay_on_simplex(seed in any::<u64>(), wseed in any::<u64>()) {
        let (pool, _) = random_pool(seed);
        let w = random_weights(&mut rng(wseed), pool.len());
        check_rows_on_simplex(&pool, &w).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn one_hot_weights_reproduce_each_model(seed in any::<u64>()) {
        let (pool, _) = random_pool(seed);
        check_one_hot_reproduces_model(&pool).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn weighted_average_ignores_model_order(seed in any::<u64>(), wseed in any::<u64>()) {
        let (pool, _) = random_pool(seed);
        let mut r = rng(wseed);
        let w = random_weights(&mut r, pool.len());
        let perm = random_permutation(&mut r, pool.len());
        check_model_permutation(&pool, &w, &perm).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn argmax_invariant_under_weight_scaling(
        seed in any::<u64>(),
        raw in prop::collection::vec(0.001f64..10.0, 4),
        scale in 1e-3f64..1e3,
    ) {
        let (pool, _) = random_pool(seed);
        check_argmax_scale_invariance(&pool, &raw[..pool.len()], scale).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn softmax_invariant_under_logit_shift(
        logits in (2usize..6).prop_flat_map(|c| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, c), 1..20)),
        shift in -100.0f64..100.0,
    ) {
        check_softmax_shift(&logits, shift).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn class_counts_ignore_record_order(
        (recs, order) in corpus_records().prop_flat_map(|r| { let n = r.len(); (Just(r), permutation(n)) })
    ) {
        check_counts_shuffle(&records(&recs), &order).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn oov_rate_falls_as_vocabulary_grows(
        recs in corpus_records(),
        extra in prop::collection::vec("[a-z]{1,4}", 0..10),
        unit in prop_oneof![Just(OovUnit::Types), Just(OovUnit::Tokens)],
        rot in 0usize..50,
    ) {
        let recs = records(&recs);
        let mut words: Vec<String> = recs.iter().flat_map(|r| ga_ensemble::corpus::tokenize(&r.text)).collect();
        words.extend(extra);
        let shift = rot % words.len().max(1);
        words.rotate_left(shift);
        check_oov_monotone(&recs, &words, unit).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tokenize_is_idempotent(t in text()) {
        check_tokenize_idempotent(&t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tokenize_is_idempotent_on_arbitrary_unicode(t in "\\PC{0,40}") {
        check_tokenize_idempotent(&t).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ga_log_monotone_and_dominates_baselines(seed in any::<u64>()) {
        check_ga_invariants(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn ga_independent_of_worker_count(seed in any::<u64>()) {
        check_ga_worker_independence(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn ga_equivariant_under_model_permutation(seed in any::<u64>(), perm in permutation(3)) {
        check_ga_permutation(seed, &perm).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn grid_dominates_singles_and_uniform(seed in any::<u64>()) {
        check_grid_dominance(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn grid_optimum_ignores_model_order(seed in any::<u64>(), pseed in any::<u64>()) {
        check_grid_permutation(seed, pseed).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn grid_counts_match_closed_form() {
    for g in 1..=20 {
        for m in 1..=5 {
            check_grid_count(g, m).unwrap();
        }
    }
}
