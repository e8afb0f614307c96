use std::collections::BTreeSet;

use episim::landscape::{generate_landscape, novelty_of, Approach, PerceptionParams};
use episim::network::{update_attention, AttentionGraph, RoundEvents};
use episim::runtime::{coverage, duplication_rate, run_experiment, ExperimentConfig, LandscapeConfig, RunLog};
use episim::stores::EmbeddingIndex;
use proptest::prelude::*;

fn approach(dim: usize) -> impl Strategy<Value = Approach> {
    prop::collection::vec(0.0..=1.0f64, dim).prop_map(|c| Approach::new(c).unwrap())
}

fn approaches(dim: usize, max: usize) -> impl Strategy<Value = Vec<Approach>> {
    prop::collection::vec(approach(dim), 0..max)
}

fn perception() -> impl Strategy<Value = PerceptionParams> {
    (0.0..=1.0f64, 0.01..0.5f64).prop_map(|(a, h)| PerceptionParams::new(a, h).unwrap())
}

fn edge() -> impl Strategy<Value = (String, String)> {
    (0..5u8, 1..5u8).prop_map(|(i, d)| (format!("a{i}"), format!("a{}", (i + d) % 5)))
}

proptest! {
    #[test]
    fn novelty_is_a_fraction_and_discounting_never_raises_value(
        seed in any::<u64>(),
        x in approach(3),
        history in approaches(3, 12),
        p in perception(),
    ) {
        let l = generate_landscape(3, 4, seed).unwrap();
        let n = novelty_of(&x, &history, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&n));
        let f = l.true_significance(&x).unwrap();
        let perceived = l.perceived_significance(&x, &history, &p).unwrap();
        prop_assert!(perceived >= 0.0 && perceived <= f);
    }

    #[test]
    fn top_k_is_sorted_and_sized(
        vectors in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 0..30),
        q in prop::collection::vec(-1.0..1.0f64, 4),
        k in 1..40usize,
    ) {
        let mut index = EmbeddingIndex::new();
        for (i, v) in vectors.iter().enumerate() {
            index.insert(&format!("id{i:02}"), v.clone()).unwrap();
        }
        let hits = index.top_k(&q, k, &BTreeSet::new()).unwrap();
        prop_assert_eq!(hits.len(), k.min(vectors.len()));
        for w in hits.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn attention_stays_nonnegative(
        rounds in prop::collection::vec(
            (prop::collection::vec(edge(), 0..4), prop::collection::vec(edge(), 0..6), prop::collection::vec(edge(), 0..8)),
            1..6,
        ),
        decay in 0.0..0.99f64,
    ) {
        let mut graph = AttentionGraph::new();
        for (collaborations, citations, reviews) in rounds {
            graph = update_attention(&graph, &RoundEvents { collaborations, citations, reviews }, decay).unwrap();
            prop_assert!(graph.edges().iter().all(|e| e.weight >= 0.0 && e.from != e.to));
        }
    }

    #[test]
    fn summary_metrics_are_fractions(xs in approaches(2, 40), radius in 0.0..0.5f64) {
        let d = duplication_rate(&xs, radius);
        prop_assert!((0.0..=1.0).contains(&d));
        let c = coverage(&xs, 20);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(c == 0.0, xs.is_empty());
    }

    #[test]
    fn configs_round_trip_through_json_and_toml(
        n in 4..40usize,
        rounds in 1..50u32,
        seed in any::<u64>(),
        dim in 1..6usize,
        p in perception(),
    ) {
        let config = ExperimentConfig {
            n_agents: n,
            rounds,
            seed,
            landscape: LandscapeConfig { dim, n_peaks: 3, seed: seed / 2 },
            perception: p,
            ..ExperimentConfig::default()
        };
        let json = serde_json::to_string(&config).unwrap();
        prop_assert_eq!(&ExperimentConfig::parse(&json).unwrap(), &config);
        let toml_text = toml::to_string(&config).unwrap();
        prop_assert_eq!(&ExperimentConfig::parse(&toml_text).unwrap(), &config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn run_logs_round_trip(seed in any::<u64>(), n in 4..9usize) {
        let config = ExperimentConfig { n_agents: n, rounds: 2, max_steps: 5, seed, ..ExperimentConfig::default() };
        let log = run_experiment(&config).unwrap();
        let back = RunLog::parse(&log.to_jsonl()).unwrap();
        prop_assert_eq!(back.records(), log.records());
        prop_assert_eq!(back.digest(), log.digest());
        prop_assert_eq!(log.papers().count(), 2 * (n / config.reviewers_per_paper));
    }
}
