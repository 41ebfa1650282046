//! Structural properties of built trees over random samplers and configs.

mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{random_sampler, rng};
use scenario_mpc::scenario_tree::{build_tree, build_tree_with_workers};
use scenario_mpc::{Matrix, ScenarioTree, TrajectorySampler, TreeConfig};

fn instance(seed: u64) -> (Box<dyn TrajectorySampler>, Matrix, TreeConfig) {
    let mut r = rng(seed);
    let d = r.random_range(1..=2usize);
    let h = r.random_range(1..=5usize);
    let (sampler, history) = random_sampler(&mut r, d, h);
    let config = TreeConfig {
        depth: r.random_range(1..=3),
        stage_horizon: h,
        samples_per_node: r.random_range(1..=32),
        clusters: r.random_range(1..=4),
        keep_children: r.random_range(1..=3),
        series_dim: d,
        master_seed: r.random(),
    };
    (sampler, history, config)
}

fn build(seed: u64) -> (ScenarioTree, TreeConfig) {
    let (sampler, history, config) = instance(seed);
    (build_tree(sampler.as_ref(), &history, &config).unwrap(), config)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_consistent(seed in any::<u64>()) {
        let (tree, _) = build(seed);
        prop_assert!(tree.validate().is_ok());
        for n in tree.nodes() {
            if !n.is_leaf() {
                let s: f64 = n.children.iter().map(|&c| tree.nodes()[c].branch_prob).sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
            let product: f64 = tree.path_to(n.id).iter().map(|&i| tree.nodes()[i].branch_prob).product();
            prop_assert!((product - n.path_prob).abs() <= 1e-12);
        }
        for t in 0..=tree.depth() {
            let s: f64 = tree.nodes_at_stage(t).map(|n| n.path_prob).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn shape_respects_config(seed in any::<u64>()) {
        let (tree, config) = build(seed);
        prop_assert_eq!(tree.depth(), config.depth);
        prop_assert_eq!(tree.root().forecast.rows(), config.stage_horizon);
        for n in tree.nodes().iter().skip(1) {
            prop_assert_eq!((n.forecast.rows(), n.forecast.cols()), (config.stage_horizon, config.series_dim));
            prop_assert!(n.children.len() <= config.keep_children.min(config.clusters));
            prop_assert!(n.branch_prob > 0.0);
        }
        for (i, n) in tree.nodes().iter().enumerate() {
            prop_assert_eq!(n.id, i);
            prop_assert_eq!(n.is_leaf(), n.stage == config.depth);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_tree(seed in any::<u64>()) {
        let (sampler, history, config) = instance(seed);
        let one = build_tree_with_workers(sampler.as_ref(), &history, &config, 1).unwrap();
        let three = build_tree_with_workers(sampler.as_ref(), &history, &config, 3).unwrap();
        prop_assert_eq!(one.to_json(), three.to_json());
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let (tree, _) = build(seed);
        prop_assert_eq!(ScenarioTree::from_json(&tree.to_json()).unwrap(), tree);
    }
}
