use std::collections::BTreeMap;

use proptest::prelude::*;
use seedbank::analysis::lineage_counts;
use seedbank::dual::pair::Lineage;
use seedbank::forward::forward_total_rate;
use seedbank::model::{Configuration, Model};
use seedbank::oracle::{
    build_dual_generator, build_forward_generator, build_pair_chain, duality_matrix,
    exact_duality_check, generator_criterion_residual, FORWARD_STATE_CAP,
};

fn ring(active: Vec<u32>, dormant: Vec<u32>, lambda: f64) -> Model {
    let side = active.len();
    Model::nearest_neighbor_torus(1, side, active, dormant, lambda).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_criterion_holds_on_random_small_systems(
        sizes in proptest::collection::vec((1u32..=2, 1u32..=2), 1..=3),
        lambda in 0.1f64..3.0,
    ) {
        let model = ring(
            sizes.iter().map(|s| s.0).collect(),
            sizes.iter().map(|s| s.1).collect(),
            lambda,
        );
        let fwd = build_forward_generator(&model, FORWARD_STATE_CAP).unwrap();
        for (k, s) in fwd.states().iter().enumerate() {
            prop_assert!((fwd.exit_rate(k) - forward_total_rate(&model, s)).abs() < 1e-12);
        }
        let dual = build_dual_generator(&model, 2, None).unwrap();
        let d = duality_matrix(&model.profile, fwd.states(), dual.states()).unwrap();
        let residual = generator_criterion_residual(&fwd, &dual, &d).unwrap();
        prop_assert!(residual < 1e-12, "residual {residual}");
    }

    #[test]
    fn single_colony_absorption_is_initial_frequency(
        n in 2u32..=4,
        m in 1u32..=3,
        lambda in 0.2f64..4.0,
    ) {
        let model = Model::single_colony(n, m, lambda).unwrap();
        let fwd = build_forward_generator(&model, FORWARD_STATE_CAP).unwrap();
        let classes = fwd.stationary_distributions().unwrap();
        prop_assert_eq!(classes.len(), 2);
        let absorption = fwd.absorption_probabilities(&classes).unwrap();
        let top = fwd.index_of(&Configuration::top(&model.profile)).unwrap();
        let top_class = classes.iter().position(|c| c.members == [top]).unwrap();
        for (s, z) in fwd.states().iter().enumerate() {
            let expected = (z.active[0] + z.dormant[0]) as f64 / (n + m) as f64;
            prop_assert!((absorption[s][top_class] - expected).abs() < 1e-10);
        }
    }
}

#[test]
fn exact_duality_gap_small_at_many_times() {
    let model = ring(vec![2, 1, 2], vec![1, 2, 1], 0.8);
    let fwd = build_forward_generator(&model, FORWARD_STATE_CAP).unwrap();
    let dual = build_dual_generator(&model, 2, None).unwrap();
    let d = duality_matrix(&model.profile, fwd.states(), dual.states()).unwrap();
    assert_eq!(
        exact_duality_check(&fwd, &dual, &d, 0.0, 1e-10).unwrap(),
        0.0
    );
    for t in [0.1, 0.7, 3.0, 12.0] {
        let gap = exact_duality_check(&fwd, &dual, &d, t, 1e-10).unwrap();
        assert!(gap < 1e-8, "t={t}: gap {gap}");
    }
}

/// Forgetting labels in the two-particle chain must give the block-counting
/// dual restricted to at most two particles.
#[test]
fn labelled_pair_chain_lumps_to_counting_dual() {
    let model = ring(vec![2, 3, 1], vec![1, 2, 2], 1.3);
    let dual = build_dual_generator(&model, 2, None).unwrap();
    let starts = [
        (Lineage::active(0), Lineage::active(0)),
        (Lineage::active(0), Lineage::dormant(2)),
        (Lineage::dormant(1), Lineage::dormant(1)),
        (Lineage::active(2), Lineage::active(1)),
    ];
    for (a, b) in starts {
        let pair = build_pair_chain(&model, a, b).unwrap();
        for (i, config) in pair.states().iter().enumerate() {
            let from = lineage_counts(model.sites(), &config.lineages());
            let mut lumped: BTreeMap<Configuration, f64> = BTreeMap::new();
            for &(j, rate) in pair.row(i) {
                let to = lineage_counts(model.sites(), &pair.states()[j].lineages());
                if to != from {
                    *lumped.entry(to).or_default() += rate;
                }
            }
            let di = dual.index_of(&from).unwrap();
            for (to, rate) in &lumped {
                let dj = dual.index_of(to).unwrap();
                assert!(
                    (dual.rate(di, dj) - rate).abs() < 1e-12,
                    "{from:?} -> {to:?}: pair {rate} vs dual {}",
                    dual.rate(di, dj)
                );
            }
            let dual_exit: f64 = dual
                .row(di)
                .iter()
                .filter(|(j, _)| dual.states()[*j] != from)
                .map(|(_, r)| r)
                .sum();
            let pair_exit: f64 = lumped.values().sum();
            assert!((dual_exit - pair_exit).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_single_slot_colony_mixes_to_one_half() {
    let model = Model::single_colony(1, 1, 1.0).unwrap();
    let fwd = build_forward_generator(&model, FORWARD_STATE_CAP).unwrap();
    let start = fwd.index_of(&Configuration::from_pairs(&[[1, 0]])).unwrap();
    let p = fwd.transient_distribution(start, 40.0, 1e-12);
    let active = fwd.index_of(&Configuration::from_pairs(&[[1, 0]])).unwrap();
    assert!((p[active] - 0.5).abs() < 1e-10);
    assert_eq!(fwd.closed_classes().len(), 3);
}
