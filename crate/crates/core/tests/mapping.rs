mod common;

use common::random_dag;
use fitmap_core::mapper::{realized_synapses, DEFAULT_OPTIMAL_LIMIT};
use fitmap_core::{
    fit_unit_count, map_baseline, optimal_pack, pack_proposed, recombine, unroll_network, verify_mapping,
    CrossbarSpec, MappingSource, Network, NeuronKind, NodeId, UnitNetwork,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn sorted_fanins(net: &Network) -> BTreeMap<NodeId, Vec<(NodeId, u64)>> {
    net.incoming()
        .into_iter()
        .filter(|(id, _)| net.neuron(*id).unwrap().kind != NeuronKind::Input)
        .map(|(id, list)| {
            let mut list: Vec<_> = list.into_iter().map(|(s, w)| (s, w.to_bits())).collect();
            list.sort();
            (id, list)
        })
        .collect()
}

fn flattened(unet: &UnitNetwork) -> BTreeMap<NodeId, Vec<(NodeId, u64)>> {
    unet.flattened_synapses()
        .into_iter()
        .map(|(id, list)| {
            let mut list: Vec<_> = list.into_iter().map(|(s, w)| (s, w.to_bits())).collect();
            list.sort();
            (id, list)
        })
        .collect()
}

#[test]
fn fit_count_law() {
    for seed in 0..1000 {
        let net = random_dag(seed, 40, 20);
        let unet = unroll_network(&net).unwrap();
        let mut expected = 0;
        for (id, m) in net.fanins() {
            if net.neuron(id).unwrap().kind == NeuronKind::Input {
                continue;
            }
            let chain = unet.chain(id).count();
            if m >= 2 {
                assert_eq!(chain, m - 1, "seed {seed} neuron {id}");
            }
            expected += m.saturating_sub(1);
        }
        assert_eq!(fit_unit_count(&net), expected);
        assert!(unet.units.iter().all(|u| u.fanin() <= 2));
    }
}

#[test]
fn synapse_conservation() {
    for seed in 0..300 {
        let net = random_dag(seed, 40, 20);
        let original = sorted_fanins(&net);
        let unet = unroll_network(&net).unwrap();
        assert_eq!(flattened(&unet), original, "unroll, seed {seed}");
        for n in [4, 8, 16] {
            let r = recombine(&unet, n - 1).unwrap();
            assert_eq!(flattened(&r), original, "recombine {n}, seed {seed}");
            let spec = CrossbarSpec::new(n).unwrap();
            let mapping = pack_proposed(&r, &spec).unwrap();
            assert!(mapping.dropped_synapses.is_empty());
            let report = verify_mapping(&mapping, MappingSource::Units(&r), &spec);
            assert!(report.is_valid(), "seed {seed} n {n}: {:?}", report.violations);
            assert_eq!(realized_synapses(&mapping).len(), r.crosspoint_count());
        }
    }
}

#[test]
fn capacity_safety() {
    for seed in 0..1000 {
        let net = random_dag(seed, 30, 24);
        let unet = unroll_network(&net).unwrap();
        for n in [4, 8, 16, 128] {
            let spec = CrossbarSpec::new(n).unwrap();
            let baseline = map_baseline(&net, &spec).unwrap();
            let report = verify_mapping(&baseline, MappingSource::Network(&net), &spec);
            assert!(report.is_valid(), "baseline seed {seed} n {n}: {:?}", report.violations);
            for max_fanin in [2, n - 1, n] {
                let r = recombine(&unet, max_fanin).unwrap();
                let proposed = pack_proposed(&r, &spec).unwrap();
                let report = verify_mapping(&proposed, MappingSource::Units(&r), &spec);
                assert!(report.is_valid(), "proposed seed {seed} n {n}: {:?}", report.violations);
            }
        }
    }
}

#[test]
fn larger_crossbars_never_need_more() {
    for seed in 0..300 {
        let net = random_dag(seed, 60, 30);
        let unet = recombine(&unroll_network(&net).unwrap(), 3).unwrap();
        let counts: Vec<usize> = [4, 8, 16, 128]
            .iter()
            .map(|&n| pack_proposed(&unet, &CrossbarSpec::new(n).unwrap()).unwrap().crossbars.len())
            .collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {counts:?}");
    }
}

#[test]
fn greedy_within_one_of_optimal() {
    let spec = CrossbarSpec::new(4).unwrap();
    let mut checked = 0;
    for seed in 0..2000 {
        let net = random_dag(seed, 12, 7);
        let unet = recombine(&unroll_network(&net).unwrap(), 3).unwrap();
        if unet.units.len() > 6 {
            continue;
        }
        let greedy = pack_proposed(&unet, &spec).unwrap().crossbars.len();
        let optimal = optimal_pack(&unet, &spec, DEFAULT_OPTIMAL_LIMIT).unwrap();
        assert!(verify_mapping(&optimal, MappingSource::Units(&unet), &spec).is_valid());
        let optimal = optimal.crossbars.len();
        assert!(optimal <= greedy && greedy <= optimal + 1, "seed {seed}: {greedy} vs {optimal}");
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} small instances");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proposed_mapping_is_valid(seed in any::<u64>(), n in 2usize..20, full in any::<bool>()) {
        let net = random_dag(seed, 30, 16);
        let unet = unroll_network(&net).unwrap();
        let max_fanin = if full { n } else { (n - 1).max(2) };
        let r = recombine(&unet, max_fanin).unwrap();
        let spec = CrossbarSpec::new(n).unwrap();
        let mapping = pack_proposed(&r, &spec).unwrap();
        prop_assert!(verify_mapping(&mapping, MappingSource::Units(&r), &spec).is_valid());
        prop_assert_eq!(flattened(&r), sorted_fanins(&net));
    }

    #[test]
    fn baseline_drops_exactly_the_excess(seed in any::<u64>(), n in 2usize..20) {
        let net = random_dag(seed, 30, 16);
        let spec = CrossbarSpec::new(n).unwrap();
        let mapping = map_baseline(&net, &spec).unwrap();
        let excess: usize = net.fanins().values().map(|&m| m.saturating_sub(n)).sum();
        prop_assert_eq!(mapping.dropped_synapses.len(), excess);
        prop_assert!(verify_mapping(&mapping, MappingSource::Network(&net), &spec).is_valid());
    }
}
