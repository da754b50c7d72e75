#![allow(dead_code)]

use fitmap_core::{
    apply_normalization, collect_activation_stats, normalization_factors, unroll_network, Network, Neuron,
    NeuronKind, RateVector, SimConfig, Synapse, UnitNetwork,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random sparse DAG with 2..=8 inputs and up to `max_neurons` neurons.
/// Every non-input neuron reads from 1..=`max_fanin` earlier neurons with
/// positive weights scaled by its fanin.
pub fn random_dag(seed: u64, max_neurons: usize, max_fanin: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.random_range(2..=8usize);
    let total = rng.random_range(inputs + 1..=max_neurons.max(inputs + 1));
    let outputs = rng.random_range(1..=(total - inputs).min(4));
    let mut neurons = Vec::with_capacity(total);
    let mut synapses = Vec::new();
    for id in 0..total as u32 {
        let kind = match id as usize {
            i if i < inputs => NeuronKind::Input,
            i if i >= total - outputs => NeuronKind::Output,
            _ => NeuronKind::Hidden,
        };
        neurons.push(Neuron::new(id, kind));
        if kind == NeuronKind::Input {
            continue;
        }
        let fanin = rng.random_range(1..=(id as usize).min(max_fanin));
        let mut sources: Vec<u32> = (0..id).collect();
        for k in 0..fanin {
            let j = rng.random_range(k..sources.len());
            sources.swap(k, j);
        }
        for &src in &sources[..fanin] {
            synapses.push(Synapse::new(src, id, rng.random_range(0.05..2.0) / fanin as f64));
        }
    }
    Network::new(neurons, synapses)
}

/// Uniform input rates in `[0, 100]`.
pub fn batch(net: &Network, size: usize, seed: u64) -> Vec<RateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| net.inputs().map(|n| (n.id, rng.random_range(0.0..=100.0))).collect()).collect()
}

/// Unrolled and normalized units calibrated on `batch`.
pub fn normalized(net: &Network, batch: &[RateVector], k: f64) -> UnitNetwork {
    let stats = collect_activation_stats(net, batch, &SimConfig::default()).unwrap();
    let plan = normalization_factors(&stats, k).unwrap();
    apply_normalization(&unroll_network(net).unwrap(), &plan).unwrap()
}
