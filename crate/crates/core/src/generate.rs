//! Deterministic synthetic network generators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::network::{Metadata, Network, Neuron, NeuronKind, NodeId, Synapse};
use crate::ratesim::RateVector;

/// Distribution synaptic weights are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightSampler {
    Uniform { low: f64, high: f64 },
    /// Uniform in `[low, high]` divided by the fanin of the destination,
    /// which keeps summed currents on the scale of the input rates.
    FaninScaled { low: f64, high: f64 },
    Constant(f64),
}

impl Default for WeightSampler {
    fn default() -> Self {
        WeightSampler::FaninScaled { low: 0.0, high: 2.0 }
    }
}

impl WeightSampler {
    fn check(&self) -> Result<(), Error> {
        let ok = match *self {
            WeightSampler::Uniform { low, high } | WeightSampler::FaninScaled { low, high } => {
                low.is_finite() && high.is_finite() && low <= high
            }
            WeightSampler::Constant(w) => w.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad weight sampler {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, fanin: usize) -> f64 {
        match *self {
            WeightSampler::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            WeightSampler::FaninScaled { low, high } => {
                (low + (high - low) * rng.random::<f64>()) / fanin.max(1) as f64
            }
            WeightSampler::Constant(w) => w,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            WeightSampler::Uniform { low, high } => format!("uniform:{low},{high}"),
            WeightSampler::FaninScaled { low, high } => format!("scaled:{low},{high}"),
            WeightSampler::Constant(w) => format!("const:{w}"),
        }
    }
}

/// Fully connected feedforward network. The first layer is the input
/// layer, the last layer the output layer; ids are assigned layer by layer
/// starting at 0.
pub fn generate_feedforward(
    layer_sizes: &[usize],
    sampler: WeightSampler,
    seed: u64,
) -> Result<Network, Error> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument("feedforward network needs at least two layers".into()));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("layer sizes must be at least 1".into()));
    }
    sampler.check()?;

    let total: usize = layer_sizes.iter().sum();
    if total > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many neurons".into()));
    }

    let mut neurons = Vec::with_capacity(total);
    let mut starts = Vec::with_capacity(layer_sizes.len());
    let mut next = 0u32;
    let last = layer_sizes.len() - 1;
    for (layer, &size) in layer_sizes.iter().enumerate() {
        let kind = match layer {
            0 => NeuronKind::Input,
            l if l == last => NeuronKind::Output,
            _ => NeuronKind::Hidden,
        };
        starts.push(next);
        for _ in 0..size {
            neurons.push(Neuron::new(next, kind));
            next += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count: usize = layer_sizes.windows(2).map(|w| w[0] * w[1]).sum();
    let mut synapses = Vec::with_capacity(count);
    for l in 0..last {
        let fanin = layer_sizes[l];
        for i in 0..layer_sizes[l] as u32 {
            for j in 0..layer_sizes[l + 1] as u32 {
                let w = sampler.sample(&mut rng, fanin);
                synapses.push(Synapse::new(starts[l] + i, starts[l + 1] + j, w));
            }
        }
    }

    let sizes: Vec<String> = layer_sizes.iter().map(|s| format!("{s}")).collect();
    let mut net = Network::new(neurons, synapses);
    net.metadata = Metadata {
        name: "feedforward".into(),
        topology: format!("feedforward({})", sizes.join(",")),
        seed: Some(seed),
        extra: [("sampler".into(), sampler.describe())].into_iter().collect(),
    };
    Ok(net)
}

/// Random recurrent reservoir of `size` neurons. Each ordered pair of
/// distinct reservoir neurons is connected with probability
/// `connection_prob`. Neuron 0 is a single input that drives every
/// reservoir neuron; the last `max(1, size / 10)` reservoir neurons are
/// outputs.
pub fn generate_reservoir(
    size: usize,
    connection_prob: f64,
    sampler: WeightSampler,
    seed: u64,
) -> Result<Network, Error> {
    if size == 0 {
        return Err(Error::InvalidArgument("reservoir size must be at least 1".into()));
    }
    if !(connection_prob > 0.0 && connection_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "connection probability {connection_prob} outside (0, 1]"
        )));
    }
    if size >= u32::MAX as usize {
        return Err(Error::InvalidArgument("too many neurons".into()));
    }
    sampler.check()?;

    let outputs = (size / 10).max(1);
    let mut neurons = Vec::with_capacity(size + 1);
    neurons.push(Neuron::new(0, NeuronKind::Input));
    for i in 1..=size {
        let kind = if i > size - outputs { NeuronKind::Output } else { NeuronKind::Hidden };
        neurons.push(Neuron::new(i as u32, kind));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for dst in 1..=size as u32 {
        edges.push((0, dst));
    }
    for src in 1..=size as u32 {
        for dst in 1..=size as u32 {
            if src != dst && rng.random::<f64>() < connection_prob {
                edges.push((src, dst));
            }
        }
    }
    edges.sort_unstable();

    let mut fanin = alloc::vec![0usize; size + 1];
    for &(_, dst) in &edges {
        fanin[dst as usize] += 1;
    }
    let synapses = edges
        .into_iter()
        .map(|(s, d)| Synapse::new(s, d, sampler.sample(&mut rng, fanin[d as usize])))
        .collect();

    let mut net = Network::new(neurons, synapses);
    net.metadata = Metadata {
        name: "reservoir".into(),
        topology: format!("reservoir({size},{connection_prob})"),
        seed: Some(seed),
        extra: [("sampler".into(), sampler.describe())].into_iter().collect(),
    };
    Ok(net)
}

/// Calibration batch of `size` samples. Each input neuron draws its rate
/// uniformly from `[0, r_max / 10]`, with `r_max` capped at 1000 Hz for
/// non-saturating inputs.
pub fn random_batch(net: &Network, size: usize, seed: u64) -> Vec<RateVector> {
    let mut inputs: Vec<&Neuron> = net.inputs().collect();
    inputs.sort_by_key(|n| n.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            inputs
                .iter()
                .map(|n| (n.id, rng.random::<f64>() * n.max_rate.min(1000.0) / 10.0))
                .collect()
        })
        .collect()
}

/// Synapses whose endpoints are both non-input neurons.
pub fn recurrent_synapse_count(net: &Network) -> usize {
    let inputs: alloc::collections::BTreeSet<NodeId> = net.inputs().map(|n| n.id).collect();
    net.synapses.iter().filter(|s| !inputs.contains(&s.src)).count()
}

impl Network {
    /// Removes the saturation clamp from every neuron.
    pub fn disable_saturation(&mut self) {
        for n in &mut self.neurons {
            n.max_rate = f64::INFINITY;
        }
    }
}
