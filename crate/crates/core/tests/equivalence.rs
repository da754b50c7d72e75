mod common;

use common::{batch, normalized, random_dag};
use fitmap_core::metrics::{fidelity, output_ids};
use fitmap_core::{
    generate_feedforward, generate_reservoir, rate_error, recombine, simulate, Network, RateVector, SimConfig,
    WeightSampler,
};

/// De-normalized rates of the decomposed network on every sample.
fn unit_rates(net: &Network, samples: &[RateVector], max_fanin: usize) -> (Vec<RateVector>, Vec<RateVector>) {
    let unet = normalized(net, samples, 1.0);
    let unet = if max_fanin > 2 { recombine(&unet, max_fanin).unwrap() } else { unet };
    let flat = unet.to_network();
    let cfg = SimConfig::default();
    let mut reference = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        let a = simulate(net, s, &cfg).unwrap();
        let b = simulate(&flat, s, &cfg).unwrap();
        assert!(a.converged && b.converged);
        reference.push(a.rates);
        test.push(unet.denormalize(&b.rates));
    }
    (reference, test)
}

fn assert_equivalent(net: &Network, samples: &[RateVector], max_fanin: usize) {
    let (reference, test) = unit_rates(net, samples, max_fanin);
    let ids: Vec<_> = net.neurons.iter().map(|n| n.id).collect();
    for (a, b) in reference.iter().zip(&test) {
        let err = rate_error(a, b, &ids).unwrap();
        assert!(err.max_rel_error <= 1e-6, "{}: {}", net.metadata.topology, err.max_rel_error);
    }
}

#[test]
fn feedforward_equivalence_without_saturation() {
    for seed in 0..100u64 {
        let mut net = if seed % 2 == 0 {
            let hidden = 4 + (seed as usize * 7) % 60;
            generate_feedforward(&[10 + seed as usize % 40, hidden, 3 + seed as usize % 8], WeightSampler::default(), seed)
                .unwrap()
        } else {
            random_dag(seed, 200, 40)
        };
        net.disable_saturation();
        let samples = batch(&net, 4, seed);
        assert_equivalent(&net, &samples, 2);
        assert_equivalent(&net, &samples, 5);
    }
}

#[test]
fn reservoir_equivalence_without_saturation() {
    for seed in 0..20u64 {
        let sampler = WeightSampler::FaninScaled { low: 0.0, high: 0.9 };
        let mut net = generate_reservoir(20 + seed as usize * 3, 0.1, sampler, seed).unwrap();
        net.disable_saturation();
        let samples = batch(&net, 3, seed);
        assert_equivalent(&net, &samples, 2);
    }
}

#[test]
fn argmax_preserved_with_saturation() {
    for seed in 0..20u64 {
        let net = generate_feedforward(&[30, 20, 5], WeightSampler::default(), seed).unwrap();
        let samples = batch(&net, 16, seed);
        let (reference, test) = unit_rates(&net, &samples, 2);
        let f = fidelity(&reference, &test, &output_ids(&net)).unwrap();
        assert_eq!(f.argmax_match_rate, 1.0, "seed {seed}");
    }
}

