//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report reads top to bottom; exits non-zero on failure.

use std::time::{Duration, Instant};

use fitmap::pipeline::{simulate_batch, PipelineConfig};
use fitmap::{run_pipeline, NetworkSource};
use fitmap_core::fixtures::{fig5, FIG5_X6};
use fitmap_core::mapper::{Cell, Column, Crossbar, InterEdge, DEFAULT_OPTIMAL_LIMIT};
use fitmap_core::metrics::{fidelity, output_ids};
use fitmap_core::{
    fit_unit_count, generate_feedforward, generate_reservoir, interconnect_energy, map_baseline,
    optimal_pack, pack_proposed, prune_weights, random_batch, rate_error, recombine,
    unroll_network, verify_mapping, wasted_energy, CrossbarSpec, EnergyModel, Mapping,
    MappingSource, Network, NeuronKind, NodeId, RateVector, SimConfig, UnitNetwork, Variant,
    WeightSampler,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: Result<T, fitmap_core::Error>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Deterministic corpus: small feedforward nets, pruned to varied
/// sparsity, and recurrent reservoirs.
fn instance(seed: u64) -> Network {
    let s = seed as usize;
    if seed % 5 == 4 {
        let sampler = WeightSampler::FaninScaled {
            low: 0.0,
            high: 0.9,
        };
        return generate_reservoir(6 + s % 17, 0.05 + (s % 7) as f64 * 0.05, sampler, seed)
            .unwrap();
    }
    let layers = [2 + s % 11, 1 + (s * 7) % 13, 1 + (s * 3) % 5];
    let net = generate_feedforward(
        &layers,
        WeightSampler::Uniform {
            low: 0.0,
            high: 1.0,
        },
        seed,
    )
    .unwrap();
    prune_weights(&net, (s % 4) as f64 * 0.15).unwrap().network
}

fn flattened_multiset(unet: &UnitNetwork) -> Vec<(NodeId, NodeId, u64)> {
    let mut v: Vec<_> = unet
        .flattened_synapses()
        .into_iter()
        .flat_map(|(dst, list)| {
            list.into_iter()
                .map(move |(src, w)| (dst, src, w.to_bits()))
        })
        .collect();
    v.sort();
    v
}

fn original_multiset(net: &Network) -> Vec<(NodeId, NodeId, u64)> {
    let mut v: Vec<_> = net
        .synapses
        .iter()
        .map(|s| (s.dst, s.src, s.weight.to_bits()))
        .collect();
    v.sort();
    v
}

fn fig5_proposed(spec: &CrossbarSpec) -> Result<(UnitNetwork, Mapping), String> {
    let unet = core(recombine(&core(unroll_network(&fig5()))?, spec.n - 1))?;
    let mapping = core(pack_proposed(&unet, spec))?;
    Ok((unet, mapping))
}

fn fixture_reproduction() -> Check {
    let net = fig5();
    let spec = CrossbarSpec::new(4).unwrap();
    let baseline = core(map_baseline(&net, &spec))?;
    let (_, proposed) = fig5_proposed(&spec)?;
    let b = (baseline.crossbar_count(), baseline.dropped_synapses.len());
    let p = (proposed.crossbar_count(), proposed.dropped_synapses.len());
    ensure(b == (3, 1) && p == (2, 0), || {
        format!("baseline {b:?}, proposed {p:?}")
    })?;
    ensure(baseline.dropped_synapses[0].src == FIG5_X6, || {
        "baseline dropped the wrong synapse".into()
    })?;
    Ok(format!(
        "baseline {} crossbars / {} dropped, proposed {} / {}",
        b.0, b.1, p.0, p.1
    ))
}

fn fit_count_law() -> Check {
    let mut neurons = 0;
    for seed in 0..1000 {
        let net = instance(seed);
        let unet = core(unroll_network(&net))?;
        let mut total = 0;
        for (id, m) in net.fanins() {
            if net.neuron(id).unwrap().kind == NeuronKind::Input {
                continue;
            }
            total += m.saturating_sub(1);
            if m >= 2 {
                neurons += 1;
                let chain = unet.chain(id).count();
                ensure(chain == m - 1, || {
                    format!("seed {seed}: neuron {id} fanin {m} gave {chain} units")
                })?;
            }
        }
        ensure(fit_unit_count(&net) == total, || {
            format!("seed {seed}: unit count")
        })?;
    }
    Ok(format!("1000 networks, {neurons} neurons with fanin >= 2"))
}

fn synapse_conservation() -> Check {
    let mut checked = 0;
    for seed in 0..1000 {
        let net = instance(seed);
        let original = original_multiset(&net);
        let unet = core(unroll_network(&net))?;
        ensure(flattened_multiset(&unet) == original, || {
            format!("seed {seed}: unroll")
        })?;
        for n in [4, 8, 16] {
            let r = core(recombine(&unet, n - 1))?;
            ensure(flattened_multiset(&r) == original, || {
                format!("seed {seed}: recombine at n={n}")
            })?;
            let spec = CrossbarSpec::new(n).unwrap();
            let m = core(pack_proposed(&r, &spec))?;
            ensure(m.dropped_synapses.is_empty(), || {
                format!("seed {seed}: proposed dropped synapses")
            })?;
            let report = verify_mapping(&m, MappingSource::Units(&r), &spec);
            ensure(report.is_valid(), || {
                format!("seed {seed} n={n}: {:?}", report.violations)
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} unroll/recombine/pack runs conserve every synapse"
    ))
}

fn denormalized(
    net: &Network,
    batch: &[RateVector],
) -> Result<(Vec<RateVector>, Vec<RateVector>), String> {
    let sim = SimConfig::default();
    let (unet, _) = fitmap::pipeline::normalized_units(net, batch, 1.0, Default::default(), Default::default(), &sim)
        .map_err(|e| e.to_string())?;
    let reference = simulate_batch(net, batch, &sim).map_err(|e| e.to_string())?;
    let units = simulate_batch(&unet.to_network(), batch, &sim).map_err(|e| e.to_string())?;
    Ok((
        reference,
        units.iter().map(|r| unet.denormalize(r)).collect(),
    ))
}

fn functional_equivalence() -> Check {
    let mut worst = 0.0f64;
    let mut check = |net: &Network, seed: u64| -> Result<(), String> {
        let mut net = net.clone();
        net.disable_saturation();
        let batch = random_batch(&net, 4, seed);
        let (reference, test) = denormalized(&net, &batch)?;
        let ids: Vec<NodeId> = net.neurons.iter().map(|n| n.id).collect();
        for (a, b) in reference.iter().zip(&test) {
            let e = core(rate_error(a, b, &ids))?.max_rel_error;
            worst = worst.max(e);
            ensure(e <= 1e-6, || {
                format!(
                    "{} seed {seed}: relative error {e:e}",
                    net.metadata.topology
                )
            })?;
        }
        Ok(())
    };
    for seed in 0..100u64 {
        let s = seed as usize;
        let layers = [4 + s % 60, 3 + (s * 13) % 90, 2 + s % 10];
        check(
            &generate_feedforward(&layers, WeightSampler::default(), seed).unwrap(),
            seed,
        )?;
    }
    for seed in 0..20u64 {
        let sampler = WeightSampler::FaninScaled {
            low: 0.0,
            high: 0.9,
        };
        check(
            &generate_reservoir(20 + seed as usize * 4, 0.1, sampler, seed).unwrap(),
            seed,
        )?;
    }

    let mut matched = 0;
    for seed in 0..20u64 {
        let net = generate_feedforward(&[40, 25, 6], WeightSampler::default(), seed).unwrap();
        let batch = random_batch(&net, 16, seed);
        let (reference, test) = denormalized(&net, &batch)?;
        let f = core(fidelity(&reference, &test, &output_ids(&net)))?;
        ensure(f.argmax_match_rate == 1.0, || {
            format!("seed {seed}: argmax match {}", f.argmax_match_rate)
        })?;
        matched += 1;
    }
    Ok(format!("100 feedforward + 20 reservoirs, worst error {worst:.1e}; argmax 100% on {matched} saturating nets"))
}

fn capacity_safety() -> Check {
    let mut mappings = 0;
    for seed in 0..1000 {
        let net = instance(seed);
        let unet = core(unroll_network(&net))?;
        for n in [4, 8, 16, 128] {
            let spec = CrossbarSpec::new(n).unwrap();
            let b = core(map_baseline(&net, &spec))?;
            let report = verify_mapping(&b, MappingSource::Network(&net), &spec);
            ensure(report.is_valid(), || {
                format!("baseline seed {seed} n={n}: {:?}", report.violations)
            })?;
            let r = core(recombine(&unet, n - 1))?;
            let p = core(pack_proposed(&r, &spec))?;
            let report = verify_mapping(&p, MappingSource::Units(&r), &spec);
            ensure(report.is_valid(), || {
                format!("proposed seed {seed} n={n}: {:?}", report.violations)
            })?;
            mappings += 2;
        }
    }
    Ok(format!("{mappings} mappings verified"))
}

fn greedy_vs_optimal() -> Check {
    let spec = CrossbarSpec::new(4).unwrap();
    let (unet, greedy) = fig5_proposed(&spec)?;
    let optimal = core(optimal_pack(&unet, &spec, DEFAULT_OPTIMAL_LIMIT))?;
    ensure(greedy.crossbar_count() == optimal.crossbar_count(), || {
        format!(
            "fixture: greedy {} vs optimal {}",
            greedy.crossbar_count(),
            optimal.crossbar_count()
        )
    })?;

    let (mut instances, mut gaps) = (0, 0);
    for seed in 0..3000 {
        let s = seed as usize;
        let layers = [2 + s % 7, 1 + s % 3];
        let net = generate_feedforward(
            &layers,
            WeightSampler::Uniform {
                low: 0.0,
                high: 1.0,
            },
            seed,
        )
        .unwrap();
        let net = prune_weights(&net, (s % 5) as f64 * 0.1).unwrap().network;
        let unet = core(recombine(&core(unroll_network(&net))?, 3))?;
        if unet.units.len() > 6 {
            continue;
        }
        let g = core(pack_proposed(&unet, &spec))?.crossbar_count();
        let o = core(optimal_pack(&unet, &spec, DEFAULT_OPTIMAL_LIMIT))?.crossbar_count();
        ensure(o <= g && g <= o + 1, || {
            format!("seed {seed}: greedy {g} vs optimal {o}")
        })?;
        instances += 1;
        gaps += (g > o) as usize;
    }
    ensure(instances >= 500, || {
        format!("only {instances} small instances")
    })?;
    Ok(format!(
        "{instances} instances, greedy one above optimal on {gaps}; equal on the fixture"
    ))
}

fn directional_claims() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::new(NetworkSource::Feedforward(vec![784, 100, 10]), dir.path());
    cfg.crossbar_n = 128;
    cfg.saturation = false;
    let run = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let (b, p) = (&run.report.baseline, &run.report.proposed);
    ensure(
        p.dropped_synapse_count == 0 && b.dropped_synapse_count == 65_600,
        || {
            format!(
                "dropped: baseline {}, proposed {}",
                b.dropped_synapse_count, p.dropped_synapse_count
            )
        },
    )?;
    ensure(p.synapse_utilization > b.synapse_utilization, || {
        format!(
            "synapse utilization {} vs {}",
            p.synapse_utilization, b.synapse_utilization
        )
    })?;
    ensure(p.wasted_energy < b.wasted_energy, || {
        format!("wasted energy {} vs {}", p.wasted_energy, b.wasted_energy)
    })?;
    ensure(
        b.max_rel_rate_error > 0.0 && p.max_rel_rate_error <= 1e-6,
        || {
            format!(
                "rate error baseline {:e}, proposed {:e}",
                b.max_rel_rate_error, p.max_rel_rate_error
            )
        },
    )?;
    Ok(format!(
        "crossbars {} vs {}, synapse util {:.2}% vs {:.2}%, wasted {:.3e} J vs {:.3e} J, error {:.2e} vs {:.1e}",
        b.crossbar_count,
        p.crossbar_count,
        b.synapse_utilization,
        p.synapse_utilization,
        b.wasted_energy,
        p.wasted_energy,
        b.max_rel_rate_error,
        p.max_rel_rate_error
    ))
}

fn energy_arithmetic() -> Check {
    let em = EnergyModel::default();
    let column = |node: u32| Column {
        node: NodeId(node),
        origin: NodeId(node),
        stage: 1,
        cells: vec![Cell {
            source: NodeId(0),
            weight: 1.0,
        }],
    };
    let edge_mapping = Mapping {
        variant: Variant::Proposed,
        n: 2,
        source_fingerprint: 0,
        crossbars: vec![
            Crossbar {
                inputs: vec![NodeId(0)],
                columns: vec![column(1)],
            },
            Crossbar {
                inputs: vec![NodeId(1)],
                columns: vec![column(2)],
            },
        ],
        edges: vec![InterEdge {
            producer: 0,
            consumer: 1,
            source: NodeId(1),
        }],
        dropped_synapses: vec![],
    };
    let rates: RateVector = [(NodeId(1), 30.0), (NodeId(2), 5.0)].into_iter().collect();
    let e = core(interconnect_energy(&edge_mapping, &rates, 1.0, &em))?;
    ensure(e == 30.0 * 147e-12, || format!("edge energy {e:e}"))?;

    let n = 4u32;
    let full = Crossbar {
        inputs: (0..n).map(NodeId).collect(),
        columns: (0..n)
            .map(|c| Column {
                node: NodeId(10 + c),
                origin: NodeId(10 + c),
                stage: 1,
                cells: (0..n)
                    .map(|i| Cell {
                        source: NodeId(i),
                        weight: 1.0,
                    })
                    .collect(),
            })
            .collect(),
    };
    let full_mapping = Mapping {
        n: n as usize,
        crossbars: vec![full],
        edges: vec![],
        ..edge_mapping
    };
    let w = wasted_energy(&full_mapping, &CrossbarSpec::new(n as usize).unwrap(), &em);
    ensure(w == 0.0, || format!("full crossbar wasted {w:e}"))?;
    Ok(format!(
        "30 Hz edge for 1 s = {e:e} J; full crossbar wastes {w} J"
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = [
        "baseline.map.json",
        "proposed.map.json",
        "compare.report.json",
    ];
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = PipelineConfig::new(
            NetworkSource::Feedforward(vec![64, 48, 10]),
            dir.path().join(run),
        );
        cfg.crossbar_n = 16;
        cfg.seed = 42;
        cfg.epsilon = 0.005;
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(cfg.out.join(f)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        outputs.push(bytes);
    }
    for (i, f) in files.iter().enumerate() {
        ensure(outputs[0][i] == outputs[1][i], || {
            format!("{f} differs between runs")
        })?;
    }
    let total: usize = outputs[0].iter().map(Vec::len).sum();
    Ok(format!(
        "{} files, {total} bytes identical across two runs",
        files.len()
    ))
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Check); 9] = [
        (1, "fixture reproduction", 1, fixture_reproduction),
        (2, "FIT-count law", 10, fit_count_law),
        (3, "synapse conservation", 30, synapse_conservation),
        (4, "functional equivalence", 60, functional_equivalence),
        (5, "capacity safety", 60, capacity_safety),
        (6, "greedy vs optimal", 120, greedy_vs_optimal),
        (
            7,
            "directional claims at 784-100-10",
            120,
            directional_claims,
        ),
        (8, "energy arithmetic", 1, energy_arithmetic),
        (9, "determinism", 60, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (status, detail) = match (&result, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the time limit")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} [{id}] {name}: {detail} ({:.2} s / {limit} s)",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
