//! Hardware cost and fidelity metrics for a mapping.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::mapper::{CrossbarSpec, Mapping, Variant};
use crate::network::{Network, NodeId};
use crate::ratesim::{rate_error, RateVector};

/// Energy constants in joules.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyModel {
    pub e_spike: f64,
    /// Energy of one routed spike between crossbars.
    pub e_route: f64,
    /// Accounting energy of an unused output column.
    pub e_idle_neuron: f64,
    /// Accounting energy of an unused crosspoint.
    pub e_idle_synapse: f64,
    /// Events per second through the switch. Recorded, not used.
    pub switch_bandwidth: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_spike: 50e-12,
            e_route: 147e-12,
            e_idle_neuron: 50e-12,
            e_idle_synapse: 1e-12,
            switch_bandwidth: 1.8e9,
        }
    }
}

impl EnergyModel {
    pub fn check(&self) -> Result<(), Error> {
        let fields = [self.e_spike, self.e_route, self.e_idle_neuron, self.e_idle_synapse, self.switch_bandwidth];
        if fields.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("energy constants must be finite and >= 0: {self:?}")))
        }
    }
}

/// Percentages in `[0, 100]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Utilization {
    pub neuron_util: f64,
    pub synapse_util: f64,
}

pub fn utilization(mapping: &Mapping, spec: &CrossbarSpec) -> Utilization {
    let xbars = mapping.crossbar_count() as f64;
    let n = spec.n as f64;
    if xbars == 0.0 {
        return Utilization { neuron_util: 0.0, synapse_util: 0.0 };
    }
    Utilization {
        neuron_util: 100.0 * mapping.outputs_used() as f64 / (xbars * n),
        synapse_util: 100.0 * mapping.crosspoints_used() as f64 / (xbars * n * n),
    }
}

/// Idle-cell energy summed over allocated crossbars.
pub fn wasted_energy(mapping: &Mapping, spec: &CrossbarSpec, em: &EnergyModel) -> f64 {
    let n = spec.n;
    mapping
        .crossbars
        .iter()
        .map(|x| {
            let idle_neurons = n.saturating_sub(x.outputs_used()) as f64;
            let idle_synapses = (n * n).saturating_sub(x.crosspoints_used()) as f64;
            idle_neurons * em.e_idle_neuron + idle_synapses * em.e_idle_synapse
        })
        .sum()
}

/// Routing energy of inter-crossbar spike traffic over `window` seconds.
pub fn interconnect_energy(mapping: &Mapping, rates: &RateVector, window: f64, em: &EnergyModel) -> Result<f64, Error> {
    let mut total = 0.0;
    for edge in &mapping.edges {
        let rate = rates
            .get(edge.source)
            .ok_or_else(|| Error::InputCoverage(format!("no rate for edge producer {}", edge.source)))?;
        total += rate * window * em.e_route;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fidelity {
    pub max_rel_rate_error: f64,
    pub rate_rmse: f64,
    /// Fraction of samples whose strongest output matches the reference.
    pub argmax_match_rate: f64,
    pub samples: usize,
}

impl Fidelity {
    pub fn exact(samples: usize) -> Self {
        Fidelity { max_rel_rate_error: 0.0, rate_rmse: 0.0, argmax_match_rate: 1.0, samples }
    }
}

/// Index of the largest rate among `outputs`; first wins ties.
pub fn argmax(rates: &RateVector, outputs: &[NodeId]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, id) in outputs.iter().enumerate() {
        let r = rates.get(*id)?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    best.map(|(i, _)| i)
}

/// Output-rate agreement of `test` with `reference`, sample by sample.
pub fn fidelity(reference: &[RateVector], test: &[RateVector], outputs: &[NodeId]) -> Result<Fidelity, Error> {
    if reference.len() != test.len() {
        return Err(Error::InvalidArgument(format!(
            "{} reference samples vs {} test samples",
            reference.len(),
            test.len()
        )));
    }
    let mut max_rel = 0.0f64;
    let mut sq = 0.0;
    let mut matches = 0usize;
    for (r, t) in reference.iter().zip(test) {
        let e = rate_error(r, t, outputs)?;
        max_rel = max_rel.max(e.max_rel_error);
        sq += e.rmse * e.rmse;
        if argmax(r, outputs) == argmax(t, outputs) {
            matches += 1;
        }
    }
    let samples = reference.len();
    let (rate_rmse, argmax_match_rate) = if samples == 0 {
        (0.0, 1.0)
    } else {
        (libm::sqrt(sq / samples as f64), matches as f64 / samples as f64)
    };
    Ok(Fidelity { max_rel_rate_error: max_rel, rate_rmse, argmax_match_rate, samples })
}

/// One side of a comparison.
#[derive(Clone, Copy, Debug)]
pub struct VariantInput<'a> {
    pub mapping: &'a Mapping,
    pub fidelity: Fidelity,
    /// Mean rates of mapped nodes over the batch; drives routing energy.
    pub rates: &'a RateVector,
    /// Chain links realized at crosspoints (0 for the baseline).
    pub chain_links: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariantReport {
    pub variant: Variant,
    pub crossbar_count: usize,
    pub neuron_utilization: f64,
    pub synapse_utilization: f64,
    pub wasted_energy: f64,
    pub interconnect_energy: f64,
    pub total_energy: f64,
    pub inter_crossbar_edges: usize,
    pub crosspoints: usize,
    pub chain_links: usize,
    pub dropped_synapse_count: usize,
    pub max_rel_rate_error: f64,
    pub rate_rmse: f64,
    pub argmax_match_rate: f64,
}

/// Proposed value over baseline value. `None` when the baseline is zero
/// and the proposed value is not.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ratios {
    pub crossbar_count: Option<f64>,
    pub neuron_utilization: Option<f64>,
    pub synapse_utilization: Option<f64>,
    pub wasted_energy: Option<f64>,
    pub interconnect_energy: Option<f64>,
    pub total_energy: Option<f64>,
    pub dropped_synapse_count: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompareReport {
    pub network: String,
    pub source_fingerprint: String,
    pub crossbar_n: usize,
    pub original_synapses: usize,
    pub window_seconds: f64,
    pub energy_model: EnergyModel,
    pub baseline: VariantReport,
    pub proposed: VariantReport,
    pub normalized_to_baseline: Ratios,
}

pub fn ratio(proposed: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        (proposed == 0.0).then_some(1.0)
    } else {
        Some(proposed / baseline)
    }
}

fn variant_report(
    source: &Network,
    spec: &CrossbarSpec,
    input: &VariantInput<'_>,
    em: &EnergyModel,
    window: f64,
) -> Result<VariantReport, Error> {
    let m = input.mapping;
    let expected = source.fingerprint();
    if m.source_fingerprint != expected {
        return Err(Error::SourceMismatch { expected, found: m.source_fingerprint });
    }
    // Every original synapse is either programmed or dropped; chain links
    // add crosspoints of their own.
    let realized = m.crosspoints_used();
    let dropped = m.dropped_synapses.len();
    if realized + dropped != source.synapses.len() + input.chain_links {
        return Err(Error::AccountingMismatch(format!(
            "{} mapping: {realized} crosspoints + {dropped} dropped != {} synapses + {} chain links",
            m.variant,
            source.synapses.len(),
            input.chain_links
        )));
    }
    let util = utilization(m, spec);
    let wasted = wasted_energy(m, spec, em);
    let interconnect = interconnect_energy(m, input.rates, window, em)?;
    Ok(VariantReport {
        variant: m.variant,
        crossbar_count: m.crossbar_count(),
        neuron_utilization: util.neuron_util,
        synapse_utilization: util.synapse_util,
        wasted_energy: wasted,
        interconnect_energy: interconnect,
        total_energy: wasted + interconnect,
        inter_crossbar_edges: m.edges.len(),
        crosspoints: realized,
        chain_links: input.chain_links,
        dropped_synapse_count: dropped,
        max_rel_rate_error: input.fidelity.max_rel_rate_error,
        rate_rmse: input.fidelity.rate_rmse,
        argmax_match_rate: input.fidelity.argmax_match_rate,
    })
}

/// Side-by-side metrics of two mappings of the same network.
pub fn compare_report(
    source: &Network,
    spec: &CrossbarSpec,
    baseline: VariantInput<'_>,
    proposed: VariantInput<'_>,
    em: &EnergyModel,
    window: f64,
) -> Result<CompareReport, Error> {
    em.check()?;
    if !(window >= 0.0 && window.is_finite()) {
        return Err(Error::InvalidArgument(format!("observation window {window} must be >= 0")));
    }
    let b = variant_report(source, spec, &baseline, em, window)?;
    let p = variant_report(source, spec, &proposed, em, window)?;
    let normalized_to_baseline = Ratios {
        crossbar_count: ratio(p.crossbar_count as f64, b.crossbar_count as f64),
        neuron_utilization: ratio(p.neuron_utilization, b.neuron_utilization),
        synapse_utilization: ratio(p.synapse_utilization, b.synapse_utilization),
        wasted_energy: ratio(p.wasted_energy, b.wasted_energy),
        interconnect_energy: ratio(p.interconnect_energy, b.interconnect_energy),
        total_energy: ratio(p.total_energy, b.total_energy),
        dropped_synapse_count: ratio(p.dropped_synapse_count as f64, b.dropped_synapse_count as f64),
    };
    Ok(CompareReport {
        network: source.metadata.name.clone(),
        source_fingerprint: format!("{:016x}", source.fingerprint()),
        crossbar_n: spec.n,
        original_synapses: source.synapses.len(),
        window_seconds: window,
        energy_model: *em,
        baseline: b,
        proposed: p,
        normalized_to_baseline,
    })
}

/// Mean rate per node over a batch of simulations.
pub fn mean_rates(samples: &[RateVector]) -> RateVector {
    let mut sum = RateVector::new();
    for s in samples {
        for (id, r) in s.iter() {
            *sum.0.entry(id).or_insert(0.0) += r;
        }
    }
    let k = samples.len().max(1) as f64;
    sum.0.values_mut().for_each(|v| *v /= k);
    sum
}

/// Outputs of the original network in id order.
pub fn output_ids(net: &Network) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = net.outputs().map(|n| n.id).collect();
    ids.sort();
    ids
}
