//! Per-stage weight normalization of unrolled chains.
//!
//! Activation `a_i = rate(n_i) * w_i` is measured on the original network
//! over a calibration batch. By default every stage is scaled by the
//! largest current it receives,
//!
//! ```text
//! p_1 = a_1 + a_2
//! p_j = max(0, p_{j-1}) + a_{j+1}
//! S^j = k * max(p_j)
//! ```
//!
//! so no unit's input exceeds `1 / k`. [`FactorRule::Synapse`] instead uses
//! `k * max(a_{j+1})` for `j > 1`, which leaves late, small-weight stages
//! with tiny factors and large normalized currents.
//!
//! and every edge into unit `j` is rescaled to `w * s_src / S^j`, where
//! `s_src` is the factor of the producing node (1 for input neurons). The
//! external weights therefore become `w_i / S^j` and the chain edge
//! `S^{j-1} / S^j`, so each unit fires at its original partial activation
//! divided by its own factor.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::decompose::{input_order, InputOrder, UnitNetwork};
use crate::error::Error;
use crate::network::{Network, NeuronKind, NodeId};
use crate::ratesim::{simulate, RateVector, SimConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronActivation {
    /// Presynaptic neurons in chain entry order.
    pub sources: Vec<NodeId>,
    pub weights: Vec<f64>,
    /// Batch maximum of `rate(source) * weight`, per source.
    pub max_activation: Vec<f64>,
    /// Batch maximum of `a_1 + a_2`.
    pub max_pair: f64,
    /// Batch maximum of the rectified partial sum reaching each stage.
    pub max_partial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationStats {
    /// Every non-input neuron with fanin of at least two.
    pub neurons: BTreeMap<NodeId, NeuronActivation>,
    pub samples: usize,
    pub input_order: InputOrder,
}

/// Simulates the original network on every sample and records activation
/// maxima in the default chain entry order.
pub fn collect_activation_stats(
    net: &Network,
    batch: &[RateVector],
    cfg: &SimConfig,
) -> Result<ActivationStats, Error> {
    collect_activation_stats_with(net, batch, cfg, InputOrder::default())
}

pub fn collect_activation_stats_with(
    net: &Network,
    batch: &[RateVector],
    cfg: &SimConfig,
    order: InputOrder,
) -> Result<ActivationStats, Error> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("calibration batch is empty".into()));
    }
    let mut neurons: BTreeMap<NodeId, NeuronActivation> = BTreeMap::new();
    let mut incoming = net.incoming();
    for n in &net.neurons {
        if n.kind == NeuronKind::Input {
            continue;
        }
        let list = incoming.get_mut(&n.id).expect("every neuron has an entry");
        if list.len() < 2 {
            continue;
        }
        order.sort(list);
        neurons.insert(
            n.id,
            NeuronActivation {
                sources: list.iter().map(|p| p.0).collect(),
                weights: list.iter().map(|p| p.1).collect(),
                max_activation: alloc::vec![f64::NEG_INFINITY; list.len()],
                max_pair: f64::NEG_INFINITY,
                max_partial: alloc::vec![f64::NEG_INFINITY; list.len() - 1],
            },
        );
    }

    for (sample, inputs) in batch.iter().enumerate() {
        let out = simulate(net, inputs, cfg)?;
        if !out.converged {
            return Err(Error::NotConverged { sample, residual: out.residual });
        }
        for act in neurons.values_mut() {
            let mut partial = 0.0f64;
            for (i, (&src, &w)) in act.sources.iter().zip(&act.weights).enumerate() {
                let a = out.rates.get(src).unwrap_or(0.0) * w;
                if a > act.max_activation[i] {
                    act.max_activation[i] = a;
                }
                partial = if i == 1 { partial + a } else { partial.max(0.0) + a };
                if i == 1 && partial > act.max_pair {
                    act.max_pair = partial;
                }
                if i >= 1 && partial > act.max_partial[i - 1] {
                    act.max_partial[i - 1] = partial;
                }
            }
        }
    }
    Ok(ActivationStats { neurons, samples: batch.len(), input_order: order })
}

/// Which batch maximum sets the factor of stages after the first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FactorRule {
    /// Largest current reaching the stage.
    #[default]
    PartialSum,
    /// Largest activation of the stage's single external synapse.
    Synapse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationPlan {
    /// Factor of every FIT stage, keyed by origin neuron; index 0 is stage 1.
    pub factors: BTreeMap<NodeId, Vec<f64>>,
    pub k: f64,
    /// Chain entry order the stage indices refer to.
    pub input_order: InputOrder,
    /// Stages whose activation maximum was not positive and got factor 1.
    pub warnings: Vec<(NodeId, u32)>,
}

impl NormalizationPlan {
    pub fn factor(&self, origin: NodeId, stage: u32) -> Option<f64> {
        let stage = (stage as usize).checked_sub(1)?;
        self.factors.get(&origin)?.get(stage).copied()
    }
}

/// Stage factors for every neuron with fanin above two, by the default
/// [`FactorRule`].
pub fn normalization_factors(stats: &ActivationStats, k: f64) -> Result<NormalizationPlan, Error> {
    normalization_factors_with(stats, k, FactorRule::default())
}

pub fn normalization_factors_with(
    stats: &ActivationStats,
    k: f64,
    rule: FactorRule,
) -> Result<NormalizationPlan, Error> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("scaling k = {k} must be positive")));
    }
    let mut factors = BTreeMap::new();
    let mut warnings = Vec::new();
    for (&origin, act) in &stats.neurons {
        let m = act.sources.len();
        if m <= 2 {
            continue;
        }
        let mut stage_factors = Vec::with_capacity(m - 1);
        for stage in 1..m {
            let max = match (stage, rule) {
                (1, _) => act.max_pair,
                (_, FactorRule::PartialSum) => act.max_partial[stage - 1],
                (_, FactorRule::Synapse) => act.max_activation[stage],
            };
            let s = k * max;
            if s > 0.0 && s.is_finite() {
                stage_factors.push(s);
            } else {
                warnings.push((origin, stage as u32));
                stage_factors.push(1.0);
            }
        }
        factors.insert(origin, stage_factors);
    }
    Ok(NormalizationPlan { factors, k, input_order: stats.input_order, warnings })
}

/// Rescales a FIT-unit network by `plan`. Units that are not part of a
/// decomposed chain keep factor 1; edges they receive from normalized
/// neurons are still corrected by the producer's factor.
pub fn apply_normalization(unet: &UnitNetwork, plan: &NormalizationPlan) -> Result<UnitNetwork, Error> {
    if unet.max_fanin != 2 {
        return Err(Error::InvalidArgument("normalization applies to FIT-unit networks".into()));
    }
    if unet.input_order != plan.input_order {
        return Err(Error::InvalidArgument(format!(
            "factors were measured in {} order, units are in {} order",
            plan.input_order.as_str(),
            unet.input_order.as_str()
        )));
    }
    let mut new_scale: BTreeMap<NodeId, f64> = BTreeMap::new();
    for u in &unet.units {
        let c = if u.decomposed {
            plan.factor(u.origin, u.stage).ok_or(Error::MissingFactor { unit: u.id })?
        } else {
            1.0
        };
        new_scale.insert(u.id, c);
    }
    let scale_of = |node: NodeId| new_scale.get(&node).copied().unwrap_or(1.0);

    let mut out = unet.clone();
    for u in &mut out.units {
        let c_old = u.scale;
        let c_new = scale_of(u.id);
        for input in &mut u.inputs {
            let s_old = unet.source_scale(input.source);
            let s_new = scale_of(unet.resolve(input.source));
            let original = if c_old == 1.0 && s_old == 1.0 { input.weight } else { input.weight * c_old / s_old };
            input.weight = original * s_new / c_new;
        }
        u.inputs.sort_by(input_order);
        u.threshold = u.threshold * c_old / c_new;
        u.scale = c_new;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::unroll_network;
    use crate::network::{Neuron, Synapse};
    use alloc::vec;

    fn fanin3() -> Network {
        // Source order and magnitude order agree: 0.5, 0.4, 0.3.
        Network::new(
            vec![
                Neuron::new(0, NeuronKind::Input),
                Neuron::new(1, NeuronKind::Input),
                Neuron::new(2, NeuronKind::Input),
                Neuron::new(3, NeuronKind::Output),
            ],
            vec![Synapse::new(0, 3, 0.5), Synapse::new(1, 3, 0.4), Synapse::new(2, 3, 0.3)],
        )
    }

    fn rates(v: &[f64]) -> RateVector {
        v.iter().enumerate().map(|(i, &r)| (NodeId(i as u32), r)).collect()
    }

    #[test]
    fn single_synapse_activation() {
        let net = Network::new(
            vec![Neuron::new(0, NeuronKind::Input), Neuron::new(1, NeuronKind::Input), Neuron::new(2, NeuronKind::Output)],
            vec![Synapse::new(0, 2, 2.0), Synapse::new(1, 2, 1.0)],
        );
        let stats = collect_activation_stats(&net, &[rates(&[10.0, 0.0])], &SimConfig::default()).unwrap();
        let act = &stats.neurons[&NodeId(2)];
        assert_eq!(act.max_activation[0], 20.0);
        assert_eq!(act.max_pair, 20.0);
    }

    #[test]
    fn partial_sums_rectified() {
        let net = Network::new(
            vec![
                Neuron::new(0, NeuronKind::Input),
                Neuron::new(1, NeuronKind::Input),
                Neuron::new(2, NeuronKind::Input),
                Neuron::new(3, NeuronKind::Output),
            ],
            vec![Synapse::new(0, 3, -1.0), Synapse::new(1, 3, 0.5), Synapse::new(2, 3, 0.25)],
        );
        let stats = collect_activation_stats(&net, &[rates(&[10.0, 4.0, 8.0])], &SimConfig::default()).unwrap();
        let act = &stats.neurons[&NodeId(3)];
        assert_eq!(act.max_pair, -8.0);
        assert_eq!(act.max_partial, vec![-8.0, 2.0]);
    }

    #[test]
    fn zero_batch_degenerates_to_unit_factors() {
        let net = fanin3();
        let stats = collect_activation_stats(&net, &[rates(&[0.0, 0.0, 0.0])], &SimConfig::default()).unwrap();
        assert!(stats.neurons[&NodeId(3)].max_activation.iter().all(|&a| a == 0.0));
        let plan = normalization_factors(&stats, 1.0).unwrap();
        assert_eq!(plan.factors[&NodeId(3)], vec![1.0, 1.0]);
        assert_eq!(plan.warnings.len(), 2);
    }

    #[test]
    fn factor_formula() {
        let mut neurons = BTreeMap::new();
        neurons.insert(
            NodeId(9),
            NeuronActivation {
                sources: vec![NodeId(0), NodeId(1), NodeId(2)],
                weights: vec![1.0, 1.0, 1.0],
                max_activation: vec![1.5, 1.0, 4.0],
                max_pair: 2.0,
                max_partial: vec![2.0, 5.0],
            },
        );
        let stats = ActivationStats { neurons, samples: 1, input_order: InputOrder::Magnitude };
        let plan = normalization_factors(&stats, 1.0).unwrap();
        assert_eq!(plan.factor(NodeId(9), 1), Some(2.0));
        assert_eq!(plan.factor(NodeId(9), 2), Some(5.0));
        let plan = normalization_factors_with(&stats, 0.5, FactorRule::Synapse).unwrap();
        assert_eq!(plan.factor(NodeId(9), 2), Some(2.0));
        assert!(normalization_factors(&stats, 0.0).is_err());
    }

    fn plan_for(origin: NodeId, factors: Vec<f64>) -> NormalizationPlan {
        NormalizationPlan {
            factors: [(origin, factors)].into_iter().collect(),
            k: 1.0,
            input_order: InputOrder::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn weights_divided_by_stage_factor() {
        let unet = unroll_network(&fanin3()).unwrap();
        let normalized = apply_normalization(&unet, &plan_for(NodeId(3), vec![2.0, 4.0])).unwrap();
        let u1 = &normalized.units[0];
        assert_eq!(u1.externals().collect::<Vec<_>>(), vec![(NodeId(0), 0.25), (NodeId(1), 0.2)]);
        let u2 = &normalized.units[1];
        assert_eq!(u2.externals().collect::<Vec<_>>(), vec![(NodeId(2), 0.3 / 4.0)]);
        // The chain edge carries the producer's factor back in.
        assert_eq!(u2.chain_input().unwrap().1, 2.0 / 4.0);
    }

    #[test]
    fn chain_edge_with_unit_first_factor() {
        let unet = unroll_network(&fanin3()).unwrap();
        let normalized = apply_normalization(&unet, &plan_for(NodeId(3), vec![1.0, 4.0])).unwrap();
        assert_eq!(normalized.units[1].chain_input().unwrap().1, 0.25);
    }

    #[test]
    fn missing_factor_names_unit() {
        let unet = unroll_network(&fanin3()).unwrap();
        let err = apply_normalization(&unet, &plan_for(NodeId(3), vec![2.0])).unwrap_err();
        assert_eq!(err, Error::MissingFactor { unit: unet.units[1].id });
    }

    #[test]
    fn factors_ignore_batch_order() {
        let net = fanin3();
        let batch: Vec<RateVector> = (0..5).map(|i| rates(&[i as f64, 10.0 - i as f64, 3.0 * i as f64])).collect();
        let mut reversed = batch.clone();
        reversed.reverse();
        let a = normalization_factors(&collect_activation_stats(&net, &batch, &SimConfig::default()).unwrap(), 1.0).unwrap();
        let b = normalization_factors(&collect_activation_stats(&net, &reversed, &SimConfig::default()).unwrap(), 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(collect_activation_stats(&fanin3(), &[], &SimConfig::default()).is_err());
    }
}
