//! Fanin decomposition.
//!
//! A neuron with fanin `m` computes `f(sum_i n_i * w_i)`. Unrolling
//! replaces it by a chain of `m - 1` fanin-of-two (FIT) units:
//!
//! ```text
//! u_1 = f(n_1 * w_1 + n_2 * w_2)
//! u_i = f(u_{i-1} + n_{i+1} * w_{i+1})      i = 2..m-1
//! y   = u_{m-1}
//! ```
//!
//! External inputs enter the chain by ascending source id by default, or
//! by descending `|w|` with [`InputOrder::Magnitude`]. Recombination then regroups a chain into subunits whose
//! fanin fits a crossbar column.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Error;
use crate::network::{Metadata, Network, Neuron, NeuronKind, NodeId, Synapse};
use crate::ratesim::RateVector;

/// Order in which a neuron's inputs enter its chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputOrder {
    /// Ascending source id. Every neuron uses the same order, so subunits
    /// of neurons with common inputs read the same lines and can share a
    /// crossbar.
    #[default]
    Source,
    /// Descending `|w|`, ties by source id: the largest terms enter first.
    Magnitude,
}

impl InputOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            InputOrder::Source => "source",
            InputOrder::Magnitude => "magnitude",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "source" => Some(InputOrder::Source),
            "magnitude" => Some(InputOrder::Magnitude),
            _ => None,
        }
    }

    /// Sorts `(source, weight)` pairs into chain entry order.
    pub fn sort(self, fanin: &mut [(NodeId, f64)]) {
        match self {
            InputOrder::Source => fanin.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))),
            InputOrder::Magnitude => fanin.sort_by(|a, b| external_order(*a, *b)),
        }
    }
}

/// Where a unit input comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signal {
    /// An original neuron: an input neuron, or the emitting unit of a
    /// decomposed neuron.
    Neuron(NodeId),
    /// The previous unit of the same chain.
    Unit(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitInput {
    pub source: Signal,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub id: NodeId,
    /// Original neuron this unit helps compute.
    pub origin: NodeId,
    /// 1-based position in the origin's chain.
    pub stage: u32,
    /// Chain input first (if any), then external inputs by source id.
    pub inputs: Vec<UnitInput>,
    pub threshold: f64,
    pub gain: f64,
    pub max_rate: f64,
    /// Factor the unit's current is divided by relative to the original
    /// model; 1 before normalization.
    pub scale: f64,
    /// Part of a chain of a neuron with fanin above two.
    pub decomposed: bool,
}

impl Unit {
    pub fn fanin(&self) -> usize {
        self.inputs.len()
    }

    pub fn chain_input(&self) -> Option<(NodeId, f64)> {
        self.inputs.iter().find_map(|i| match i.source {
            Signal::Unit(u) => Some((u, i.weight)),
            Signal::Neuron(_) => None,
        })
    }

    pub fn externals(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.inputs.iter().filter_map(|i| match i.source {
            Signal::Neuron(n) => Some((n, i.weight)),
            Signal::Unit(_) => None,
        })
    }

    fn as_neuron(&self, kind: NeuronKind) -> Neuron {
        Neuron { id: self.id, kind, threshold: self.threshold, gain: self.gain, max_rate: self.max_rate }
    }
}

/// A network of computation units derived from an original [`Network`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnitNetwork {
    /// Units sorted by `(origin, stage)`; ids increase in the same order.
    pub units: Vec<Unit>,
    /// Input neurons of the original network, kept as rate sources.
    pub inputs: Vec<Neuron>,
    /// Original non-input neuron -> unit that emits its output.
    pub final_unit: BTreeMap<NodeId, NodeId>,
    /// Original fanin of every non-input neuron.
    pub original_fanin: BTreeMap<NodeId, usize>,
    pub outputs: Vec<NodeId>,
    /// Upper bound on unit fanin: 2 after unrolling, the recombination
    /// bound afterwards.
    pub max_fanin: usize,
    pub input_order: InputOrder,
    pub source_fingerprint: u64,
    pub source_metadata: Metadata,
}

impl UnitNetwork {
    pub fn unit(&self, id: NodeId) -> Option<&Unit> {
        self.units.binary_search_by_key(&id, |u| u.id).ok().map(|i| &self.units[i])
    }

    /// Units of one original neuron in chain order.
    pub fn chain(&self, origin: NodeId) -> impl Iterator<Item = &Unit> + '_ {
        self.units.iter().filter(move |u| u.origin == origin)
    }

    pub fn chains(&self) -> BTreeMap<NodeId, Vec<&Unit>> {
        let mut map: BTreeMap<NodeId, Vec<&Unit>> = BTreeMap::new();
        for u in &self.units {
            map.entry(u.origin).or_default().push(u);
        }
        map
    }

    /// Node id that carries a signal in the unit graph.
    pub fn resolve(&self, signal: Signal) -> NodeId {
        match signal {
            Signal::Unit(u) => u,
            Signal::Neuron(n) => self.final_unit.get(&n).copied().unwrap_or(n),
        }
    }

    /// Normalization scale of the node carrying `signal`; 1 for input neurons.
    pub fn source_scale(&self, signal: Signal) -> f64 {
        let node = self.resolve(signal);
        self.unit(node).map_or(1.0, |u| u.scale)
    }

    pub fn chain_link_count(&self) -> usize {
        self.units.iter().filter(|u| u.chain_input().is_some()).count()
    }

    pub fn crosspoint_count(&self) -> usize {
        self.units.iter().map(Unit::fanin).sum()
    }

    /// Per original neuron, its `(source neuron, weight)` inputs in original
    /// weight units (normalization undone), in chain entry order.
    pub fn flattened_synapses(&self) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
        let mut map: BTreeMap<NodeId, Vec<(NodeId, f64)>> =
            self.final_unit.keys().map(|&k| (k, Vec::new())).collect();
        for u in &self.units {
            let list = map.entry(u.origin).or_default();
            for input in &u.inputs {
                if let Signal::Neuron(src) = input.source {
                    let w = if u.scale == 1.0 && self.source_scale(input.source) == 1.0 {
                        input.weight
                    } else {
                        input.weight * u.scale / self.source_scale(input.source)
                    };
                    list.push((src, w));
                }
            }
        }
        map
    }

    /// Rates of the original neurons read off a simulation of
    /// [`UnitNetwork::to_network`]: each emitting unit's rate times its
    /// scale. Input rates pass through.
    pub fn denormalize(&self, unit_rates: &RateVector) -> RateVector {
        let mut out = RateVector::new();
        for n in &self.inputs {
            if let Some(r) = unit_rates.get(n.id) {
                out.insert(n.id, r);
            }
        }
        for (&origin, &unit) in &self.final_unit {
            if let Some(r) = unit_rates.get(unit) {
                let scale = self.unit(unit).map_or(1.0, |u| u.scale);
                out.insert(origin, r * scale);
            }
        }
        out
    }

    /// Product of stage factors that de-normalizes each original neuron.
    pub fn cumulative_factors(&self) -> BTreeMap<NodeId, f64> {
        self.final_unit
            .iter()
            .map(|(&origin, &unit)| (origin, self.unit(unit).map_or(1.0, |u| u.scale)))
            .collect()
    }

    /// Flattens to an ordinary network whose non-input nodes are the units.
    /// Unit annotations go to metadata so the result round-trips through
    /// [`UnitNetwork::from_network`].
    pub fn to_network(&self) -> Network {
        let outputs: alloc::collections::BTreeSet<NodeId> =
            self.outputs.iter().filter_map(|o| self.final_unit.get(o).copied()).collect();
        let mut neurons: Vec<Neuron> = self.inputs.clone();
        let mut synapses = Vec::with_capacity(self.crosspoint_count());
        for u in &self.units {
            let kind = if outputs.contains(&u.id) { NeuronKind::Output } else { NeuronKind::Hidden };
            neurons.push(u.as_neuron(kind));
            for input in &u.inputs {
                synapses.push(Synapse { src: self.resolve(input.source), dst: u.id, weight: input.weight });
            }
        }

        let mut metadata = self.source_metadata.clone();
        let extra = &mut metadata.extra;
        extra.insert("decomposed".into(), "true".into());
        extra.insert("unit.max_fanin".into(), self.max_fanin.to_string());
        extra.insert("unit.input_order".into(), self.input_order.as_str().into());
        extra.insert("source.fingerprint".into(), format!("{:016x}", self.source_fingerprint));
        for (origin, m) in &self.original_fanin {
            extra.insert(format!("fanin.{origin}"), m.to_string());
        }
        for u in &self.units {
            extra.insert(
                format!("unit.{}", u.id),
                format!("{}:{}:{}:{}", u.origin, u.stage, u.scale, u.decomposed as u8),
            );
        }
        Network { neurons, synapses, metadata }
    }

    /// Inverse of [`UnitNetwork::to_network`].
    pub fn from_network(net: &Network) -> Result<Self, Error> {
        let bad = |msg: String| Error::InvalidArgument(format!("not a decomposed network: {msg}"));
        let extra = &net.metadata.extra;
        if extra.get("decomposed").map(String::as_str) != Some("true") {
            return Err(bad("missing decomposed=true".into()));
        }
        let max_fanin = extra
            .get("unit.max_fanin")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("unit.max_fanin".into()))?;
        let order = extra
            .get("unit.input_order")
            .and_then(|s| InputOrder::parse(s))
            .ok_or_else(|| bad("unit.input_order".into()))?;
        let source_fingerprint = extra
            .get("source.fingerprint")
            .and_then(|s| u64::from_str_radix(s, 16).ok())
            .ok_or_else(|| bad("source.fingerprint".into()))?;

        let mut source_metadata = net.metadata.clone();
        source_metadata.extra.retain(|k, _| {
            !(k == "decomposed"
                || k == "unit.max_fanin"
                || k == "source.fingerprint"
                || k.starts_with("unit.")
                || k.starts_with("fanin."))
        });

        let mut original_fanin = BTreeMap::new();
        for (k, v) in extra.range(String::from("fanin.")..) {
            let Some(id) = k.strip_prefix("fanin.") else { break };
            let id: u32 = id.parse().map_err(|_| bad(format!("key {k}")))?;
            let m: usize = v.parse().map_err(|_| bad(format!("key {k}")))?;
            original_fanin.insert(NodeId(id), m);
        }

        let mut inputs = Vec::new();
        let mut units = Vec::new();
        let mut output_units = Vec::new();
        for n in &net.neurons {
            if n.kind == NeuronKind::Input {
                inputs.push(*n);
                continue;
            }
            let note = extra.get(&format!("unit.{}", n.id)).ok_or_else(|| bad(format!("unit.{}", n.id)))?;
            let fields: Vec<&str> = note.split(':').collect();
            if fields.len() != 4 {
                return Err(bad(format!("unit.{} = {note}", n.id)));
            }
            let parse_err = || bad(format!("unit.{} = {note}", n.id));
            let origin = NodeId(fields[0].parse().map_err(|_| parse_err())?);
            let stage: u32 = fields[1].parse().map_err(|_| parse_err())?;
            let scale: f64 = fields[2].parse().map_err(|_| parse_err())?;
            let decomposed = fields[3] == "1";
            if n.kind == NeuronKind::Output {
                output_units.push((origin, n.id));
            }
            units.push(Unit {
                id: n.id,
                origin,
                stage,
                inputs: Vec::new(),
                threshold: n.threshold,
                gain: n.gain,
                max_rate: n.max_rate,
                scale,
                decomposed,
            });
        }
        units.sort_by_key(|u| (u.origin, u.stage));

        let mut final_unit = BTreeMap::new();
        for u in &units {
            final_unit.insert(u.origin, u.id);
        }
        let position: BTreeMap<NodeId, usize> = units.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
        let is_final: alloc::collections::BTreeSet<NodeId> = final_unit.values().copied().collect();

        let mut synapses: Vec<&Synapse> = net.synapses.iter().collect();
        synapses.sort_by_key(|s| (s.dst, s.src));
        for s in synapses {
            let &i = position.get(&s.dst).ok_or_else(|| bad(format!("synapse into input {}", s.dst)))?;
            let source = match position.get(&s.src) {
                Some(&j) if !is_final.contains(&s.src) => {
                    if units[j].origin != units[i].origin {
                        return Err(bad(format!("chain link {}->{} crosses neurons", s.src, s.dst)));
                    }
                    Signal::Unit(s.src)
                }
                Some(&j) => Signal::Neuron(units[j].origin),
                None => Signal::Neuron(s.src),
            };
            units[i].inputs.push(UnitInput { source, weight: s.weight });
        }
        for u in &mut units {
            u.inputs.sort_by(input_order);
        }
        let mut outputs: Vec<NodeId> = output_units.iter().map(|&(o, _)| o).collect();
        outputs.sort();
        Ok(UnitNetwork {
            units,
            inputs,
            final_unit,
            original_fanin,
            outputs,
            max_fanin,
            input_order: order,
            source_fingerprint,
            source_metadata,
        })
    }
}

/// Canonical order of a unit's inputs: chain link first, then externals by
/// source id.
pub(crate) fn input_order(a: &UnitInput, b: &UnitInput) -> core::cmp::Ordering {
    let chain = |s: Signal| !matches!(s, Signal::Unit(_));
    chain(a.source)
        .cmp(&chain(b.source))
        .then(a.source.cmp(&b.source))
        .then(a.weight.total_cmp(&b.weight))
}

fn external_order<S: Ord>(a: (S, f64), b: (S, f64)) -> core::cmp::Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0))
}

/// Incoming synapses of `id` in chain entry order.
fn ordered_fanin(net: &Network, id: NodeId, order: InputOrder) -> Vec<(NodeId, f64)> {
    let mut fanin: Vec<(NodeId, f64)> =
        net.synapses.iter().filter(|s| s.dst == id).map(|s| (s.src, s.weight)).collect();
    order.sort(&mut fanin);
    fanin
}

fn build_chain(neuron: &Neuron, fanin: &[(NodeId, f64)], next_id: &mut u32) -> Vec<Unit> {
    let m = fanin.len();
    let external = |(src, w): (NodeId, f64)| UnitInput { source: Signal::Neuron(src), weight: w };

    if m <= 2 {
        let unit = Unit {
            id: NodeId(*next_id),
            origin: neuron.id,
            stage: 1,
            inputs: {
                let mut inputs: Vec<UnitInput> = fanin.iter().copied().map(external).collect();
                inputs.sort_by(input_order);
                inputs
            },
            threshold: neuron.threshold,
            gain: neuron.gain,
            max_rate: neuron.max_rate,
            scale: 1.0,
            decomposed: false,
        };
        *next_id += 1;
        return alloc::vec![unit];
    }

    let mut units = Vec::with_capacity(m - 1);
    for stage in 1..m {
        let id = NodeId(*next_id);
        *next_id += 1;
        let inputs = if stage == 1 {
            let mut pair = alloc::vec![external(fanin[0]), external(fanin[1])];
            pair.sort_by(input_order);
            pair
        } else {
            let prev = units.last().map(|u: &Unit| u.id).expect("previous stage");
            alloc::vec![UnitInput { source: Signal::Unit(prev), weight: 1.0 }, external(fanin[stage])]
        };
        let last = stage == m - 1;
        units.push(Unit {
            id,
            origin: neuron.id,
            stage: stage as u32,
            inputs,
            threshold: if last { neuron.threshold } else { 0.0 },
            gain: if last { neuron.gain } else { 1.0 },
            max_rate: neuron.max_rate,
            scale: 1.0,
            decomposed: true,
        });
    }
    units
}

fn first_unit_id(net: &Network) -> u32 {
    net.max_id().map_or(0, |id| id.0 + 1)
}

/// Unrolls one neuron into `m - 1` FIT units, inputs in the default
/// [`InputOrder`]. Unit ids start above the largest neuron id of `net`.
pub fn unroll_neuron(net: &Network, neuron_id: NodeId) -> Result<Vec<Unit>, Error> {
    unroll_neuron_with(net, neuron_id, InputOrder::default())
}

pub fn unroll_neuron_with(net: &Network, neuron_id: NodeId, order: InputOrder) -> Result<Vec<Unit>, Error> {
    let neuron = net.neuron(neuron_id).ok_or(Error::UnknownNeuron(neuron_id))?;
    let fanin = ordered_fanin(net, neuron_id, order);
    if fanin.len() < 2 {
        return Err(Error::NothingToUnroll { neuron: neuron_id, fanin: fanin.len() });
    }
    let mut next = first_unit_id(net);
    Ok(build_chain(neuron, &fanin, &mut next))
}

/// Replaces every non-input neuron by its FIT chain. Neurons with fanin at
/// most two become a single pass-through unit.
pub fn unroll_network(net: &Network) -> Result<UnitNetwork, Error> {
    unroll_network_with(net, InputOrder::default())
}

pub fn unroll_network_with(net: &Network, order: InputOrder) -> Result<UnitNetwork, Error> {
    net.validate()?;
    let mut incoming = net.incoming();
    for list in incoming.values_mut() {
        order.sort(list);
    }

    let mut neurons: Vec<&Neuron> = net.neurons.iter().collect();
    neurons.sort_by_key(|n| n.id);

    let mut next = first_unit_id(net);
    let mut units = Vec::new();
    let mut final_unit = BTreeMap::new();
    let mut original_fanin = BTreeMap::new();
    let mut inputs = Vec::new();
    for n in neurons {
        if n.kind == NeuronKind::Input {
            inputs.push(*n);
            continue;
        }
        let fanin = &incoming[&n.id];
        original_fanin.insert(n.id, fanin.len());
        let chain = build_chain(n, fanin, &mut next);
        final_unit.insert(n.id, chain.last().expect("nonempty chain").id);
        units.extend(chain);
    }

    let mut outputs: Vec<NodeId> = net.outputs().map(|n| n.id).collect();
    outputs.sort();
    Ok(UnitNetwork {
        units,
        inputs,
        final_unit,
        original_fanin,
        outputs,
        max_fanin: 2,
        input_order: order,
        source_fingerprint: net.fingerprint(),
        source_metadata: net.metadata.clone(),
    })
}

/// Total FIT units, `sum (m_i - 1)` over non-input neurons. Neurons with
/// fanin 0 contribute nothing.
pub fn fit_unit_count(net: &Network) -> usize {
    net.fanins()
        .into_iter()
        .filter(|(id, _)| net.neuron(*id).is_some_and(|n| n.kind != NeuronKind::Input))
        .map(|(_, m)| m.saturating_sub(1))
        .sum()
}

/// Regroups each FIT chain into sequential subunits of fanin at most
/// `max_fanin`: the first takes `max_fanin` external inputs, every later one
/// the chain link plus `max_fanin - 1` externals.
pub fn recombine(unet: &UnitNetwork, max_fanin: usize) -> Result<UnitNetwork, Error> {
    if max_fanin < 2 {
        return Err(Error::InvalidArgument(format!("max_fanin {max_fanin} must be >= 2")));
    }
    if unet.max_fanin != 2 {
        return Err(Error::InvalidArgument("recombine expects a FIT-unit network".into()));
    }

    let mut units = Vec::with_capacity(unet.units.len());
    for chain in unet.chains().into_values() {
        if chain.len() == 1 {
            units.push(chain[0].clone());
            continue;
        }
        // Stage 1 brings two externals and later stages one each, so every
        // group spans max_fanin - 1 stages.
        let mut prev: Option<NodeId> = None;
        for (g, group) in chain.chunks(max_fanin - 1).enumerate() {
            let last = group.last().expect("nonempty group");

            // Each input is scaled by the chain weights it traverses before
            // reaching the group's last stage.
            let mut downstream = alloc::vec![1.0; group.len()];
            for k in (0..group.len() - 1).rev() {
                let link = group[k + 1].chain_input().map_or(1.0, |(_, w)| w);
                downstream[k] = downstream[k + 1] * link;
            }

            let mut inputs = Vec::with_capacity(max_fanin);
            if let Some(p) = prev {
                let link = group[0].chain_input().map_or(1.0, |(_, w)| w);
                inputs.push(UnitInput { source: Signal::Unit(p), weight: link * downstream[0] });
            }
            for (u, &factor) in group.iter().zip(&downstream) {
                for (src, w) in u.externals() {
                    let weight = if factor == 1.0 { w } else { w * factor };
                    inputs.push(UnitInput { source: Signal::Neuron(src), weight });
                }
            }
            inputs.sort_by(input_order);
            units.push(Unit {
                id: last.id,
                origin: last.origin,
                stage: g as u32 + 1,
                inputs,
                threshold: last.threshold,
                gain: last.gain,
                max_rate: last.max_rate,
                scale: last.scale,
                decomposed: last.decomposed,
            });
            prev = Some(last.id);
        }
    }

    Ok(UnitNetwork { units, max_fanin, ..unet.clone_without_units() })
}

impl UnitNetwork {
    fn clone_without_units(&self) -> UnitNetwork {
        UnitNetwork {
            units: Vec::new(),
            inputs: self.inputs.clone(),
            final_unit: self.final_unit.clone(),
            original_fanin: self.original_fanin.clone(),
            outputs: self.outputs.clone(),
            max_fanin: self.max_fanin,
            input_order: self.input_order,
            source_fingerprint: self.source_fingerprint,
            source_metadata: self.source_metadata.clone(),
        }
    }
}
