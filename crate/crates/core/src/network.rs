//! Spiking network graph model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;

/// Identifier of a node: a neuron in a [`Network`] or a unit in a
/// decomposed network. Unit ids are allocated above the neuron ids of the
/// network they were derived from, so both live in one space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum NeuronKind {
    /// Rate source without threshold dynamics.
    Input,
    Hidden,
    Output,
}

impl NeuronKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NeuronKind::Input => "input",
            NeuronKind::Hidden => "hidden",
            NeuronKind::Output => "output",
        }
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.0;
pub const DEFAULT_GAIN: f64 = 1.0;
pub const DEFAULT_MAX_RATE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neuron {
    pub id: NodeId,
    pub kind: NeuronKind,
    /// Current below which the neuron stays silent.
    pub threshold: f64,
    /// Rate per unit of supra-threshold current.
    pub gain: f64,
    /// Saturation rate in Hz. `f64::INFINITY` disables saturation.
    pub max_rate: f64,
}

impl Neuron {
    pub fn new(id: impl Into<NodeId>, kind: NeuronKind) -> Self {
        Neuron {
            id: id.into(),
            kind,
            threshold: DEFAULT_THRESHOLD,
            gain: DEFAULT_GAIN,
            max_rate: DEFAULT_MAX_RATE,
        }
    }

    pub fn with_params(mut self, threshold: f64, gain: f64, max_rate: f64) -> Self {
        self.threshold = threshold;
        self.gain = gain;
        self.max_rate = max_rate;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Synapse {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

impl Synapse {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>, weight: f64) -> Self {
        Synapse { src: src.into(), dst: dst.into(), weight }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub name: String,
    /// Free-form topology tag, e.g. `feedforward(784,100,10)`.
    pub topology: String,
    pub seed: Option<u64>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Network {
    pub neurons: Vec<Neuron>,
    pub synapses: Vec<Synapse>,
    pub metadata: Metadata,
}

impl Network {
    pub fn new(neurons: Vec<Neuron>, synapses: Vec<Synapse>) -> Self {
        Network { neurons, synapses, metadata: Metadata::default() }
    }

    pub fn neuron(&self, id: NodeId) -> Option<&Neuron> {
        self.neurons.iter().find(|n| n.id == id)
    }

    /// Map from neuron id to its position in `neurons`.
    pub fn index(&self) -> BTreeMap<NodeId, usize> {
        self.neurons.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Neuron> + '_ {
        self.neurons.iter().filter(|n| n.kind == NeuronKind::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Neuron> + '_ {
        self.neurons.iter().filter(|n| n.kind == NeuronKind::Output)
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.neurons.iter().map(|n| n.id).max()
    }

    /// Fanin of every neuron, zero included.
    pub fn fanins(&self) -> BTreeMap<NodeId, usize> {
        let mut fanin: BTreeMap<NodeId, usize> =
            self.neurons.iter().map(|n| (n.id, 0)).collect();
        for s in &self.synapses {
            if let Some(c) = fanin.get_mut(&s.dst) {
                *c += 1;
            }
        }
        fanin
    }

    pub fn fanin(&self, id: NodeId) -> usize {
        self.synapses.iter().filter(|s| s.dst == id).count()
    }

    /// Incoming `(src, weight)` lists keyed by destination, in synapse order.
    pub fn incoming(&self) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
        let mut map: BTreeMap<NodeId, Vec<(NodeId, f64)>> =
            self.neurons.iter().map(|n| (n.id, Vec::new())).collect();
        for s in &self.synapses {
            map.entry(s.dst).or_default().push((s.src, s.weight));
        }
        map
    }

    /// Sorts neurons by id and synapses by `(src, dst)`.
    pub fn canonicalize(&mut self) {
        self.neurons.sort_by_key(|n| n.id);
        self.synapses.sort_by_key(|s| (s.src, s.dst));
    }

    /// Order-independent 64-bit FNV-1a digest of neurons and synapses.
    /// Metadata is excluded.
    pub fn fingerprint(&self) -> u64 {
        let mut neurons: Vec<&Neuron> = self.neurons.iter().collect();
        neurons.sort_by_key(|n| n.id);
        let mut synapses: Vec<&Synapse> = self.synapses.iter().collect();
        synapses.sort_by_key(|s| (s.src, s.dst));

        let mut h = Fnv::new();
        h.write_u64(neurons.len() as u64);
        for n in neurons {
            h.write_u64(n.id.0 as u64);
            h.write_u64(n.kind as u64);
            h.write_u64(n.threshold.to_bits());
            h.write_u64(n.gain.to_bits());
            h.write_u64(n.max_rate.to_bits());
        }
        h.write_u64(synapses.len() as u64);
        for s in synapses {
            h.write_u64(s.src.0 as u64);
            h.write_u64(s.dst.0 as u64);
            h.write_u64(s.weight.to_bits());
        }
        h.finish()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let report = validate_network(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(report))
        }
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateNeuron(NodeId),
    DanglingEndpoint { src: NodeId, dst: NodeId, missing: NodeId },
    ParallelSynapse { src: NodeId, dst: NodeId },
    InputWithFanin { id: NodeId, fanin: usize },
    InvalidParameter { id: NodeId, field: &'static str, value: f64 },
    NonFiniteWeight { src: NodeId, dst: NodeId },
    NoInputs,
    NoOutputs,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNeuron(id) => write!(f, "duplicate neuron id {id}"),
            Violation::DanglingEndpoint { src, dst, missing } => {
                write!(f, "dangling endpoint: synapse {src}->{dst} references missing neuron {missing}")
            }
            Violation::ParallelSynapse { src, dst } => {
                write!(f, "parallel synapse {src}->{dst}")
            }
            Violation::InputWithFanin { id, fanin } => {
                write!(f, "input neuron {id} has fanin {fanin}")
            }
            Violation::InvalidParameter { id, field, value } => {
                write!(f, "neuron {id}: invalid {field} {value}")
            }
            Violation::NonFiniteWeight { src, dst } => {
                write!(f, "synapse {src}->{dst} has a non-finite weight")
            }
            Violation::NoInputs => f.write_str("network has no input neuron"),
            Violation::NoOutputs => f.write_str("network has no output neuron"),
        }
    }
}

/// Every invariant violation found in a network. Empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_network(net: &Network) -> ValidationReport {
    let mut violations = Vec::new();

    let mut ids = BTreeMap::new();
    for n in &net.neurons {
        if ids.insert(n.id, n.kind).is_some() {
            violations.push(Violation::DuplicateNeuron(n.id));
        }
        // NaN fails every comparison, so test the accepted ranges positively.
        if !(n.threshold >= 0.0 && n.threshold.is_finite()) {
            violations.push(Violation::InvalidParameter { id: n.id, field: "threshold", value: n.threshold });
        }
        if !(n.gain > 0.0 && n.gain.is_finite()) {
            violations.push(Violation::InvalidParameter { id: n.id, field: "gain", value: n.gain });
        }
        if !(n.max_rate > 0.0) {
            violations.push(Violation::InvalidParameter { id: n.id, field: "max_rate", value: n.max_rate });
        }
    }

    let mut pairs = BTreeSet::new();
    let mut input_fanin: BTreeMap<NodeId, usize> = BTreeMap::new();
    for s in &net.synapses {
        for end in [s.src, s.dst] {
            if !ids.contains_key(&end) {
                violations.push(Violation::DanglingEndpoint { src: s.src, dst: s.dst, missing: end });
            }
        }
        if !pairs.insert((s.src, s.dst)) {
            violations.push(Violation::ParallelSynapse { src: s.src, dst: s.dst });
        }
        if !s.weight.is_finite() {
            violations.push(Violation::NonFiniteWeight { src: s.src, dst: s.dst });
        }
        if ids.get(&s.dst) == Some(&NeuronKind::Input) {
            *input_fanin.entry(s.dst).or_default() += 1;
        }
    }
    for (id, fanin) in input_fanin {
        violations.push(Violation::InputWithFanin { id, fanin });
    }

    if !ids.values().any(|k| *k == NeuronKind::Input) {
        violations.push(Violation::NoInputs);
    }
    if !ids.values().any(|k| *k == NeuronKind::Output) {
        violations.push(Violation::NoOutputs);
    }

    ValidationReport { violations }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaninStats {
    /// fanin -> number of non-input neurons with that fanin.
    pub histogram: BTreeMap<usize, usize>,
    pub non_input: usize,
    pub exceeding: usize,
    pub fraction_exceeding: f64,
    pub max_fanin: usize,
}

/// Fanin histogram over non-input neurons and the fraction whose fanin
/// exceeds `limit`.
pub fn fanin_stats(net: &Network, limit: usize) -> Result<FaninStats, Error> {
    if limit == 0 {
        return Err(Error::InvalidArgument("fanin limit must be at least 1".into()));
    }
    let fanins = net.fanins();
    let mut histogram = BTreeMap::new();
    let mut non_input = 0;
    let mut exceeding = 0;
    let mut max_fanin = 0;
    for n in net.neurons.iter().filter(|n| n.kind != NeuronKind::Input) {
        let m = fanins.get(&n.id).copied().unwrap_or(0);
        *histogram.entry(m).or_insert(0) += 1;
        non_input += 1;
        max_fanin = max_fanin.max(m);
        if m > limit {
            exceeding += 1;
        }
    }
    let fraction_exceeding = if non_input == 0 { 0.0 } else { exceeding as f64 / non_input as f64 };
    Ok(FaninStats { histogram, non_input, exceeding, fraction_exceeding, max_fanin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chain3() -> Network {
        Network::new(
            vec![
                Neuron::new(0, NeuronKind::Input),
                Neuron::new(1, NeuronKind::Hidden),
                Neuron::new(2, NeuronKind::Output),
            ],
            vec![Synapse::new(0, 1, 1.0), Synapse::new(1, 2, 0.5)],
        )
    }

    #[test]
    fn well_formed_chain_is_valid() {
        assert!(validate_network(&chain3()).is_valid());
    }

    #[test]
    fn dangling_endpoint_reported() {
        let mut net = chain3();
        net.synapses.push(Synapse::new(1, 99, 1.0));
        let report = validate_network(&net);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::DanglingEndpoint { missing: NodeId(99), .. }
        ));
        assert!(std::format!("{}", report.violations[0]).contains("dangling endpoint"));
    }

    #[test]
    fn parallel_synapse_reported() {
        let mut net = chain3();
        net.synapses.push(Synapse::new(1, 2, 0.25));
        let report = validate_network(&net);
        assert_eq!(report.violations, vec![Violation::ParallelSynapse { src: NodeId(1), dst: NodeId(2) }]);
    }

    #[test]
    fn input_fanin_and_params() {
        let mut net = chain3();
        net.synapses.push(Synapse::new(2, 0, 1.0));
        net.neurons[1].gain = 0.0;
        net.neurons[2].max_rate = f64::NAN;
        let report = validate_network(&net);
        assert_eq!(report.violations.len(), 3);
    }

    #[test]
    fn missing_io_kinds() {
        let net = Network::new(vec![Neuron::new(0, NeuronKind::Hidden)], vec![]);
        let report = validate_network(&net);
        assert_eq!(report.violations, vec![Violation::NoInputs, Violation::NoOutputs]);
    }

    #[test]
    fn fanin_fraction_with_mixed_fanins() {
        // Output fanins 5, 4 and 3 over six shared inputs.
        let mut neurons: Vec<Neuron> = (0..6).map(|i| Neuron::new(i, NeuronKind::Input)).collect();
        neurons.extend((6..9).map(|i| Neuron::new(i, NeuronKind::Output)));
        let mut synapses = Vec::new();
        for s in 0..5 {
            synapses.push(Synapse::new(s, 6, 1.0));
        }
        for s in 1..5 {
            synapses.push(Synapse::new(s, 7, 1.0));
        }
        for s in 0..3 {
            synapses.push(Synapse::new(s, 8, 1.0));
        }
        let net = Network::new(neurons, synapses);
        let stats = fanin_stats(&net, 4).unwrap();
        assert_eq!(stats.fraction_exceeding, 1.0 / 3.0);
        assert_eq!(stats.histogram.values().sum::<usize>(), 3);
        let at_max = fanin_stats(&net, stats.max_fanin).unwrap();
        assert_eq!(at_max.fraction_exceeding, 0.0);
        assert!(fanin_stats(&net, 0).is_err());
    }

    #[test]
    fn fingerprint_ignores_order_and_metadata() {
        let a = chain3();
        let mut b = chain3();
        b.synapses.reverse();
        b.neurons.reverse();
        b.metadata.name = "other".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.synapses[0].weight = 0.75;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
