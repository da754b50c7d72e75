//! Assignment of computation units to `n x n` crossbars.
//!
//! A crossbar has `n` input lines shared by all of its `n` output columns.
//! A unit fits a crossbar when the union of the crossbar's lines and the
//! unit's sources stays within `n` and a column is free. Both mappers run
//! first-fit-decreasing over items sorted by `(fanin desc, origin, stage)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::decompose::UnitNetwork;
use crate::error::Error;
use crate::network::{Network, NeuronKind, NodeId, Synapse};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossbarSpec {
    /// Input lines and output columns per crossbar.
    pub n: usize,
    pub crossbar_budget: Option<usize>,
}

impl CrossbarSpec {
    pub fn new(n: usize) -> Result<Self, Error> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("crossbar size {n} must be >= 2")));
        }
        Ok(CrossbarSpec { n, crossbar_budget: None })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.crossbar_budget = Some(budget);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Variant {
    Baseline,
    Proposed,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Proposed => "proposed",
        })
    }
}

/// One programmed crosspoint: the column's input from `source`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cell {
    pub source: NodeId,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Column {
    /// Neuron (baseline) or unit (proposed) computed by this column.
    pub node: NodeId,
    pub origin: NodeId,
    pub stage: u32,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Crossbar {
    /// Distinct input lines, sorted; line `i` carries `inputs[i]`.
    pub inputs: Vec<NodeId>,
    /// Output columns in assignment order.
    pub columns: Vec<Column>,
}

impl Crossbar {
    pub fn outputs_used(&self) -> usize {
        self.columns.len()
    }

    pub fn crosspoints_used(&self) -> usize {
        self.columns.iter().map(|c| c.cells.len()).sum()
    }
}

/// A spike stream routed from the crossbar computing `source` to another
/// crossbar that reads it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterEdge {
    pub producer: usize,
    pub consumer: usize,
    pub source: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mapping {
    pub variant: Variant,
    pub n: usize,
    pub source_fingerprint: u64,
    pub crossbars: Vec<Crossbar>,
    pub edges: Vec<InterEdge>,
    /// Synapses removed to fit the crossbar (baseline only).
    pub dropped_synapses: Vec<DroppedSynapse>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DroppedSynapse {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

impl Mapping {
    pub fn crossbar_count(&self) -> usize {
        self.crossbars.len()
    }

    pub fn crosspoints_used(&self) -> usize {
        self.crossbars.iter().map(Crossbar::crosspoints_used).sum()
    }

    pub fn outputs_used(&self) -> usize {
        self.crossbars.iter().map(Crossbar::outputs_used).sum()
    }

    /// Crossbar index of every mapped node.
    pub fn placement(&self) -> BTreeMap<NodeId, usize> {
        let mut map = BTreeMap::new();
        for (i, xbar) in self.crossbars.iter().enumerate() {
            for col in &xbar.columns {
                map.insert(col.node, i);
            }
        }
        map
    }

    /// `net` without the dropped synapses: what the baseline hardware computes.
    pub fn realized_network(&self, net: &Network) -> Network {
        let dropped: BTreeSet<(NodeId, NodeId)> =
            self.dropped_synapses.iter().map(|d| (d.src, d.dst)).collect();
        let mut out = net.clone();
        out.synapses.retain(|s| !dropped.contains(&(s.src, s.dst)));
        out
    }
}

#[derive(Clone, Debug)]
struct Item {
    node: NodeId,
    origin: NodeId,
    stage: u32,
    cells: Vec<Cell>,
    /// Sorted distinct sources.
    lines: Vec<NodeId>,
}

impl Item {
    fn new(node: NodeId, origin: NodeId, stage: u32, mut cells: Vec<Cell>) -> Self {
        cells.sort_by_key(|c| c.source);
        let mut lines: Vec<NodeId> = cells.iter().map(|c| c.source).collect();
        lines.dedup();
        Item { node, origin, stage, cells, lines }
    }

    fn column(&self) -> Column {
        Column { node: self.node, origin: self.origin, stage: self.stage, cells: self.cells.clone() }
    }
}

fn sort_items(items: &mut [Item]) {
    items.sort_by(|a, b| {
        b.cells.len().cmp(&a.cells.len()).then(a.origin.cmp(&b.origin)).then(a.stage.cmp(&b.stage))
    });
}

#[derive(Clone, Debug, Default)]
struct Bin {
    lines: Vec<NodeId>,
    items: Vec<usize>,
}

impl Bin {
    fn new_lines(&self, item: &Item) -> usize {
        item.lines.iter().filter(|l| self.lines.binary_search(l).is_err()).count()
    }

    fn fits(&self, item: &Item, n: usize) -> bool {
        self.items.len() < n && self.lines.len() + self.new_lines(item) <= n
    }

    fn add(&mut self, idx: usize, item: &Item) {
        for &l in &item.lines {
            if let Err(pos) = self.lines.binary_search(&l) {
                self.lines.insert(pos, l);
            }
        }
        self.items.push(idx);
    }
}

fn first_fit(items: &[Item], n: usize) -> Vec<Bin> {
    let mut bins: Vec<Bin> = Vec::new();
    for (idx, item) in items.iter().enumerate() {
        match bins.iter_mut().find(|b| b.fits(item, n)) {
            Some(bin) => bin.add(idx, item),
            None => {
                let mut bin = Bin::default();
                bin.add(idx, item);
                bins.push(bin);
            }
        }
    }
    bins
}

fn check_width(items: &[Item], n: usize) -> Result<(), Error> {
    match items.iter().find(|i| i.lines.len() > n) {
        Some(item) => Err(Error::UnitTooWide { unit: item.node, fanin: item.lines.len(), n }),
        None => Ok(()),
    }
}

fn check_budget(required: usize, spec: &CrossbarSpec) -> Result<(), Error> {
    match spec.crossbar_budget {
        Some(budget) if required > budget => Err(Error::BudgetExceeded { required, budget }),
        _ => Ok(()),
    }
}

fn inter_edges(crossbars: &[Crossbar]) -> Vec<InterEdge> {
    let mut placement = BTreeMap::new();
    for (i, xbar) in crossbars.iter().enumerate() {
        for col in &xbar.columns {
            placement.insert(col.node, i);
        }
    }
    let mut edges = Vec::new();
    for (consumer, xbar) in crossbars.iter().enumerate() {
        for source in &xbar.inputs {
            if let Some(&producer) = placement.get(source) {
                if producer != consumer {
                    edges.push(InterEdge { producer, consumer, source: *source });
                }
            }
        }
    }
    edges.sort();
    edges
}

fn assemble(
    variant: Variant,
    spec: &CrossbarSpec,
    source_fingerprint: u64,
    items: &[Item],
    bins: &[Bin],
    dropped_synapses: Vec<DroppedSynapse>,
) -> Mapping {
    let crossbars: Vec<Crossbar> = bins
        .iter()
        .map(|b| Crossbar { inputs: b.lines.clone(), columns: b.items.iter().map(|&i| items[i].column()).collect() })
        .collect();
    let edges = inter_edges(&crossbars);
    Mapping { variant, n: spec.n, source_fingerprint, crossbars, edges, dropped_synapses }
}

fn unit_items(unet: &UnitNetwork) -> Vec<Item> {
    let mut items: Vec<Item> = unet
        .units
        .iter()
        .map(|u| {
            let cells = u.inputs.iter().map(|i| Cell { source: unet.resolve(i.source), weight: i.weight }).collect();
            Item::new(u.id, u.origin, u.stage, cells)
        })
        .collect();
    sort_items(&mut items);
    items
}

/// Capacity-aware packing of (recombined) units. Nothing is dropped.
pub fn pack_proposed(unet: &UnitNetwork, spec: &CrossbarSpec) -> Result<Mapping, Error> {
    CrossbarSpec::new(spec.n)?;
    let items = unit_items(unet);
    check_width(&items, spec.n)?;
    let bins = first_fit(&items, spec.n);
    check_budget(bins.len(), spec)?;
    Ok(assemble(Variant::Proposed, spec, unet.source_fingerprint, &items, &bins, Vec::new()))
}

/// Whole-neuron clustering that keeps each neuron's `n` largest-`|w|`
/// synapses and drops the rest.
pub fn map_baseline(net: &Network, spec: &CrossbarSpec) -> Result<Mapping, Error> {
    CrossbarSpec::new(spec.n)?;
    net.validate()?;
    let mut items = Vec::new();
    let mut dropped = Vec::new();
    for (dst, mut fanin) in net.incoming() {
        let kind = net.neuron(dst).map(|n| n.kind);
        if kind == Some(NeuronKind::Input) {
            continue;
        }
        fanin.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        if fanin.len() > spec.n {
            dropped.extend(fanin.drain(spec.n..).map(|(src, weight)| DroppedSynapse { src, dst, weight }));
        }
        let cells = fanin.into_iter().map(|(source, weight)| Cell { source, weight }).collect();
        items.push(Item::new(dst, dst, 1, cells));
    }
    sort_items(&mut items);
    dropped.sort_by_key(|d| (d.dst, d.src));
    let bins = first_fit(&items, spec.n);
    check_budget(bins.len(), spec)?;
    Ok(assemble(Variant::Baseline, spec, net.fingerprint(), &items, &bins, dropped))
}

pub const DEFAULT_OPTIMAL_LIMIT: usize = 8;

/// Exhaustive minimum-crossbar packing for small instances. Among optimal
/// packings the lexicographically smallest assignment (items in greedy
/// order) is returned.
pub fn optimal_pack(unet: &UnitNetwork, spec: &CrossbarSpec, limit: usize) -> Result<Mapping, Error> {
    CrossbarSpec::new(spec.n)?;
    let items = unit_items(unet);
    if items.len() > limit {
        return Err(Error::InstanceTooLarge { units: items.len(), limit });
    }
    check_width(&items, spec.n)?;

    struct Search<'a> {
        items: &'a [Item],
        n: usize,
        best: Option<Vec<Bin>>,
    }

    impl Search<'_> {
        fn run(&mut self, idx: usize, bins: &mut Vec<Bin>) {
            let best_len = self.best.as_ref().map_or(usize::MAX, Vec::len);
            if bins.len() >= best_len {
                return;
            }
            if idx == self.items.len() {
                self.best = Some(bins.clone());
                return;
            }
            let item = &self.items[idx];
            for b in 0..bins.len() {
                if bins[b].fits(item, self.n) {
                    let saved = bins[b].clone();
                    bins[b].add(idx, item);
                    self.run(idx + 1, bins);
                    bins[b] = saved;
                }
            }
            if bins.len() + 1 < best_len {
                let mut bin = Bin::default();
                bin.add(idx, item);
                bins.push(bin);
                self.run(idx + 1, bins);
                bins.pop();
            }
        }
    }

    let mut search = Search { items: &items, n: spec.n, best: None };
    search.run(0, &mut Vec::new());
    let bins = search.best.unwrap_or_default();
    check_budget(bins.len(), spec)?;
    Ok(assemble(Variant::Proposed, spec, unet.source_fingerprint, &items, &bins, Vec::new()))
}

/// What a mapping claims to implement.
#[derive(Clone, Copy, Debug)]
pub enum MappingSource<'a> {
    Network(&'a Network),
    Units(&'a UnitNetwork),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MappingViolation {
    SizeMismatch { mapping: usize, spec: usize },
    BudgetExceeded { crossbars: usize, budget: usize },
    InputOverflow { crossbar: usize, used: usize, n: usize },
    OutputOverflow { crossbar: usize, used: usize, n: usize },
    CrosspointOverflow { crossbar: usize, used: usize, n: usize },
    UndeclaredLine { crossbar: usize, node: NodeId, source: NodeId },
    DuplicateNode(NodeId),
    MissingNode(NodeId),
    UnknownNode(NodeId),
    SynapseMismatch { node: NodeId, detail: String },
    DroppedInProposed(usize),
    UnknownDropped { src: NodeId, dst: NodeId },
    EdgeMismatch,
    FingerprintMismatch { mapping: u64, source: u64 },
}

impl fmt::Display for MappingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MappingViolation::*;
        match self {
            SizeMismatch { mapping, spec } => write!(f, "mapping built for n={mapping}, spec has n={spec}"),
            BudgetExceeded { crossbars, budget } => write!(f, "{crossbars} crossbars exceed budget {budget}"),
            InputOverflow { crossbar, used, n } => write!(f, "input overflow on crossbar {crossbar}: {used} > {n}"),
            OutputOverflow { crossbar, used, n } => write!(f, "output overflow on crossbar {crossbar}: {used} > {n}"),
            CrosspointOverflow { crossbar, used, n } => {
                write!(f, "crosspoint overflow on crossbar {crossbar}: {used} > {n}^2")
            }
            UndeclaredLine { crossbar, node, source } => {
                write!(f, "crossbar {crossbar}: column {node} reads {source} without an input line")
            }
            DuplicateNode(id) => write!(f, "node {id} mapped more than once"),
            MissingNode(id) => write!(f, "node {id} not mapped"),
            UnknownNode(id) => write!(f, "mapped node {id} not in source"),
            SynapseMismatch { node, detail } => write!(f, "synapses of {node}: {detail}"),
            DroppedInProposed(count) => write!(f, "proposed mapping drops {count} synapses"),
            UnknownDropped { src, dst } => write!(f, "dropped synapse {src}->{dst} not in source"),
            EdgeMismatch => f.write_str("inter-crossbar edge list does not match placement"),
            FingerprintMismatch { mapping, source } => {
                write!(f, "mapping source {mapping:016x} differs from {source:016x}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MappingReport {
    pub violations: Vec<MappingViolation>,
}

impl MappingReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn same_cells(expected: &mut [(NodeId, f64)], found: &mut [(NodeId, f64)]) -> Option<String> {
    expected.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    found.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if expected.len() != found.len() {
        return Some(format!("{} expected, {} found", expected.len(), found.len()));
    }
    expected
        .iter()
        .zip(found.iter())
        .find(|(e, f)| e.0 != f.0 || e.1.to_bits() != f.1.to_bits())
        .map(|(e, f)| format!("expected {}:{}, found {}:{}", e.0, e.1, f.0, f.1))
}

/// Checks capacity invariants and synapse conservation against `source`.
pub fn verify_mapping(mapping: &Mapping, source: MappingSource<'_>, spec: &CrossbarSpec) -> MappingReport {
    use MappingViolation::*;
    let mut v = Vec::new();
    let n = spec.n;
    if mapping.n != n {
        v.push(SizeMismatch { mapping: mapping.n, spec: n });
    }
    if let Some(budget) = spec.crossbar_budget {
        if mapping.crossbars.len() > budget {
            v.push(BudgetExceeded { crossbars: mapping.crossbars.len(), budget });
        }
    }

    let mut seen: BTreeMap<NodeId, &Column> = BTreeMap::new();
    for (i, xbar) in mapping.crossbars.iter().enumerate() {
        if xbar.inputs.len() > n {
            v.push(InputOverflow { crossbar: i, used: xbar.inputs.len(), n });
        }
        if xbar.outputs_used() > n {
            v.push(OutputOverflow { crossbar: i, used: xbar.outputs_used(), n });
        }
        if xbar.crosspoints_used() > n * n {
            v.push(CrosspointOverflow { crossbar: i, used: xbar.crosspoints_used(), n });
        }
        let lines: BTreeSet<NodeId> = xbar.inputs.iter().copied().collect();
        for col in &xbar.columns {
            for cell in &col.cells {
                if !lines.contains(&cell.source) {
                    v.push(UndeclaredLine { crossbar: i, node: col.node, source: cell.source });
                }
            }
            if seen.insert(col.node, col).is_some() {
                v.push(DuplicateNode(col.node));
            }
        }
    }
    if inter_edges(&mapping.crossbars) != mapping.edges {
        v.push(EdgeMismatch);
    }

    let cells_of = |col: &Column| -> Vec<(NodeId, f64)> { col.cells.iter().map(|c| (c.source, c.weight)).collect() };

    match source {
        MappingSource::Units(unet) => {
            if mapping.source_fingerprint != unet.source_fingerprint {
                v.push(FingerprintMismatch { mapping: mapping.source_fingerprint, source: unet.source_fingerprint });
            }
            if !mapping.dropped_synapses.is_empty() {
                v.push(DroppedInProposed(mapping.dropped_synapses.len()));
            }
            for u in &unet.units {
                match seen.remove(&u.id) {
                    None => v.push(MissingNode(u.id)),
                    Some(col) => {
                        let mut expected: Vec<(NodeId, f64)> =
                            u.inputs.iter().map(|i| (unet.resolve(i.source), i.weight)).collect();
                        if let Some(detail) = same_cells(&mut expected, &mut cells_of(col)) {
                            v.push(SynapseMismatch { node: u.id, detail });
                        }
                    }
                }
            }
        }
        MappingSource::Network(net) => {
            let fp = net.fingerprint();
            if mapping.source_fingerprint != fp {
                v.push(FingerprintMismatch { mapping: mapping.source_fingerprint, source: fp });
            }
            if mapping.variant == Variant::Proposed && !mapping.dropped_synapses.is_empty() {
                v.push(DroppedInProposed(mapping.dropped_synapses.len()));
            }
            let original: BTreeSet<(NodeId, NodeId)> = net.synapses.iter().map(|s| (s.src, s.dst)).collect();
            let mut dropped_by_dst: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
            for d in &mapping.dropped_synapses {
                if !original.contains(&(d.src, d.dst)) {
                    v.push(UnknownDropped { src: d.src, dst: d.dst });
                }
                dropped_by_dst.entry(d.dst).or_default().push((d.src, d.weight));
            }
            for (dst, mut expected) in net.incoming() {
                if net.neuron(dst).is_some_and(|n| n.kind == NeuronKind::Input) {
                    continue;
                }
                match seen.remove(&dst) {
                    None => v.push(MissingNode(dst)),
                    Some(col) => {
                        let mut found = cells_of(col);
                        found.extend(dropped_by_dst.remove(&dst).unwrap_or_default());
                        if let Some(detail) = same_cells(&mut expected, &mut found) {
                            v.push(SynapseMismatch { node: dst, detail });
                        }
                    }
                }
            }
        }
    }
    for id in seen.keys() {
        v.push(UnknownNode(*id));
    }
    MappingReport { violations: v }
}

/// Synapses realized by a baseline mapping, as a flat list.
pub fn realized_synapses(mapping: &Mapping) -> Vec<Synapse> {
    let mut out = Vec::with_capacity(mapping.crosspoints_used());
    for xbar in &mapping.crossbars {
        for col in &xbar.columns {
            out.extend(col.cells.iter().map(|c| Synapse { src: c.source, dst: col.node, weight: c.weight }));
        }
    }
    out
}
