//! One-shot magnitude pruning.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::network::{Network, NeuronKind, NodeId};

/// Metadata key listing non-input neurons left without inputs.
pub const ORPHANED_KEY: &str = "orphaned";

#[derive(Clone, Debug, PartialEq)]
pub struct PruneOutcome {
    pub network: Network,
    pub removed_count: usize,
    /// Non-input neurons whose fanin dropped to zero. They stay in the
    /// network and are listed under the `orphaned` metadata key.
    pub orphaned: Vec<NodeId>,
}

/// Removes every synapse with `|w| < epsilon`.
pub fn prune_weights(net: &Network, epsilon: f64) -> Result<PruneOutcome, Error> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("pruning epsilon {epsilon} must be >= 0")));
    }
    let mut network = net.clone();
    let before = network.synapses.len();
    network.synapses.retain(|s| !(s.weight.abs() < epsilon));
    let removed_count = before - network.synapses.len();

    let had_fanin: BTreeSet<NodeId> = net.synapses.iter().map(|s| s.dst).collect();
    let has_fanin: BTreeSet<NodeId> = network.synapses.iter().map(|s| s.dst).collect();
    let orphaned: Vec<NodeId> = network
        .neurons
        .iter()
        .filter(|n| n.kind != NeuronKind::Input)
        .map(|n| n.id)
        .filter(|id| had_fanin.contains(id) && !has_fanin.contains(id))
        .collect();

    if !orphaned.is_empty() {
        let mut all: BTreeSet<NodeId> = network
            .metadata
            .extra
            .get(ORPHANED_KEY)
            .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).map(NodeId).collect())
            .unwrap_or_default();
        all.extend(orphaned.iter().copied());
        let list: Vec<String> = all.iter().map(|id| format!("{id}")).collect();
        network.metadata.extra.insert(ORPHANED_KEY.into(), list.join(","));
    }
    if removed_count > 0 {
        network.metadata.extra.insert("pruned.epsilon".into(), format!("{epsilon}"));
    }

    Ok(PruneOutcome { network, removed_count, orphaned })
}
