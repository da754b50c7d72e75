//! Small hand-built networks shared by tests, examples and the CLI.

use alloc::vec::Vec;

use crate::network::{Metadata, Network, Neuron, NeuronKind, NodeId, Synapse};

pub const FIG5_Y1: NodeId = NodeId(6);
pub const FIG5_Y2: NodeId = NodeId(7);
pub const FIG5_Y3: NodeId = NodeId(8);
/// Input whose synapse into `y2` is the weakest, and the one a 4-wide
/// crossbar cannot hold.
pub const FIG5_X6: NodeId = NodeId(5);

/// Three output neurons over six shared inputs `x1..x6` (ids 0..5):
///
/// * `y1` reads `x1, x2, x4` (fanin 3)
/// * `y2` reads `x1, x2, x3, x5, x6` (fanin 5, `x6` weakest)
/// * `y3` reads `x2, x3, x4, x5` (fanin 4)
///
/// On 4x4 crossbars a truncating mapper needs three crossbars and loses
/// `x6 -> y2`. Unrolled and regrouped into subunits of fanin 3 the network
/// fits two: `y1` and the heads of `y2` and `y3` share `x1..x4`, and the
/// two chain tails share `x5` on the second crossbar.
pub fn fig5() -> Network {
    let mut neurons: Vec<Neuron> = (0..6).map(|i| Neuron::new(i, NeuronKind::Input)).collect();
    neurons.extend([FIG5_Y1, FIG5_Y2, FIG5_Y3].map(|id| Neuron::new(id, NeuronKind::Output)));
    let wiring: [(u32, NodeId, f64); 12] = [
        (0, FIG5_Y1, 0.6),
        (1, FIG5_Y1, 0.5),
        (3, FIG5_Y1, 0.4),
        (0, FIG5_Y2, 0.5),
        (1, FIG5_Y2, 0.4),
        (2, FIG5_Y2, 0.3),
        (4, FIG5_Y2, 0.2),
        (5, FIG5_Y2, 0.1),
        (1, FIG5_Y3, 0.5),
        (2, FIG5_Y3, 0.4),
        (3, FIG5_Y3, 0.3),
        (4, FIG5_Y3, 0.2),
    ];
    let synapses = wiring.iter().map(|&(src, dst, w)| Synapse::new(src, dst, w)).collect();
    let mut net = Network::new(neurons, synapses);
    net.metadata = Metadata { name: "fig5".into(), topology: "fig5".into(), ..Metadata::default() };
    net.canonicalize();
    net
}
