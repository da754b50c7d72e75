//! Resource-aware mapping of spiking neural networks onto crossbar tiles.
//!
//! High-fanin neurons are unrolled into chains of fanin-of-two units,
//! normalized so the chain tracks the original firing rates, regrouped
//! into crossbar-sized subunits and packed with input sharing. A
//! fanin-truncating baseline mapper is provided for comparison.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command line live in the `fitmap` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod decompose;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod mapper;
pub mod metrics;
pub mod network;
pub mod normalize;
pub mod prune;
pub mod ratesim;

pub use decompose::{
    fit_unit_count, recombine, unroll_network, unroll_network_with, unroll_neuron, unroll_neuron_with,
    InputOrder, Signal, Unit, UnitInput, UnitNetwork,
};
pub use error::Error;
pub use generate::{generate_feedforward, generate_reservoir, random_batch, WeightSampler};
pub use mapper::{
    map_baseline, optimal_pack, pack_proposed, verify_mapping, Crossbar, CrossbarSpec, Mapping,
    MappingReport, MappingSource, Variant,
};
pub use metrics::{
    compare_report, interconnect_energy, utilization, wasted_energy, CompareReport, EnergyModel,
    Fidelity, Utilization, VariantInput, VariantReport,
};
pub use network::{
    fanin_stats, validate_network, FaninStats, Metadata, Network, Neuron, NeuronKind, NodeId,
    Synapse, ValidationReport, Violation,
};
pub use normalize::{
    apply_normalization, collect_activation_stats, collect_activation_stats_with, normalization_factors,
    normalization_factors_with,
    ActivationStats, FactorRule, NormalizationPlan,
};
pub use prune::{prune_weights, PruneOutcome};
pub use ratesim::{neuron_transfer, rate_error, simulate, RateError, RateVector, SimConfig, SimOutcome};
