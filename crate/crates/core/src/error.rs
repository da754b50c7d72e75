use alloc::string::String;
use core::fmt;

use crate::network::{NodeId, ValidationReport};

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An argument is outside its documented domain.
    InvalidArgument(String),
    /// The network breaks one or more model invariants.
    InvalidNetwork(ValidationReport),
    /// `unroll_neuron` was asked to unroll a neuron with fanin below two.
    NothingToUnroll { neuron: NodeId, fanin: usize },
    UnknownNeuron(NodeId),
    /// Input rates do not cover exactly the input neurons.
    InputCoverage(String),
    /// A decomposed unit has no normalization factor.
    MissingFactor { unit: NodeId },
    /// A unit needs more input lines than a crossbar provides.
    UnitTooWide { unit: NodeId, fanin: usize, n: usize },
    BudgetExceeded { required: usize, budget: usize },
    InstanceTooLarge { units: usize, limit: usize },
    /// Two artifacts that must derive from the same network do not.
    SourceMismatch { expected: u64, found: u64 },
    AccountingMismatch(String),
    /// A recurrent simulation did not reach its tolerance.
    NotConverged { sample: usize, residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidNetwork(report) => {
                write!(f, "invalid network: {} violation(s)", report.violations.len())?;
                for v in &report.violations {
                    write!(f, "; {v}")?;
                }
                Ok(())
            }
            Error::NothingToUnroll { neuron, fanin } => {
                write!(f, "nothing to unroll: neuron {neuron} has fanin {fanin}")
            }
            Error::UnknownNeuron(id) => write!(f, "unknown neuron {id}"),
            Error::InputCoverage(msg) => write!(f, "input rates: {msg}"),
            Error::MissingFactor { unit } => {
                write!(f, "missing normalization factor for unit {unit}")
            }
            Error::UnitTooWide { unit, fanin, n } => {
                write!(f, "unit {unit} has fanin {fanin}, crossbar accepts {n}")
            }
            Error::BudgetExceeded { required, budget } => {
                write!(f, "crossbar budget exceeded: {required} required, {budget} available")
            }
            Error::InstanceTooLarge { units, limit } => write!(
                f,
                "{units} units exceed the exhaustive search limit of {limit}; use the greedy packer"
            ),
            Error::SourceMismatch { expected, found } => write!(
                f,
                "artifacts derive from different networks ({expected:016x} vs {found:016x})"
            ),
            Error::AccountingMismatch(msg) => write!(f, "synapse accounting mismatch: {msg}"),
            Error::NotConverged { sample, residual } => {
                write!(f, "simulation of sample {sample} did not converge (residual {residual:e})")
            }
        }
    }
}

impl core::error::Error for Error {}
