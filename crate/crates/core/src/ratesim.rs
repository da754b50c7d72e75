//! Mean-rate functional simulator.
//!
//! Each neuron sums `rate(src) * w` over its incoming synapses and passes
//! the current through a rectified, saturating linear transfer function.
//! Acyclic parts of the graph are evaluated once in topological order.
//! Strongly connected components are solved by damped Gauss-Seidel
//! fixed-point iteration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::network::{Network, Neuron, NeuronKind, NodeId};

/// Firing rate in Hz per node.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct RateVector(pub BTreeMap<NodeId, f64>);

impl RateVector {
    pub fn new() -> Self {
        RateVector(BTreeMap::new())
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn insert(&mut self, id: NodeId, rate: f64) {
        self.0.insert(id, rate);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

impl FromIterator<(NodeId, f64)> for RateVector {
    fn from_iter<I: IntoIterator<Item = (NodeId, f64)>>(iter: I) -> Self {
        RateVector(iter.into_iter().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub max_iterations: usize,
    /// Damping factor in (0, 1]; 1 is plain Gauss-Seidel.
    pub damping: f64,
    /// Relative rate change at which a recurrent component counts as converged.
    pub convergence_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { max_iterations: 10_000, damping: 0.5, convergence_tol: 1e-9 }
    }
}

impl SimConfig {
    fn check(&self) -> Result<(), Error> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping {} outside (0, 1]", self.damping)));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument("convergence_tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub rates: RateVector,
    /// False when some recurrent component hit `max_iterations`.
    pub converged: bool,
    /// Largest iteration count spent on any recurrent component.
    pub iterations: usize,
    /// Largest relative residual estimate over recurrent components.
    pub residual: f64,
}

/// `min(r_max, G * max(0, current - theta))`.
pub fn neuron_transfer(input_current: f64, params: &Neuron) -> f64 {
    let drive = input_current - params.threshold;
    if drive > 0.0 {
        (params.gain * drive).min(params.max_rate)
    } else {
        0.0
    }
}

pub fn simulate(net: &Network, inputs: &RateVector, cfg: &SimConfig) -> Result<SimOutcome, Error> {
    cfg.check()?;
    net.validate()?;

    let index = net.index();
    let n = net.neurons.len();

    let mut expected_inputs = BTreeSet::new();
    for neuron in net.inputs() {
        expected_inputs.insert(neuron.id);
        match inputs.get(neuron.id) {
            Some(r) if r >= 0.0 && r.is_finite() => {}
            Some(r) => return Err(Error::InputCoverage(format!("neuron {} has rate {r}", neuron.id))),
            None => return Err(Error::InputCoverage(format!("no rate for input neuron {}", neuron.id))),
        }
    }
    if let Some((extra, _)) = inputs.iter().find(|(id, _)| !expected_inputs.contains(id)) {
        return Err(Error::InputCoverage(format!("{extra} is not an input neuron")));
    }

    // Incoming lists sorted by source id so sums do not depend on synapse order.
    let mut incoming: Vec<Vec<(NodeId, usize, f64)>> = vec![Vec::new(); n];
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in &net.synapses {
        let (si, di) = (index[&s.src], index[&s.dst]);
        incoming[di].push((s.src, si, s.weight));
        outgoing[si].push(di);
    }
    for list in &mut incoming {
        list.sort_by_key(|&(id, _, _)| id);
    }

    let mut rates = vec![0.0f64; n];
    for (i, neuron) in net.neurons.iter().enumerate() {
        if neuron.kind == NeuronKind::Input {
            rates[i] = inputs.get(neuron.id).unwrap_or(0.0);
        }
    }

    let current = |v: usize, rates: &[f64]| -> f64 {
        incoming[v].iter().map(|&(_, u, w)| rates[u] * w).sum()
    };

    let mut converged = true;
    let mut iterations = 0;
    let mut residual = 0.0f64;

    for mut comp in strongly_connected(&outgoing).into_iter().rev() {
        if comp.len() == 1 && !outgoing[comp[0]].contains(&comp[0]) {
            let v = comp[0];
            let neuron = &net.neurons[v];
            if neuron.kind != NeuronKind::Input {
                rates[v] = neuron_transfer(current(v, &rates), neuron);
            }
            continue;
        }

        comp.sort_by_key(|&v| net.neurons[v].id);
        let lambda = cfg.damping;
        let mut prev_step = f64::INFINITY;
        let mut done = false;
        let mut k = 0;
        while k < cfg.max_iterations {
            k += 1;
            // Largest change relative to each node's own rate.
            let mut step = 0.0f64;
            for &v in &comp {
                let target = neuron_transfer(current(v, &rates), &net.neurons[v]);
                let next = (1.0 - lambda) * rates[v] + lambda * target;
                step = step.max((next - rates[v]).abs() / next.abs().max(RATE_FLOOR));
                rates[v] = next;
            }
            // A posteriori bound: remaining error <= step * rho / (1 - rho).
            let rho = if prev_step > 0.0 && prev_step.is_finite() { step / prev_step } else { 0.0 };
            let tail = if rho < 1.0 { step * rho / (1.0 - rho) } else { f64::INFINITY };
            let estimate = step.max(tail);
            prev_step = step;
            if step == 0.0 || estimate <= cfg.convergence_tol {
                residual = residual.max(if step == 0.0 { 0.0 } else { estimate });
                done = true;
                break;
            }
            if k == cfg.max_iterations {
                residual = residual.max(estimate);
            }
        }
        iterations = iterations.max(k);
        converged &= done;
    }

    let rates = net.neurons.iter().zip(rates).map(|(neuron, r)| (neuron.id, r)).collect();
    Ok(SimOutcome { rates, converged, iterations, residual })
}

/// Tarjan's algorithm, iterative. Components come out in reverse
/// topological order of the condensation.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateError {
    pub max_rel_error: f64,
    pub rmse: f64,
}

/// Relative-error floor in Hz.
pub const RATE_FLOOR: f64 = 1e-9;

/// Worst relative error `|test - ref| / max(|ref|, 1e-9)` and the RMSE over `on`.
pub fn rate_error(reference: &RateVector, test: &RateVector, on: &[NodeId]) -> Result<RateError, Error> {
    let mut max_rel_error = 0.0f64;
    let mut sq = 0.0;
    for &id in on {
        let r = reference.get(id).ok_or_else(|| Error::InputCoverage(format!("reference lacks {id}")))?;
        let t = test.get(id).ok_or_else(|| Error::InputCoverage(format!("test lacks {id}")))?;
        let d = t - r;
        max_rel_error = max_rel_error.max(d.abs() / r.abs().max(RATE_FLOOR));
        sq += d * d;
    }
    let rmse = if on.is_empty() { 0.0 } else { libm::sqrt(sq / on.len() as f64) };
    Ok(RateError { max_rel_error, rmse })
}
