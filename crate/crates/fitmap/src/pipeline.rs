//! The end-to-end flow: load or generate, prune, unroll, normalize,
//! recombine, map both variants, simulate and report.

use std::path::{Path, PathBuf};

use fitmap_core::mapper::MappingReport;
use fitmap_core::metrics::{fidelity, mean_rates, output_ids};
use fitmap_core::{
    apply_normalization, collect_activation_stats_with, compare_report, fixtures,
    generate_feedforward, generate_reservoir, map_baseline, normalization_factors_with,
    pack_proposed, prune_weights, random_batch, recombine, simulate, unroll_network_with,
    verify_mapping, CompareReport, CrossbarSpec, EnergyModel, FactorRule, InputOrder, Mapping,
    MappingSource, Network, NodeId, RateVector, SimConfig, UnitNetwork, VariantInput,
    WeightSampler,
};
use serde_json::json;

use crate::error::{Error, Result};
use crate::format;

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSource {
    File(PathBuf),
    Feedforward(Vec<usize>),
    Reservoir { size: usize, connection_prob: f64 },
    Fig5,
}

impl NetworkSource {
    fn describe(&self) -> String {
        match self {
            NetworkSource::File(p) => format!("file:{}", p.display()),
            NetworkSource::Feedforward(layers) => {
                let sizes: Vec<String> = layers.iter().map(usize::to_string).collect();
                format!("feedforward:{}", sizes.join(","))
            }
            NetworkSource::Reservoir {
                size,
                connection_prob,
            } => format!("reservoir:{size},{connection_prob}"),
            NetworkSource::Fig5 => "fixture:fig5".into(),
        }
    }

    pub fn load(&self, sampler: WeightSampler, seed: u64) -> Result<Network> {
        Ok(match self {
            NetworkSource::File(p) => format::read_network(p)?,
            NetworkSource::Feedforward(layers) => generate_feedforward(layers, sampler, seed)?,
            NetworkSource::Reservoir {
                size,
                connection_prob,
            } => generate_reservoir(*size, *connection_prob, sampler, seed)?,
            NetworkSource::Fig5 => fixtures::fig5(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchSource {
    File(PathBuf),
    Random { size: usize },
}

impl BatchSource {
    fn describe(&self) -> String {
        match self {
            BatchSource::File(p) => format!("file:{}", p.display()),
            BatchSource::Random { size } => format!("random:{size}"),
        }
    }

    pub fn load(&self, net: &Network, seed: u64) -> Result<Vec<RateVector>> {
        let batch = match self {
            BatchSource::File(p) => format::read_rates(p)?.rates(),
            BatchSource::Random { size } => random_batch(net, *size, seed),
        };
        if batch.is_empty() {
            return Err(Error::Config("calibration batch is empty".into()));
        }
        Ok(batch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub source: NetworkSource,
    pub sampler: WeightSampler,
    pub epsilon: f64,
    pub k: f64,
    pub factor_rule: FactorRule,
    /// Order in which a decomposed neuron's inputs enter its chain.
    pub input_order: InputOrder,
    pub crossbar_n: usize,
    pub crossbar_budget: Option<usize>,
    /// Recombination bound; [`default_max_fanin`] when unset.
    pub max_fanin: Option<usize>,
    pub batch: BatchSource,
    pub energy: EnergyModel,
    pub window_seconds: f64,
    /// Keep the `r_max` clamp of every neuron.
    pub saturation: bool,
    pub sim: SimConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl PipelineConfig {
    pub fn new(source: NetworkSource, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            source,
            sampler: WeightSampler::default(),
            epsilon: 0.0,
            k: 1.0,
            factor_rule: FactorRule::default(),
            input_order: InputOrder::default(),
            crossbar_n: 128,
            crossbar_budget: None,
            max_fanin: None,
            batch: BatchSource::Random { size: 16 },
            energy: EnergyModel::default(),
            window_seconds: 1.0,
            saturation: true,
            sim: SimConfig::default(),
            seed: 0,
            out: out.into(),
        }
    }

    pub fn spec(&self) -> Result<CrossbarSpec> {
        let spec = CrossbarSpec::new(self.crossbar_n)?;
        Ok(match self.crossbar_budget {
            Some(b) => spec.with_budget(b),
            None => spec,
        })
    }

    pub fn effective_max_fanin(&self) -> usize {
        self.max_fanin.unwrap_or(default_max_fanin(self.crossbar_n))
    }

    fn check(&self) -> Result<()> {
        if self.crossbar_n < 2 {
            return Err(Error::Config(format!(
                "crossbar n = {} must be >= 2",
                self.crossbar_n
            )));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k = {} must be > 0", self.k)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon = {} must be >= 0",
                self.epsilon
            )));
        }
        let m = self.effective_max_fanin();
        if m < 2 || m > self.crossbar_n {
            return Err(Error::Config(format!(
                "max fanin {m} must lie in [2, {}]",
                self.crossbar_n
            )));
        }
        for (what, p) in [
            ("network", self.source_path()),
            ("batch", self.batch_path()),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{what} file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.energy.check()?;
        Ok(())
    }

    fn source_path(&self) -> Option<&Path> {
        match &self.source {
            NetworkSource::File(p) => Some(p),
            _ => None,
        }
    }

    fn batch_path(&self) -> Option<&Path> {
        match &self.batch {
            BatchSource::File(p) => Some(p),
            _ => None,
        }
    }

    fn manifest_config(&self) -> serde_json::Value {
        json!({
            "source": self.source.describe(),
            "sampler": self.sampler.describe(),
            "epsilon": self.epsilon,
            "k": self.k,
            "factor_rule": match self.factor_rule {
                FactorRule::PartialSum => "partial-sum",
                FactorRule::Synapse => "synapse",
            },
            "input_order": self.input_order.as_str(),
            "crossbar_n": self.crossbar_n,
            "crossbar_budget": self.crossbar_budget,
            "max_fanin": self.effective_max_fanin(),
            "batch": self.batch.describe(),
            "energy_model": self.energy,
            "window_seconds": self.window_seconds,
            "saturation": self.saturation,
            "sim": {
                "max_iterations": self.sim.max_iterations,
                "damping": self.sim.damping,
                "convergence_tol": self.sim.convergence_tol,
            },
            "seed": self.seed,
        })
    }
}

/// Recombination bound used when none is given: `n / 2 + 1`.
///
/// A later subunit of a chain needs its external lines plus one private
/// line for the chain link, so same-stage subunits of `c` neurons share a
/// crossbar only while `externals + c <= n`. Splitting the lines evenly
/// between shared inputs and columns fills the most cells.
pub fn default_max_fanin(n: usize) -> usize {
    (n / 2 + 1).clamp(2, n.max(2))
}

/// Simulates every sample, failing on the first that does not converge.
pub fn simulate_batch(
    net: &Network,
    batch: &[RateVector],
    cfg: &SimConfig,
) -> Result<Vec<RateVector>> {
    batch
        .iter()
        .enumerate()
        .map(|(sample, inputs)| {
            let out = simulate(net, inputs, cfg)?;
            if out.converged {
                Ok(out.rates)
            } else {
                Err(fitmap_core::Error::NotConverged {
                    sample,
                    residual: out.residual,
                }
                .into())
            }
        })
        .collect()
}

/// Unrolled network normalized against `batch`, plus stages whose factor
/// fell back to 1.
pub fn normalized_units(
    net: &Network,
    batch: &[RateVector],
    k: f64,
    rule: FactorRule,
    order: InputOrder,
    sim: &SimConfig,
) -> Result<(UnitNetwork, Vec<(NodeId, u32)>)> {
    let unet = unroll_network_with(net, order)?;
    let stats = collect_activation_stats_with(net, batch, sim, order)?;
    let plan = normalization_factors_with(&stats, k, rule)?;
    Ok((apply_normalization(&unet, &plan)?, plan.warnings))
}

pub fn check_mapping(report: MappingReport, what: &str) -> Result<()> {
    if report.is_valid() {
        return Ok(());
    }
    const SHOWN: usize = 5;
    let mut list: Vec<String> = report.violations.iter().take(SHOWN).map(ToString::to_string).collect();
    if report.violations.len() > SHOWN {
        list.push(format!("and {} more", report.violations.len() - SHOWN));
    }
    Err(Error::Mapping(format!("{what}: {}", list.join("; "))))
}

/// Simulation results feeding a report.
#[derive(Clone, Debug)]
pub struct Simulations {
    pub reference: Vec<RateVector>,
    pub baseline: Vec<RateVector>,
    /// Raw rates of the unit network, as the hardware would fire.
    pub proposed_units: Vec<RateVector>,
    /// Unit rates mapped back to original neurons and units.
    pub proposed: Vec<RateVector>,
}

pub fn run_simulations(
    net: &Network,
    units: &UnitNetwork,
    baseline: &Mapping,
    batch: &[RateVector],
    sim: &SimConfig,
) -> Result<Simulations> {
    let reference =
        simulate_batch(net, batch, sim).map_err(|e| e.in_stage("simulate-reference"))?;
    let realized = baseline.realized_network(net);
    let baseline =
        simulate_batch(&realized, batch, sim).map_err(|e| e.in_stage("simulate-baseline"))?;
    let flat = units.to_network();
    let proposed_units =
        simulate_batch(&flat, batch, sim).map_err(|e| e.in_stage("simulate-proposed"))?;
    let proposed = proposed_units
        .iter()
        .map(|r| units.denormalize(r))
        .collect();
    Ok(Simulations {
        reference,
        baseline,
        proposed_units,
        proposed,
    })
}

/// Builds the comparison from mapped variants and their simulations.
pub fn build_report(
    net: &Network,
    units: &UnitNetwork,
    spec: &CrossbarSpec,
    baseline: &Mapping,
    proposed: &Mapping,
    sims: &Simulations,
    energy: &EnergyModel,
    window: f64,
) -> Result<CompareReport> {
    let outputs = output_ids(net);
    let fb = fidelity(&sims.reference, &sims.baseline, &outputs)?;
    let fp = fidelity(&sims.reference, &sims.proposed, &outputs)?;
    let rb = mean_rates(&sims.baseline);
    let rp = mean_rates(&sims.proposed_units);
    let b = VariantInput {
        mapping: baseline,
        fidelity: fb,
        rates: &rb,
        chain_links: 0,
    };
    let p = VariantInput {
        mapping: proposed,
        fidelity: fp,
        rates: &rp,
        chain_links: units.chain_link_count(),
    };
    Ok(compare_report(net, spec, b, p, energy, window)?)
}

/// Everything a pipeline run computed.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub network: Network,
    pub pruned_count: usize,
    pub batch: Vec<RateVector>,
    pub units: UnitNetwork,
    pub baseline: Mapping,
    pub proposed: Mapping,
    pub simulations: Simulations,
    pub report: CompareReport,
    pub normalization_warnings: Vec<(NodeId, u32)>,
}

pub const BASELINE_MAP: &str = "baseline.map.json";
pub const PROPOSED_MAP: &str = "proposed.map.json";
pub const REPORT: &str = "compare.report.json";
pub const CROSSBARS_CSV: &str = "crossbars.csv";
pub const NETWORK: &str = "network.snn.json";
pub const UNITS: &str = "units.snn.json";
pub const BATCH: &str = "batch.rates.json";
pub const MANIFEST: &str = "manifest.json";

struct Progress {
    written: Vec<&'static str>,
}

impl Progress {
    fn stage<T>(&self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        f().map_err(|e| e.in_stage(stage))
    }
}

/// Runs every stage and writes its artifacts to `cfg.out`. On failure the
/// manifest records the failing stage and whatever was already written.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.check()?;
    let mut progress = Progress {
        written: Vec::new(),
    };
    let result = run_stages(cfg, &mut progress);
    let (status, failure) = match &result {
        Ok(_) => ("ok", None),
        Err(e) => {
            let stage = match e {
                Error::Stage { stage, .. } => *stage,
                _ => "setup",
            };
            ("failed", Some((stage, e.to_string())))
        }
    };
    let mut manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "format_version": format::FORMAT_VERSION,
        "status": status,
        "config": cfg.manifest_config(),
        "outputs": progress.written,
    });
    if let Some((stage, error)) = failure {
        manifest["failed"] = json!({ "stage": stage, "error": error });
    }
    if let Ok(run) = &result {
        manifest["source_fingerprint"] = json!(format!("{:016x}", run.network.fingerprint()));
        manifest["pruned_synapses"] = json!(run.pruned_count);
        manifest["normalization_fallbacks"] = json!(run.normalization_warnings.len());
    }
    format::write_text(
        &cfg.out.join(MANIFEST),
        &format::to_canonical_json(&manifest)?,
    )?;
    result
}

fn run_stages(cfg: &PipelineConfig, p: &mut Progress) -> Result<PipelineRun> {
    let out = &cfg.out;
    let spec = p.stage("setup", || cfg.spec())?;

    let mut net = p.stage("load", || cfg.source.load(cfg.sampler, cfg.seed))?;
    if !cfg.saturation {
        net.disable_saturation();
    }
    p.stage("validate", || Ok(net.validate()?))?;
    let pruned = p.stage("prune", || Ok(prune_weights(&net, cfg.epsilon)?))?;
    let net = pruned.network;
    p.stage("prune", || format::write_network(&out.join(NETWORK), &net))?;
    p.written.push(NETWORK);

    let batch = p.stage("batch", || cfg.batch.load(&net, cfg.seed))?;
    p.stage("batch", || format::write_rates(&out.join(BATCH), &batch))?;
    p.written.push(BATCH);

    let (normalized, warnings) = p.stage("normalize", || {
        normalized_units(
            &net,
            &batch,
            cfg.k,
            cfg.factor_rule,
            cfg.input_order,
            &cfg.sim,
        )
    })?;
    let units = p.stage("recombine", || {
        Ok(recombine(&normalized, cfg.effective_max_fanin())?)
    })?;
    p.stage("recombine", || {
        format::write_network(&out.join(UNITS), &units.to_network())
    })?;
    p.written.push(UNITS);

    let proposed = p.stage("map-proposed", || {
        let m = pack_proposed(&units, &spec)?;
        check_mapping(
            verify_mapping(&m, MappingSource::Units(&units), &spec),
            "proposed mapping",
        )?;
        format::write_mapping(&out.join(PROPOSED_MAP), &m)?;
        Ok(m)
    })?;
    p.written.push(PROPOSED_MAP);
    let baseline = p.stage("map-baseline", || {
        let m = map_baseline(&net, &spec)?;
        check_mapping(
            verify_mapping(&m, MappingSource::Network(&net), &spec),
            "baseline mapping",
        )?;
        format::write_mapping(&out.join(BASELINE_MAP), &m)?;
        Ok(m)
    })?;
    p.written.push(BASELINE_MAP);

    let simulations = run_simulations(&net, &units, &baseline, &batch, &cfg.sim)?;

    let report = p.stage("report", || {
        build_report(
            &net,
            &units,
            &spec,
            &baseline,
            &proposed,
            &simulations,
            &cfg.energy,
            cfg.window_seconds,
        )
    })?;
    p.stage("report", || {
        format::write_report(&out.join(REPORT), &report)
    })?;
    p.written.push(REPORT);
    p.stage("report", || {
        let mut rows = format::crossbar_rows(&baseline, &spec, &cfg.energy);
        rows.extend(format::crossbar_rows(&proposed, &spec, &cfg.energy));
        format::write_crossbar_csv(&out.join(CROSSBARS_CSV), &rows)
    })?;
    p.written.push(CROSSBARS_CSV);

    Ok(PipelineRun {
        network: net,
        pruned_count: pruned.removed_count,
        batch,
        units,
        baseline,
        proposed,
        simulations,
        report,
        normalization_warnings: warnings,
    })
}
