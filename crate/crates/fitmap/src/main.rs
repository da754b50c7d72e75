use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fitmap::error::{Error, Result};
use fitmap::format;
use fitmap::pipeline::{
    self, check_mapping, normalized_units, simulate_batch, BatchSource, NetworkSource,
    PipelineConfig,
};
use fitmap_core::{
    map_baseline, pack_proposed, prune_weights, recombine, unroll_network, verify_mapping,
    CrossbarSpec, EnergyModel, FactorRule, InputOrder, MappingSource, Network, SimConfig,
    UnitNetwork, WeightSampler,
};

/// Maps spiking neural networks onto fixed-size crossbars by fanin
/// decomposition, and compares the result with a fanin-truncating baseline.
#[derive(Parser)]
#[command(name = "fitmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network file.
    Gen(GenArgs),
    /// Remove synapses with |w| below epsilon.
    Prune(PruneArgs),
    /// Replace every neuron by its chain of fanin-of-two units.
    Unroll(IoArgs),
    /// Unroll and normalize against a calibration batch.
    Normalize(NormalizeArgs),
    /// Map a network (baseline) or a unit network (proposed) onto crossbars.
    Map(MapArgs),
    /// Simulate steady-state firing rates for a batch of inputs.
    Simulate(SimulateArgs),
    /// Compare a baseline and a proposed mapping of the same network.
    Compare(CompareArgs),
    /// Run every stage and write mappings, report and manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Feedforward layer sizes, e.g. 784,100,10.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["reservoir", "fixture"])]
    layers: Option<Vec<usize>>,
    /// Recurrent reservoir with this many neurons.
    #[arg(long, conflicts_with = "fixture")]
    reservoir: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    connection_prob: f64,
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    /// The three-neuron, six-input example used to illustrate decomposition.
    Fig5,
}

#[derive(Args)]
struct WeightArgs {
    /// Weights are drawn from [low, high] / fanin.
    #[arg(long, default_value_t = 0.0)]
    weight_low: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_high: f64,
    /// Draw from [low, high] without fanin scaling.
    #[arg(long)]
    unscaled: bool,
}

impl WeightArgs {
    fn sampler(&self) -> WeightSampler {
        let (low, high) = (self.weight_low, self.weight_high);
        if self.unscaled {
            WeightSampler::Uniform { low, high }
        } else {
            WeightSampler::FaninScaled { low, high }
        }
    }
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    /// Input rates file; a seeded random batch is used when absent.
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BatchArgs {
    fn source(&self) -> BatchSource {
        match &self.batch {
            Some(p) => BatchSource::File(p.clone()),
            None => BatchSource::Random {
                size: self.batch_size,
            },
        }
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, default_value_t = 1e-9)]
    convergence_tol: f64,
    /// Remove the r_max clamp from every neuron.
    #[arg(long)]
    no_saturation: bool,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            max_iterations: self.max_iterations,
            damping: self.damping,
            convergence_tol: self.convergence_tol,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    PartialSum,
    Synapse,
}

impl From<Rule> for FactorRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::PartialSum => FactorRule::PartialSum,
            Rule::Synapse => FactorRule::Synapse,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Source,
    Magnitude,
}

impl From<Order> for InputOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::Source => InputOrder::Source,
            Order::Magnitude => InputOrder::Magnitude,
        }
    }
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, value_enum, default_value_t = Rule::PartialSum)]
    factor_rule: Rule,
    /// Order in which a neuron's inputs enter its chain.
    #[arg(long, value_enum, default_value_t = Order::Source)]
    input_order: Order,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Baseline,
    Proposed,
}

#[derive(Args)]
struct MapArgs {
    /// An original network, or a unit network written by `unroll`/`normalize`.
    #[arg(long)]
    network: PathBuf,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = 128)]
    crossbar_n: usize,
    /// Recombination bound for the proposed variant; defaults to n / 2 + 1.
    #[arg(long)]
    max_fanin: Option<usize>,
    #[arg(long)]
    crossbar_budget: Option<usize>,
    /// Also write the recombined units that the mapping refers to.
    #[arg(long)]
    units_out: Option<PathBuf>,
    /// Per-crossbar CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// For unit networks: report original-neuron rates instead of raw unit rates.
    #[arg(long)]
    denormalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long, default_value_t = 50e-12)]
    e_spike: f64,
    #[arg(long, default_value_t = 147e-12)]
    e_route: f64,
    #[arg(long, default_value_t = 50e-12)]
    e_idle_neuron: f64,
    #[arg(long, default_value_t = 1e-12)]
    e_idle_synapse: f64,
    /// Observation window for interconnect energy, in seconds.
    #[arg(long, default_value_t = 1.0)]
    window: f64,
}

impl EnergyArgs {
    fn model(&self) -> EnergyModel {
        EnergyModel {
            e_spike: self.e_spike,
            e_route: self.e_route,
            e_idle_neuron: self.e_idle_neuron,
            e_idle_synapse: self.e_idle_synapse,
            ..EnergyModel::default()
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    /// The (pruned) network both mappings were built from.
    #[arg(long)]
    network: PathBuf,
    /// The units the proposed mapping packs, as written by `map --units-out`.
    #[arg(long)]
    units: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    proposed: PathBuf,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, conflicts_with_all = ["layers", "fixture"])]
    network: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', conflicts_with = "fixture")]
    layers: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, value_enum, default_value_t = Rule::PartialSum)]
    factor_rule: Rule,
    /// Order in which a neuron's inputs enter its chain.
    #[arg(long, value_enum, default_value_t = Order::Source)]
    input_order: Order,
    #[arg(long, default_value_t = 128)]
    crossbar_n: usize,
    /// Recombination bound; defaults to n / 2 + 1.
    #[arg(long)]
    max_fanin: Option<usize>,
    #[arg(long)]
    crossbar_budget: Option<usize>,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[arg(long)]
    out: PathBuf,
}

fn read_units(path: &Path) -> Result<UnitNetwork> {
    Ok(UnitNetwork::from_network(&format::read_network(path)?)?)
}

fn is_unit_network(net: &Network) -> bool {
    net.metadata
        .extra
        .get("decomposed")
        .is_some_and(|v| v == "true")
}

fn load_for_sim(path: &Path, sim: &SimArgs) -> Result<Network> {
    let mut net = format::read_network(path)?;
    if sim.no_saturation {
        net.disable_saturation();
    }
    Ok(net)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let source = match (a.layers, a.reservoir, a.fixture) {
                (Some(layers), None, None) => NetworkSource::Feedforward(layers),
                (None, Some(size), None) => NetworkSource::Reservoir {
                    size,
                    connection_prob: a.connection_prob,
                },
                (None, None, Some(Fixture::Fig5)) => NetworkSource::Fig5,
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --layers, --reservoir, --fixture".into(),
                    ))
                }
            };
            let net = source.load(a.weights.sampler(), a.seed)?;
            format::write_network(&a.out, &net)?;
            println!(
                "{}: {} neurons, {} synapses",
                a.out.display(),
                net.neurons.len(),
                net.synapses.len()
            );
        }
        Command::Prune(a) => {
            let out = prune_weights(&format::read_network(&a.network)?, a.epsilon)?;
            format::write_network(&a.out, &out.network)?;
            println!(
                "removed {} synapses, {} orphaned neurons",
                out.removed_count,
                out.orphaned.len()
            );
        }
        Command::Unroll(a) => {
            let unet = unroll_network(&format::read_network(&a.network)?)?;
            format::write_network(&a.out, &unet.to_network())?;
            println!(
                "{} units, {} chain links",
                unet.units.len(),
                unet.chain_link_count()
            );
        }
        Command::Normalize(a) => {
            let mut net = format::read_network(&a.network)?;
            if a.sim.no_saturation {
                net.disable_saturation();
            }
            let batch = a.batch.source().load(&net, a.batch.seed)?;
            let (unet, warnings) = normalized_units(
                &net,
                &batch,
                a.k,
                a.factor_rule.into(),
                a.input_order.into(),
                &a.sim.config(),
            )?;
            format::write_network(&a.out, &unet.to_network())?;
            for (origin, stage) in &warnings {
                eprintln!(
                    "warning: neuron {origin} stage {stage}: no positive activation, factor 1"
                );
            }
            println!(
                "{} units normalized over {} samples",
                unet.units.len(),
                batch.len()
            );
        }
        Command::Map(a) => {
            let mut spec = CrossbarSpec::new(a.crossbar_n)?;
            if let Some(b) = a.crossbar_budget {
                spec = spec.with_budget(b);
            }
            let net = format::read_network(&a.network)?;
            let mapping = match a.variant {
                VariantArg::Baseline => {
                    if is_unit_network(&net) {
                        return Err(Error::Config(
                            "baseline mapping takes an original network".into(),
                        ));
                    }
                    let m = map_baseline(&net, &spec)?;
                    check_mapping(
                        verify_mapping(&m, MappingSource::Network(&net), &spec),
                        "baseline mapping",
                    )?;
                    m
                }
                VariantArg::Proposed => {
                    let unet = if is_unit_network(&net) {
                        UnitNetwork::from_network(&net)?
                    } else {
                        unroll_network(&net)?
                    };
                    let max_fanin = a.max_fanin.unwrap_or(pipeline::default_max_fanin(a.crossbar_n));
                    let unet = if unet.max_fanin == 2 {
                        recombine(&unet, max_fanin)?
                    } else {
                        unet
                    };
                    let m = pack_proposed(&unet, &spec)?;
                    check_mapping(
                        verify_mapping(&m, MappingSource::Units(&unet), &spec),
                        "proposed mapping",
                    )?;
                    if let Some(p) = &a.units_out {
                        format::write_network(p, &unet.to_network())?;
                    }
                    m
                }
            };
            format::write_mapping(&a.out, &mapping)?;
            if let Some(csv) = &a.csv {
                format::write_crossbar_csv(
                    csv,
                    &format::crossbar_rows(&mapping, &spec, &EnergyModel::default()),
                )?;
            }
            println!(
                "{}: {} crossbars, {} inter-crossbar edges, {} dropped synapses",
                mapping.variant,
                mapping.crossbar_count(),
                mapping.edges.len(),
                mapping.dropped_synapses.len()
            );
        }
        Command::Simulate(a) => {
            let net = load_for_sim(&a.network, &a.sim)?;
            let batch = a.batch.source().load(&net, a.batch.seed)?;
            let mut rates = simulate_batch(&net, &batch, &a.sim.config())?;
            if a.denormalize {
                if !is_unit_network(&net) {
                    return Err(Error::Config("--denormalize needs a unit network".into()));
                }
                let unet = UnitNetwork::from_network(&net)?;
                rates = rates.iter().map(|r| unet.denormalize(r)).collect();
            }
            format::write_rates(&a.out, &rates)?;
            println!("{} samples simulated", rates.len());
        }
        Command::Compare(a) => {
            let net = load_for_sim(&a.network, &a.sim)?;
            let mut units = read_units(&a.units)?;
            if a.sim.no_saturation {
                units
                    .units
                    .iter_mut()
                    .for_each(|u| u.max_rate = f64::INFINITY);
            }
            let baseline = format::read_mapping(&a.baseline)?;
            let proposed = format::read_mapping(&a.proposed)?;
            if baseline.n != proposed.n {
                return Err(Error::Config(format!(
                    "mappings use n = {} and n = {}",
                    baseline.n, proposed.n
                )));
            }
            let spec = CrossbarSpec::new(baseline.n)?;
            let widest = proposed.crossbars.iter().flat_map(|c| &c.columns).map(|c| c.cells.len()).max();
            if units.max_fanin == 2 && widest.is_some_and(|w| w > 2) {
                return Err(Error::Config(
                    "the proposed mapping packs recombined units; pass the units written by `map --units-out`".into(),
                ));
            }
            check_mapping(
                verify_mapping(&baseline, MappingSource::Network(&net), &spec),
                "baseline mapping",
            )?;
            check_mapping(
                verify_mapping(&proposed, MappingSource::Units(&units), &spec),
                "proposed mapping",
            )?;
            let batch = a.batch.source().load(&net, a.batch.seed)?;
            let sims = pipeline::run_simulations(&net, &units, &baseline, &batch, &a.sim.config())?;
            let report = pipeline::build_report(
                &net,
                &units,
                &spec,
                &baseline,
                &proposed,
                &sims,
                &a.energy.model(),
                a.energy.window,
            )?;
            format::write_report(&a.out, &report)?;
            print_summary(&report);
        }
        Command::Pipeline(a) => {
            let source = match (a.network, a.layers, a.fixture) {
                (Some(p), None, None) => NetworkSource::File(p),
                (None, Some(layers), None) => NetworkSource::Feedforward(layers),
                (None, None, Some(Fixture::Fig5)) => NetworkSource::Fig5,
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --network, --layers, --fixture".into(),
                    ))
                }
            };
            let mut cfg = PipelineConfig::new(source, a.out);
            cfg.sampler = a.weights.sampler();
            cfg.epsilon = a.epsilon;
            cfg.k = a.k;
            cfg.factor_rule = a.factor_rule.into();
            cfg.input_order = a.input_order.into();
            cfg.crossbar_n = a.crossbar_n;
            cfg.crossbar_budget = a.crossbar_budget;
            cfg.max_fanin = a.max_fanin;
            cfg.batch = a.batch.source();
            cfg.seed = a.batch.seed;
            cfg.energy = a.energy.model();
            cfg.window_seconds = a.energy.window;
            cfg.saturation = !a.sim.no_saturation;
            cfg.sim = a.sim.config();
            let run = pipeline::run_pipeline(&cfg)?;
            print_summary(&run.report);
            println!("outputs in {}", cfg.out.display());
        }
    }
    Ok(())
}

fn print_summary(r: &fitmap_core::CompareReport) {
    let (b, p) = (&r.baseline, &r.proposed);
    let count = |v: usize| v.to_string();
    let pct = |v: f64| format!("{v:.3}");
    let sci = |v: f64| format!("{v:.3e}");
    let rows = [
        ("crossbars", count(b.crossbar_count), count(p.crossbar_count)),
        ("neuron utilization %", pct(b.neuron_utilization), pct(p.neuron_utilization)),
        ("synapse utilization %", pct(b.synapse_utilization), pct(p.synapse_utilization)),
        ("wasted energy J", sci(b.wasted_energy), sci(p.wasted_energy)),
        ("interconnect energy J", sci(b.interconnect_energy), sci(p.interconnect_energy)),
        ("dropped synapses", count(b.dropped_synapse_count), count(p.dropped_synapse_count)),
        ("max rel rate error", sci(b.max_rel_rate_error), sci(p.max_rel_rate_error)),
        ("argmax match", pct(b.argmax_match_rate), pct(p.argmax_match_rate)),
    ];
    println!("{:<24} {:>14} {:>14}", "", "baseline", "proposed");
    for (name, b, p) in rows {
        println!("{name:<24} {b:>14} {p:>14}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
