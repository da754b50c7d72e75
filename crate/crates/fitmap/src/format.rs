//! On-disk formats. Every JSON document carries a `version` field, is
//! written pretty-printed with a trailing newline, and lists collections in
//! a canonical order so identical content gives identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fitmap_core::{
    CompareReport, CrossbarSpec, EnergyModel, Mapping, Metadata, Network, Neuron, NeuronKind,
    NodeId, RateVector, Synapse,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronRecord {
    id: NodeId,
    kind: NeuronKind,
    #[serde(default)]
    threshold: f64,
    #[serde(default = "one")]
    gain: f64,
    /// `null` disables saturation.
    max_rate: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynapseRecord {
    src: NodeId,
    dst: NodeId,
    weight: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataRecord {
    #[serde(default)]
    name: String,
    #[serde(default)]
    topology: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    extra: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    version: u64,
    neurons: Vec<NeuronRecord>,
    synapses: Vec<SynapseRecord>,
    #[serde(default)]
    metadata: MetadataRecord,
}

#[derive(Deserialize)]
struct Probe {
    version: Option<serde_json::Value>,
}

/// Pretty JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: "<output>".into(),
        message: e.to_string(),
    })?;
    text.push('\n');
    Ok(text)
}

fn syntax(label: &str, e: serde_json::Error) -> Error {
    if e.is_syntax() || e.is_eof() {
        Error::Syntax {
            path: label.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    } else {
        Error::Format {
            path: label.into(),
            message: e.to_string(),
        }
    }
}

/// Parses a versioned document, rejecting any version but the current one
/// before looking at the rest of the content.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, label: &str) -> Result<T> {
    let probe: Probe = serde_json::from_str(text).map_err(|e| syntax(label, e))?;
    match probe.version {
        None => {
            return Err(Error::Format {
                path: label.into(),
                message: "missing `version`".into(),
            })
        }
        Some(v) => match v.as_u64() {
            Some(FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::UnknownVersion {
                    path: label.into(),
                    found,
                    expected: FORMAT_VERSION,
                })
            }
            None => {
                return Err(Error::Format {
                    path: label.into(),
                    message: format!("bad version {v}"),
                })
            }
        },
    }
    serde_json::from_str(text).map_err(|e| syntax(label, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------- networks

/// Parses a `.snn.json` document into a validated network.
pub fn parse_network(text: &str) -> Result<Network> {
    parse_network_labeled(text, "<input>")
}

fn parse_network_labeled(text: &str, label: &str) -> Result<Network> {
    let file: NetworkFile = parse_versioned(text, label)?;
    let neurons = file
        .neurons
        .into_iter()
        .map(|n| Neuron {
            id: n.id,
            kind: n.kind,
            threshold: n.threshold,
            gain: n.gain,
            max_rate: n.max_rate.unwrap_or(f64::INFINITY),
        })
        .collect();
    let synapses = file
        .synapses
        .into_iter()
        .map(|s| Synapse {
            src: s.src,
            dst: s.dst,
            weight: s.weight,
        })
        .collect();
    let m = file.metadata;
    let net = Network {
        neurons,
        synapses,
        metadata: Metadata {
            name: m.name,
            topology: m.topology,
            seed: m.seed,
            extra: m.extra,
        },
    };
    net.validate()?;
    Ok(net)
}

/// Canonical text: neurons by id, synapses by `(src, dst)`, shortest
/// round-trip decimals.
pub fn serialize_network(net: &Network) -> Result<String> {
    net.validate()?;
    let mut net = net.clone();
    net.canonicalize();
    let file = NetworkFile {
        version: FORMAT_VERSION,
        neurons: net
            .neurons
            .iter()
            .map(|n| NeuronRecord {
                id: n.id,
                kind: n.kind,
                threshold: n.threshold,
                gain: n.gain,
                max_rate: n.max_rate.is_finite().then_some(n.max_rate),
            })
            .collect(),
        synapses: net
            .synapses
            .iter()
            .map(|s| SynapseRecord {
                src: s.src,
                dst: s.dst,
                weight: s.weight,
            })
            .collect(),
        metadata: MetadataRecord {
            name: net.metadata.name.clone(),
            topology: net.metadata.topology.clone(),
            seed: net.metadata.seed,
            extra: net.metadata.extra.clone(),
        },
    };
    to_canonical_json(&file)
}

pub fn read_network(path: &Path) -> Result<Network> {
    parse_network_labeled(&read_text(path)?, &label(path))
}

pub fn write_network(path: &Path, net: &Network) -> Result<()> {
    write_text(path, &serialize_network(net)?)
}

// ------------------------------------------------------------------- rates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSample {
    pub name: String,
    pub rates: RateVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesFile {
    pub version: u64,
    pub samples: Vec<RateSample>,
}

impl RatesFile {
    pub fn new(samples: &[RateVector]) -> Self {
        RatesFile {
            version: FORMAT_VERSION,
            samples: samples
                .iter()
                .enumerate()
                .map(|(i, r)| RateSample {
                    name: format!("sample{i}"),
                    rates: r.clone(),
                })
                .collect(),
        }
    }

    pub fn rates(&self) -> Vec<RateVector> {
        self.samples.iter().map(|s| s.rates.clone()).collect()
    }
}

pub fn read_rates(path: &Path) -> Result<RatesFile> {
    let file: RatesFile = parse_versioned(&read_text(path)?, &label(path))?;
    if let Some((id, r)) = file
        .samples
        .iter()
        .flat_map(|s| s.rates.iter())
        .find(|(_, r)| !(r.is_finite() && *r >= 0.0))
    {
        return Err(Error::Format {
            path: label(path),
            message: format!("rate {r} of neuron {id} must be finite and >= 0"),
        });
    }
    Ok(file)
}

/// Non-finite rates (only reachable with saturation disabled) are written
/// as `null` by the JSON encoder; callers keep saturation on for files.
pub fn write_rates(path: &Path, samples: &[RateVector]) -> Result<()> {
    write_text(path, &to_canonical_json(&RatesFile::new(samples))?)
}

// ---------------------------------------------------------------- mappings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub version: u64,
    pub mapping: Mapping,
}

pub fn read_mapping(path: &Path) -> Result<Mapping> {
    let file: MapFile = parse_versioned(&read_text(path)?, &label(path))?;
    Ok(file.mapping)
}

pub fn write_mapping(path: &Path, mapping: &Mapping) -> Result<()> {
    write_text(
        path,
        &to_canonical_json(&MapFile {
            version: FORMAT_VERSION,
            mapping: mapping.clone(),
        })?,
    )
}

// ----------------------------------------------------------------- reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub version: u64,
    pub report: CompareReport,
}

pub fn read_report(path: &Path) -> Result<CompareReport> {
    let file: ReportFile = parse_versioned(&read_text(path)?, &label(path))?;
    Ok(file.report)
}

pub fn write_report(path: &Path, report: &CompareReport) -> Result<()> {
    write_text(
        path,
        &to_canonical_json(&ReportFile {
            version: FORMAT_VERSION,
            report: report.clone(),
        })?,
    )
}

/// One row per crossbar, for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossbarRow {
    pub variant: String,
    pub crossbar: usize,
    pub inputs_used: usize,
    pub outputs_used: usize,
    pub crosspoints_used: usize,
    pub neuron_utilization: f64,
    pub synapse_utilization: f64,
    pub wasted_energy: f64,
}

pub fn crossbar_rows(mapping: &Mapping, spec: &CrossbarSpec, em: &EnergyModel) -> Vec<CrossbarRow> {
    let n = spec.n as f64;
    mapping
        .crossbars
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let outputs = x.outputs_used() as f64;
            let cells = x.crosspoints_used() as f64;
            CrossbarRow {
                variant: mapping.variant.to_string(),
                crossbar: i,
                inputs_used: x.inputs.len(),
                outputs_used: x.outputs_used(),
                crosspoints_used: x.crosspoints_used(),
                neuron_utilization: 100.0 * outputs / n,
                synapse_utilization: 100.0 * cells / (n * n),
                wasted_energy: (n - outputs) * em.e_idle_neuron
                    + (n * n - cells) * em.e_idle_synapse,
            }
        })
        .collect()
}

pub fn write_crossbar_csv(path: &Path, rows: &[CrossbarRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
