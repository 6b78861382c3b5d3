//! Scenario files.
//!
//! A scenario is a TOML document. The network is described either by
//! explicit per-path profiles (`[paths]`) or by a sensor field to deploy
//! (`[field]`), never both. See `scenarios/` for complete examples.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::distributor::Scheme;
use crate::energy::Energy;
use crate::model::{self, EnergyParams, LinkParams, PathId, PathProfile};
use crate::routing::Estimation;
use crate::sim::{FaultScript, FaultTarget, SimConfig};
use crate::sim::fault::ScriptedFault;
use crate::topology::{FieldSpec, NodeId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// Paths given directly by hop count, hop delay and distance.
    Paths {
        profiles: Vec<PathProfile>,
        spares_per_path: u32,
    },
    /// Deployed (or imported) sensor field with route discovery.
    Field {
        spec: FieldSpec,
        topology_file: Option<PathBuf>,
        source: NodeId,
        sink: NodeId,
        max_paths: usize,
        estimation: Estimation,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub packets: u64,
    pub schemes: Vec<Scheme>,
    /// Idle nodes whose sensing power is added to every scheme's energy.
    pub background_nodes: u64,
    pub out_dir: Option<PathBuf>,
    pub energy: EnergyParams,
    pub initial_energy: Energy,
    pub link: LinkParams,
    pub sim: SimConfig,
    pub topology: TopologySpec,
    pub faults: FaultScript,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(invalid(
                field,
                format!("expected {n} values (one per path), got {}", v.len()),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SchemeSpec {
    Number(u8),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    packets: i64,
    #[serde(default = "default_m")]
    max_attempts: i64,
    #[serde(default)]
    seed: u64,
    schemes: Option<Vec<SchemeSpec>>,
    #[serde(default)]
    background_nodes: u64,
    #[serde(default)]
    loss_probability: f64,
    out_dir: Option<PathBuf>,
    energy: RawEnergy,
    link: LinkParams,
    paths: Option<RawPaths>,
    field: Option<RawField>,
    #[serde(default)]
    faults: Vec<RawFault>,
}

fn default_m() -> i64 {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    tx_electronics: f64,
    amplifier: f64,
    rx_electronics: f64,
    #[serde(default = "default_k")]
    path_loss_exponent: f64,
    bit_tx_time: f64,
    bit_rx_time: f64,
    sensing_power: f64,
    packet_bits: f64,
    initial_energy: f64,
    idle_power: Option<f64>,
    #[serde(default = "default_control_bits")]
    control_bits: f64,
}

fn default_k() -> f64 {
    2.0
}

fn default_control_bits() -> f64 {
    100.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    hops: Vec<i64>,
    hop_delay: Option<OneOrMany>,
    distance: OneOrMany,
    #[serde(default = "default_spares")]
    spares_per_path: u32,
}

fn default_spares() -> u32 {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    width: f64,
    height: f64,
    node_count: u32,
    radio_range: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_redundant")]
    redundant_fraction: f64,
    topology_file: Option<PathBuf>,
    source: u32,
    sink: u32,
    #[serde(default = "default_max_paths")]
    max_paths: usize,
    #[serde(default)]
    estimation: RawEstimation,
}

fn default_redundant() -> f64 {
    0.05
}

fn default_max_paths() -> usize {
    5
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawEstimation {
    #[default]
    Analytic,
    Probed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    time: f64,
    kind: String,
    node: Option<u32>,
    link: Option<[u32; 2]>,
}

/// Reads and validates a scenario file. Relative paths inside it are
/// resolved against the file's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, base)
}

pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string().trim().to_string()))?;

    if raw.packets < 0 {
        return Err(invalid("packets", format!("must be >= 0, got {}", raw.packets)));
    }
    if raw.max_attempts < 1 {
        return Err(invalid(
            "max_attempts",
            format!("must be >= 1, got {}", raw.max_attempts),
        ));
    }
    let schemes = match raw.schemes {
        None => Scheme::ALL.to_vec(),
        Some(list) => {
            let mut out = Vec::new();
            for s in list {
                let text = match s {
                    SchemeSpec::Number(n) => n.to_string(),
                    SchemeSpec::Name(n) => n,
                };
                let scheme: Scheme = text.parse().map_err(|e: String| invalid("schemes", e))?;
                if !out.contains(&scheme) {
                    out.push(scheme);
                }
            }
            out
        }
    };

    let e = &raw.energy;
    let energy = EnergyParams {
        tx_electronics: e.tx_electronics,
        amplifier: e.amplifier,
        rx_electronics: e.rx_electronics,
        path_loss_exponent: e.path_loss_exponent,
        bit_tx_time: e.bit_tx_time,
        bit_rx_time: e.bit_rx_time,
        sensing_power: e.sensing_power,
        packet_bits: e.packet_bits,
    };
    energy.validate().map_err(|err| match err {
        model::ModelError::InvalidEnergy { field, reason } => {
            invalid(&format!("energy.{field}"), reason)
        }
        other => invalid("energy", other.to_string()),
    })?;
    if !(e.initial_energy.is_finite() && e.initial_energy > 0.0) {
        return Err(invalid(
            "energy.initial_energy",
            format!("must be > 0, got {}", e.initial_energy),
        ));
    }
    raw.link.validate().map_err(|err| match err {
        model::ModelError::InvalidLink { field, reason } => invalid(&format!("link.{field}"), reason),
        other => invalid("link", other.to_string()),
    })?;

    let sim = SimConfig {
        max_attempts: raw.max_attempts as u32,
        seed: raw.seed,
        idle_power: e.idle_power.unwrap_or(SimConfig::default().idle_power),
        control_bits: e.control_bits,
        loss_probability: raw.loss_probability,
        trace: false,
    };
    sim.validate().map_err(|err| invalid("energy", err.to_string()))?;

    let topology = match (raw.paths, raw.field) {
        (Some(_), Some(_)) => {
            return Err(invalid("paths", "give either [paths] or [field], not both"))
        }
        (None, None) => return Err(invalid("paths", "missing: give [paths] or [field]")),
        (Some(p), None) => paths_spec(p, &energy, &raw.link)?,
        (None, Some(f)) => field_spec(f, base_dir, e.initial_energy)?,
    };

    let mut faults = FaultScript::none();
    for (i, f) in raw.faults.iter().enumerate() {
        let field = format!("faults[{i}]");
        if !(f.time.is_finite() && f.time >= 0.0) {
            return Err(invalid(&format!("{field}.time"), format!("must be >= 0, got {}", f.time)));
        }
        let target = match (f.kind.as_str(), f.node, f.link) {
            ("node_fail", Some(n), None) => FaultTarget::NodeFail { node: NodeId(n) },
            ("link_fail", None, Some([a, b])) => FaultTarget::LinkFail {
                a: NodeId(a),
                b: NodeId(b),
            },
            ("node_fail", ..) => {
                return Err(invalid(&field, "node_fail needs `node` and no `link`"))
            }
            ("link_fail", ..) => {
                return Err(invalid(&field, "link_fail needs `link = [a, b]` and no `node`"))
            }
            (other, ..) => {
                return Err(invalid(
                    &format!("{field}.kind"),
                    format!("expected node_fail or link_fail, got `{other}`"),
                ))
            }
        };
        faults.0.push(ScriptedFault {
            time: f.time,
            target,
        });
    }

    Ok(ScenarioConfig {
        packets: raw.packets as u64,
        schemes,
        background_nodes: raw.background_nodes,
        out_dir: raw.out_dir.map(|d| base_dir.join(d)),
        energy,
        initial_energy: Energy::from_joules(e.initial_energy),
        link: raw.link,
        sim,
        topology,
        faults,
    })
}

fn paths_spec(
    p: RawPaths,
    energy: &EnergyParams,
    link: &LinkParams,
) -> Result<TopologySpec, ScenarioError> {
    let n = p.hops.len();
    if n == 0 {
        return Err(invalid("paths.hops", "at least one path is required"));
    }
    let default_tau = model::per_hop_delay(energy.packet_bits, link);
    let taus = match &p.hop_delay {
        Some(v) => v.expand(n, "paths.hop_delay")?,
        None => vec![default_tau; n],
    };
    let distances = p.distance.expand(n, "paths.distance")?;
    let mut profiles = Vec::with_capacity(n);
    for (i, &h) in p.hops.iter().enumerate() {
        if !(1..=i64::from(u32::MAX)).contains(&h) {
            return Err(invalid(&format!("paths.hops[{i}]"), format!("must be >= 1, got {h}")));
        }
        let profile = PathProfile::new(PathId(i), h as u32, taus[i], distances[i]);
        profile
            .validate(None)
            .map_err(|e| invalid(&format!("paths[{i}]"), e.to_string()))?;
        profiles.push(profile);
    }
    Ok(TopologySpec::Paths {
        profiles,
        spares_per_path: p.spares_per_path,
    })
}

fn field_spec(
    f: RawField,
    base_dir: &Path,
    initial_energy: f64,
) -> Result<TopologySpec, ScenarioError> {
    for (name, v) in [("field.width", f.width), ("field.height", f.height)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(name, format!("must be > 0, got {v}")));
        }
    }
    if !(f.radio_range.is_finite() && f.radio_range > 0.0) {
        return Err(invalid(
            "field.radio_range",
            format!("must be > 0, got {}", f.radio_range),
        ));
    }
    if !(0.0..=1.0).contains(&f.redundant_fraction) {
        return Err(invalid(
            "field.redundant_fraction",
            format!("must lie in [0, 1], got {}", f.redundant_fraction),
        ));
    }
    if f.source == f.sink {
        return Err(invalid("field.sink", "must differ from field.source"));
    }
    if f.max_paths == 0 {
        return Err(invalid("field.max_paths", "must be >= 1"));
    }
    let topology_file = f.topology_file.map(|p| base_dir.join(p));
    if let Some(p) = &topology_file {
        if !p.is_file() {
            return Err(invalid(
                "field.topology_file",
                format!("{} does not exist", p.display()),
            ));
        }
    } else {
        for (name, id) in [("field.source", f.source), ("field.sink", f.sink)] {
            if id >= f.node_count {
                return Err(invalid(
                    name,
                    format!("node {id} is outside 0..{}", f.node_count),
                ));
            }
        }
    }
    let mut spec = FieldSpec::new(f.width, f.height, f.node_count, f.seed);
    spec.radio_range = f.radio_range;
    spec.redundant_fraction = f.redundant_fraction;
    spec.initial_energy = Energy::from_joules(initial_energy);
    Ok(TopologySpec::Field {
        spec,
        topology_file,
        source: NodeId(f.source),
        sink: NodeId(f.sink),
        max_paths: f.max_paths,
        estimation: match f.estimation {
            RawEstimation::Analytic => Estimation::Analytic,
            RawEstimation::Probed => Estimation::Probed { reverse: None },
        },
    })
}
