//! Runs every requested scheme on a scenario and writes the comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::distributor::{self, AllocError, Distribution, EdpBoundReport, Scheme};
use crate::energy::Energy;
use crate::model::PathProfile;
use crate::routing::{self, RouteEntry, RoutingError, RoutingTable};
use crate::scenario::{ScenarioConfig, TopologySpec};
use crate::sim::{self, SimError, TransferReport};
use crate::topology::{self, NodeId, TopologyError, TopologyGraph};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no route from {from} to {sink}")]
    NoRoutes { from: NodeId, sink: NodeId },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Topology plus the routes the source will use.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: TopologyGraph,
    pub table: RoutingTable,
    pub source: NodeId,
    pub sink: NodeId,
}

impl Network {
    pub fn entries(&self) -> &[RouteEntry] {
        self.table.routes_to(self.sink)
    }

    pub fn profiles(&self) -> Vec<PathProfile> {
        self.entries().iter().map(|e| e.profile).collect()
    }
}

pub fn build_network(cfg: &ScenarioConfig) -> Result<Network, HarnessError> {
    match &cfg.topology {
        TopologySpec::Paths {
            profiles,
            spares_per_path,
        } => {
            let syn = routing::synthetic_topology(profiles, *spares_per_path, cfg.initial_energy)?;
            let entries = syn
                .routes
                .iter()
                .zip(profiles)
                .map(|(route, profile)| RouteEntry {
                    route: route.clone(),
                    profile: *profile,
                    params: cfg.energy,
                })
                .collect();
            let table = RoutingTable::from_entries(&syn.graph, syn.source, syn.sink, entries);
            Ok(Network {
                graph: syn.graph,
                table,
                source: syn.source,
                sink: syn.sink,
            })
        }
        TopologySpec::Field {
            spec,
            topology_file,
            source,
            sink,
            max_paths,
            estimation,
        } => {
            let graph = match topology_file {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    TopologyGraph::from_text(&text, spec.radio_range)?
                }
                None => topology::deploy_field(spec)?,
            };
            let table = routing::build_routing_table(
                &graph,
                *source,
                &[*sink],
                *max_paths,
                &cfg.link,
                &cfg.energy,
                *estimation,
            )?;
            if table.routes_to(*sink).is_empty() {
                return Err(HarnessError::NoRoutes {
                    from: *source,
                    sink: *sink,
                });
            }
            Ok(Network {
                graph,
                table,
                source: *source,
                sink: *sink,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub distribution: Distribution,
    /// Per-path delivery time in table order; `None` for a failed path.
    pub path_delays: Vec<Option<f64>>,
    /// Slowest path (paths run concurrently).
    pub overall_delay: f64,
    /// Energy spent by the simulated nodes.
    pub network_energy: Energy,
    /// Sensing power of the configured background nodes over the round.
    pub background_energy: f64,
    pub transfer: TransferReport,
    /// Adaptive scheme only.
    pub edp_check: Option<EdpBoundReport>,
}

impl SchemeResult {
    pub fn total_energy(&self) -> f64 {
        self.network_energy.joules() + self.background_energy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub claim: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub packets: u64,
    pub paths: Vec<PathProfile>,
    pub schemes: Vec<SchemeResult>,
    pub orderings: Vec<OrderingCheck>,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn scheme(&self, s: Scheme) -> Option<&SchemeResult> {
        self.schemes.iter().find(|r| r.scheme == s)
    }

    pub fn orderings_hold(&self) -> bool {
        self.orderings.iter().all(|o| o.holds)
    }
}

fn run_scheme(
    cfg: &ScenarioConfig,
    net: &Network,
    scheme: Scheme,
) -> Result<SchemeResult, HarnessError> {
    let profiles = net.profiles();
    let dist = distributor::allocate(scheme, &cfg.energy, &profiles, cfg.packets)?;
    let edp_check = match scheme {
        Scheme::Adaptive => Some(distributor::verify_edp_bound(&cfg.energy, &profiles, &dist)?),
        _ => None,
    };
    let (transfer, _, _) = sim::run_transfer(
        net.graph.clone(),
        net.table.clone(),
        net.sink,
        &dist,
        &cfg.energy,
        &cfg.link,
        cfg.faults.clone(),
        &cfg.sim,
    )?;
    let path_delays = profiles
        .iter()
        .map(|p| transfer.path(p.id).and_then(|r| r.delay))
        .collect();
    Ok(SchemeResult {
        scheme,
        overall_delay: transfer.completion_time,
        network_energy: transfer.total_energy,
        background_energy: cfg.background_nodes as f64
            * cfg.energy.sensing_power
            * transfer.completion_time,
        path_delays,
        distribution: dist,
        transfer,
        edp_check,
    })
}

/// Allocates and simulates every scheme of `cfg` on its own copy of the
/// network. With `parallel`, schemes run on separate threads; results are
/// always in the configured scheme order.
pub fn run_comparison(
    cfg: &ScenarioConfig,
    parallel: bool,
) -> Result<ComparisonReport, HarnessError> {
    let net = build_network(cfg)?;
    let results: Vec<Result<SchemeResult, HarnessError>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .schemes
                .iter()
                .map(|&s| {
                    let net = &net;
                    scope.spawn(move || run_scheme(cfg, net, s))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scheme thread panicked"))
                .collect()
        })
    } else {
        cfg.schemes.iter().map(|&s| run_scheme(cfg, &net, s)).collect()
    };
    let schemes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut warnings = Vec::new();
    for r in &schemes {
        if let Some(inf) = r.distribution.infeasible {
            warnings.push(format!(
                "{}: summed EDP-bounded capacity {:.3} packets is below the demand of {}",
                r.scheme, inf.capacity, inf.demand
            ));
        }
        if r.transfer.dropped > 0 {
            warnings.push(format!(
                "{}: {} packets dropped",
                r.scheme, r.transfer.dropped
            ));
        }
    }

    let orderings = ordering_checks(&schemes);
    Ok(ComparisonReport {
        packets: cfg.packets,
        paths: net.profiles(),
        schemes,
        orderings,
        warnings,
    })
}

/// Delay: adaptive < equal split < single path. Energy: single path ≤
/// adaptive ≤ equal split, with adaptive strictly closer to single path.
/// Only claims whose schemes were all run are checked.
pub fn ordering_checks(results: &[SchemeResult]) -> Vec<OrderingCheck> {
    let get = |s: Scheme| results.iter().find(|r| r.scheme == s);
    let (s1, s2, s3) = (
        get(Scheme::SinglePath),
        get(Scheme::EqualSplit),
        get(Scheme::Adaptive),
    );
    let mut out = Vec::new();
    let mut check = |claim: &str, holds: bool| {
        out.push(OrderingCheck {
            claim: claim.to_string(),
            holds,
        })
    };
    if let (Some(s3), Some(s2)) = (s3, s2) {
        check("delay adaptive < equal-split", s3.overall_delay < s2.overall_delay);
    }
    if let (Some(s2), Some(s1)) = (s2, s1) {
        check("delay equal-split < single-path", s2.overall_delay < s1.overall_delay);
    }
    if let (Some(s1), Some(s3)) = (s1, s3) {
        check(
            "energy single-path <= adaptive",
            s1.total_energy() <= s3.total_energy(),
        );
    }
    if let (Some(s3), Some(s2)) = (s3, s2) {
        check(
            "energy adaptive <= equal-split",
            s3.total_energy() <= s2.total_energy(),
        );
    }
    if let (Some(s1), Some(s2), Some(s3)) = (s1, s2, s3) {
        let (e1, e2, e3) = (s1.total_energy(), s2.total_energy(), s3.total_energy());
        check(
            "energy adaptive closer to single-path than to equal-split",
            (e3 - e1).abs() < (e3 - e2).abs(),
        );
    }
    out
}

/// Shortest decimal that round-trips the value rounded to 10 significant
/// digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("valid float");
    format!("{rounded}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `distribution.csv`, `delays.csv`, `energy.csv` and `report.txt`
/// into `dir`, creating it if needed. Output depends only on the report.
pub fn emit_outputs(report: &ComparisonReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut header = vec!["path_id".to_string(), "hops".to_string()];
    header.extend(report.schemes.iter().map(|r| r.scheme.name().to_string()));
    let rows: Vec<Vec<String>> = if report.schemes.is_empty() {
        Vec::new()
    } else {
        report
            .paths
            .iter()
            .map(|p| {
                let mut row = vec![p.id.to_string(), p.hops.to_string()];
                row.extend(report.schemes.iter().map(|r| {
                    r.distribution.packets_on(p.id).unwrap_or(0).to_string()
                }));
                row
            })
            .collect()
    };
    write_csv(&dir.join("distribution.csv"), &header, &rows)?;

    let header: Vec<String> = ["scheme", "path_id", "hops", "packets", "delay_s"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for r in &report.schemes {
        for (p, delay) in report.paths.iter().zip(&r.path_delays) {
            rows.push(vec![
                r.scheme.name().to_string(),
                p.id.to_string(),
                p.hops.to_string(),
                r.distribution.packets_on(p.id).unwrap_or(0).to_string(),
                delay.map_or_else(|| "failed".to_string(), fmt_sig),
            ]);
        }
    }
    write_csv(&dir.join("delays.csv"), &header, &rows)?;

    let header: Vec<String> = [
        "scheme",
        "total_energy_j",
        "network_energy_j",
        "background_energy_j",
        "overall_delay_s",
        "delivered",
        "dropped",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = report
        .schemes
        .iter()
        .map(|r| {
            vec![
                r.scheme.name().to_string(),
                fmt_sig(r.total_energy()),
                fmt_sig(r.network_energy.joules()),
                fmt_sig(r.background_energy),
                fmt_sig(r.overall_delay),
                r.transfer.delivered.to_string(),
                r.transfer.dropped.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("energy.csv"), &header, &rows)?;

    let path = dir.join("report.txt");
    fs::write(&path, render_report(report)).map_err(io_err(&path))?;
    Ok(())
}

pub fn render_report(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let hops: Vec<String> = report.paths.iter().map(|p| p.hops.to_string()).collect();
    writeln!(s, "packets: {}", report.packets).unwrap();
    writeln!(s, "paths: {} (hops {})", report.paths.len(), hops.join(", ")).unwrap();
    for r in &report.schemes {
        writeln!(s).unwrap();
        writeln!(s, "scheme {} ({})", r.scheme.number(), r.scheme).unwrap();
        let dist: Vec<String> = r.distribution.packet_vector().iter().map(u64::to_string).collect();
        writeln!(s, "  distribution: [{}]", dist.join(", ")).unwrap();
        let delays: Vec<String> = r
            .path_delays
            .iter()
            .map(|d| d.map_or_else(|| "failed".to_string(), fmt_sig))
            .collect();
        writeln!(s, "  path delays (s): [{}]", delays.join(", ")).unwrap();
        writeln!(s, "  overall delay (s): {}", fmt_sig(r.overall_delay)).unwrap();
        writeln!(s, "  energy (J): {}", fmt_sig(r.total_energy())).unwrap();
        writeln!(
            s,
            "  delivered/dropped: {}/{}",
            r.transfer.delivered, r.transfer.dropped
        )
        .unwrap();
        for f in &r.transfer.faults {
            writeln!(
                s,
                "  fault on path {} hop {}: {:?}, recovery {:?}",
                f.path,
                f.hop,
                f.case(),
                f.outcome
            )
            .unwrap();
        }
        if let Some(edp) = &r.edp_check {
            let over: Vec<String> = edp
                .paths
                .iter()
                .filter(|c| !c.passes)
                .map(|c| c.path.to_string())
                .collect();
            let verdict = if over.is_empty() {
                "met on every path".to_string()
            } else if edp.infeasible.is_none() {
                format!(
                    "exceeded on path(s) {} after rounding to whole packets",
                    over.join(", ")
                )
            } else {
                format!("exceeded on path(s) {}", over.join(", "))
            };
            writeln!(s, "  EDP bound: {verdict} (EDP_avg {})", fmt_sig(edp.edp_avg)).unwrap();
        }
    }
    if !report.orderings.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "ordering checks:").unwrap();
        for o in &report.orderings {
            writeln!(s, "  [{}] {}", if o.holds { "ok" } else { "FAIL" }, o.claim).unwrap();
        }
    }
    if !report.warnings.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "warnings:").unwrap();
        for w in &report.warnings {
            writeln!(s, "  {w}").unwrap();
        }
    }
    s
}
