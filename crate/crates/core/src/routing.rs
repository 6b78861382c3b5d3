//! Node-disjoint route discovery, path-parameter estimation and routing
//! tables.
//!
//! Routes are sequences of protocol serials, so a node replacement (which
//! moves a serial to new hardware) leaves every route intact.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::Energy;
use crate::model::{self, EnergyParams, LinkParams, PathId, PathProfile};
use crate::topology::{Node, NodeId, Point, TopologyError, TopologyGraph};

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("source and sink are the same node {0}")]
    SameEndpoints(NodeId),
    #[error("node {0} is not alive")]
    NotAlive(NodeId),
    #[error("stale route {path}: {reason}")]
    StaleRoute { path: PathId, reason: String },
    #[error("cannot replace node {serial}: no alive redundant node")]
    UnrecoverableFailure { serial: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub id: PathId,
    /// Serials from source to sink inclusive.
    pub nodes: Vec<NodeId>,
}

impl Route {
    pub fn hops(&self) -> u32 {
        self.nodes.len().saturating_sub(1) as u32
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn sink(&self) -> NodeId {
        *self.nodes.last().expect("route has at least two nodes")
    }

    pub fn interior(&self) -> &[NodeId] {
        let n = self.nodes.len();
        if n <= 2 {
            &[]
        } else {
            &self.nodes[1..n - 1]
        }
    }
}

/// `path_id: id,id,…,id`
impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.id)?;
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

pub fn export_routes(routes: &[Route]) -> String {
    let mut out = String::new();
    for r in routes {
        writeln!(out, "{r}").expect("writing to a String");
    }
    out
}

type Adjacency = BTreeMap<NodeId, Vec<NodeId>>;

fn neighbours(adj: &Adjacency, u: NodeId) -> &[NodeId] {
    adj.get(&u).map_or(&[], Vec::as_slice)
}

/// BFS hop distances to `sink` over alive nodes for which `usable` holds.
fn hop_distances(
    adj: &Adjacency,
    sink: NodeId,
    usable: &dyn Fn(NodeId) -> bool,
) -> BTreeMap<NodeId, u32> {
    let mut dist = BTreeMap::from([(sink, 0u32)]);
    let mut queue = VecDeque::from([sink]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for &v in neighbours(adj, u) {
            if usable(v) && !dist.contains_key(&v) {
                dist.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Repeated shortest-path extraction: find a minimum-hop route, remove its
/// interior nodes, repeat. Among equal-length routes the one whose next
/// hops have the smallest ids wins. Redundant nodes are never used as
/// relays.
///
/// `source` and `sink` are serials. The greedy can return fewer routes
/// than the vertex-disjoint maximum, never more.
pub fn discover_disjoint_paths(
    g: &TopologyGraph,
    source: NodeId,
    sink: NodeId,
    max_paths: usize,
) -> Result<Vec<Route>, RoutingError> {
    if source == sink {
        return Err(RoutingError::SameEndpoints(source));
    }
    let src = g.resolve(source).ok_or(TopologyError::UnknownNode(source))?;
    let dst = g.resolve(sink).ok_or(TopologyError::UnknownNode(sink))?;
    for (serial, id) in [(source, src), (sink, dst)] {
        if !g.is_alive(id) {
            return Err(RoutingError::NotAlive(serial));
        }
    }

    let adj = g.adjacency();
    let mut removed = std::collections::BTreeSet::new();
    let mut direct_used = false;
    let mut routes = Vec::new();

    while routes.len() < max_paths {
        let usable = |v: NodeId| {
            v == src
                || (!removed.contains(&v) && g.node(v).is_some_and(|n: &Node| !n.is_redundant))
        };
        let dist = hop_distances(&adj, dst, &usable);
        let mut hops_left = match dist.get(&src) {
            Some(&d) => d,
            None => break,
        };
        if hops_left == 1 && direct_used {
            // The direct edge is spent; look for the next shortest relayed
            // route with the edge masked out.
            let relayed = |v: NodeId| v != src && usable(v);
            let dist_no_src = hop_distances(&adj, dst, &relayed);
            let best = neighbours(&adj, src)
                .iter()
                .copied()
                .filter(|&v| v != dst)
                .filter_map(|v| dist_no_src.get(&v).map(|&d| (d, v)))
                .min();
            let Some((d, first)) = best else { break };
            let mut path = vec![src, first];
            let mut cur = first;
            let mut left = d;
            while left > 0 {
                cur = next_hop(&adj, cur, left, &dist_no_src);
                path.push(cur);
                left -= 1;
            }
            removed.extend(path[1..path.len() - 1].iter().copied());
            routes.push(path);
            continue;
        }

        let mut path = vec![src];
        let mut cur = src;
        while hops_left > 0 {
            cur = next_hop(&adj, cur, hops_left, &dist);
            path.push(cur);
            hops_left -= 1;
        }
        if path.len() == 2 {
            direct_used = true;
        }
        removed.extend(path[1..path.len() - 1].iter().copied());
        routes.push(path);
    }

    Ok(routes
        .into_iter()
        .enumerate()
        .map(|(i, path)| Route {
            id: PathId(i),
            nodes: path
                .into_iter()
                .map(|id| g.node(id).expect("on graph").serial)
                .collect(),
        })
        .collect())
}

/// Smallest-id neighbour of `cur` one hop closer to the sink.
fn next_hop(adj: &Adjacency, cur: NodeId, hops_left: u32, dist: &BTreeMap<NodeId, u32>) -> NodeId {
    neighbours(adj, cur)
        .iter()
        .copied()
        .find(|v| dist.get(v) == Some(&(hops_left - 1)))
        .expect("BFS layers are contiguous")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Estimation {
    /// `τ` straight from the delay model.
    Analytic,
    /// A hello packet walks the route and a reply walks back; `τ` is half
    /// the round trip per hop. `reverse` defaults to the forward link.
    Probed { reverse: Option<LinkParams> },
}

/// Physical node ids along `route`, checking every node is alive and every
/// hop is usable.
pub fn resolve_route(g: &TopologyGraph, route: &Route) -> Result<Vec<NodeId>, RoutingError> {
    let stale = |reason: String| RoutingError::StaleRoute {
        path: route.id,
        reason,
    };
    if route.nodes.len() < 2 {
        return Err(stale("route needs at least two nodes".into()));
    }
    let ids = route
        .nodes
        .iter()
        .map(|&s| {
            g.resolve(s)
                .filter(|&id| g.is_alive(id))
                .ok_or_else(|| stale(format!("node {s} is not alive")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for w in ids.windows(2) {
        if !g.has_edge(w[0], w[1]) {
            return Err(stale(format!("no link between {} and {}", w[0], w[1])));
        }
    }
    Ok(ids)
}

/// Learns `H_j`, `τ_j` and the source–sink distance for one route.
pub fn estimate_path_params(
    g: &TopologyGraph,
    route: &Route,
    link: &LinkParams,
    packet_bits: f64,
    mode: Estimation,
) -> Result<PathProfile, RoutingError> {
    let ids = resolve_route(g, route)?;
    let hops = route.hops();
    let hop_delay = match mode {
        Estimation::Analytic => model::per_hop_delay(packet_bits, link),
        Estimation::Probed { reverse } => {
            let back = reverse.unwrap_or(*link);
            let mut rtt = 0.0;
            for _ in 0..hops {
                rtt += link.hop_time(packet_bits);
            }
            for _ in 0..hops {
                rtt += back.hop_time(packet_bits);
            }
            rtt / (2.0 * f64::from(hops))
        }
    };
    let a = g.node(ids[0]).expect("resolved").position;
    let b = g.node(*ids.last().expect("non-empty")).expect("resolved").position;
    Ok(PathProfile::new(route.id, hops, hop_delay, a.distance(&b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub route: Route,
    pub profile: PathProfile,
    /// Node parameters returned in the reply packets. Nodes are assumed
    /// homogeneous, so one bundle describes the whole route.
    pub params: EnergyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub serial: NodeId,
    pub failed: NodeId,
    pub replacement: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTable {
    pub source: NodeId,
    pub topology_version: u64,
    pub entries: BTreeMap<NodeId, Vec<RouteEntry>>,
    pub substitutions: Vec<Substitution>,
}

impl RoutingTable {
    /// Table for routes that were constructed rather than discovered.
    pub fn from_entries(
        g: &TopologyGraph,
        source: NodeId,
        sink: NodeId,
        entries: Vec<RouteEntry>,
    ) -> Self {
        Self {
            source,
            topology_version: g.version(),
            entries: BTreeMap::from([(sink, entries)]),
            substitutions: Vec::new(),
        }
    }

    pub fn routes_to(&self, sink: NodeId) -> &[RouteEntry] {
        self.entries.get(&sink).map_or(&[], Vec::as_slice)
    }

    /// Whether the topology changed since the table was last brought up to
    /// date.
    pub fn is_stale(&self, g: &TopologyGraph) -> bool {
        self.topology_version != g.version()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_routing_table(
    g: &TopologyGraph,
    source: NodeId,
    destinations: &[NodeId],
    max_paths: usize,
    link: &LinkParams,
    params: &EnergyParams,
    mode: Estimation,
) -> Result<RoutingTable, RoutingError> {
    let src = g.resolve(source).ok_or(TopologyError::UnknownNode(source))?;
    if !g.is_alive(src) {
        return Err(RoutingError::NotAlive(source));
    }
    let mut entries = BTreeMap::new();
    for &dst in destinations {
        if dst == source {
            log::warn!("skipping routing-table entry for the source itself ({dst})");
            continue;
        }
        if !g.resolve(dst).is_some_and(|id| g.is_alive(id)) {
            continue;
        }
        let routes = discover_disjoint_paths(g, source, dst, max_paths)?;
        if routes.is_empty() {
            continue;
        }
        let list = routes
            .into_iter()
            .map(|route| {
                let profile = estimate_path_params(g, &route, link, params.packet_bits, mode)?;
                Ok(RouteEntry {
                    route,
                    profile,
                    params: *params,
                })
            })
            .collect::<Result<Vec<_>, RoutingError>>()?;
        entries.insert(dst, list);
    }
    Ok(RoutingTable {
        source,
        topology_version: g.version(),
        entries,
        substitutions: Vec::new(),
    })
}

/// Hands the failed node's serial to the alive redundant node nearest to
/// `initiator` (ties to the lower id). Routes keep their serial sequences,
/// so the table only records the substitution and its new version stamp.
pub fn replace_failed_node(
    g: &mut TopologyGraph,
    failed_serial: NodeId,
    initiator: NodeId,
    table: Option<&mut RoutingTable>,
) -> Result<Substitution, RoutingError> {
    let failed = g
        .resolve(failed_serial)
        .ok_or(TopologyError::UnknownNode(failed_serial))?;
    let anchor = g
        .node(initiator)
        .ok_or(TopologyError::UnknownNode(initiator))?
        .position;
    let spare = g
        .nearest_redundant(anchor)
        .ok_or(RoutingError::UnrecoverableFailure {
            serial: failed_serial,
        })?;
    g.transfer_serial(failed_serial, spare)?;
    let sub = Substitution {
        serial: failed_serial,
        failed,
        replacement: spare,
    };
    if let Some(t) = table {
        t.substitutions.push(sub);
        t.topology_version = g.version();
    }
    Ok(sub)
}

/// Layout used when path profiles are supplied directly: source and sink
/// joined by one lane of relays per profile, plus spares parked next to
/// each lane. Connectivity is exactly the lane links.
#[derive(Debug, Clone)]
pub struct SyntheticTopology {
    pub graph: TopologyGraph,
    pub source: NodeId,
    pub sink: NodeId,
    pub routes: Vec<Route>,
}

pub const SYNTHETIC_SOURCE: NodeId = NodeId(0);
pub const SYNTHETIC_SINK: NodeId = NodeId(1);
const LANE_SPACING: f64 = 10.0;

pub fn synthetic_topology(
    profiles: &[PathProfile],
    spares_per_path: u32,
    initial_energy: Energy,
) -> Result<SyntheticTopology, RoutingError> {
    let span = if profiles.is_empty() {
        1.0
    } else {
        profiles.iter().map(|p| p.distance).sum::<f64>() / profiles.len() as f64
    };
    let mut links = Vec::new();
    let mut nodes = vec![
        Node::new(SYNTHETIC_SOURCE, Point::new(0.0, 0.0), initial_energy),
        Node::new(SYNTHETIC_SINK, Point::new(span, 0.0), initial_energy),
    ];
    let mut routes = Vec::new();
    let mut next = 2u32;

    for (lane, p) in profiles.iter().enumerate() {
        let y = LANE_SPACING * (lane as f64 + 1.0);
        let mut serials = vec![SYNTHETIC_SOURCE];
        for i in 1..p.hops {
            let x = span * f64::from(i) / f64::from(p.hops);
            nodes.push(Node::new(NodeId(next), Point::new(x, y), initial_energy));
            serials.push(NodeId(next));
            next += 1;
        }
        serials.push(SYNTHETIC_SINK);
        links.extend(serials.windows(2).map(|w| (w[0], w[1])));
        for s in 0..spares_per_path {
            let x = span * (f64::from(s) + 1.0) / (f64::from(spares_per_path) + 1.0);
            nodes.push(
                Node::new(NodeId(next), Point::new(x, y + LANE_SPACING / 2.0), initial_energy)
                    .redundant(),
            );
            next += 1;
        }
        routes.push(Route {
            id: p.id,
            nodes: serials,
        });
    }

    let mut graph = TopologyGraph::with_links(f64::INFINITY, links);
    for n in nodes {
        graph.add_node(n)?;
    }
    Ok(SyntheticTopology {
        graph,
        source: SYNTHETIC_SOURCE,
        sink: SYNTHETIC_SINK,
        routes,
    })
}
