//! Sensor field: node placement, energy budgets and connectivity.
//!
//! Every node has an immutable physical [`NodeId`] and a protocol serial
//! number. Routes are written in serials; when a redundant node takes over
//! for a failed one it inherits the failed node's serial, so existing routes
//! stay valid while per-node bookkeeping remains tied to hardware.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::Energy;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid field spec: {0}")]
    InvalidField(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Alive,
    Failed,
    /// Replaced by a redundant node; no longer holds a serial.
    Retired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub serial: NodeId,
    pub position: Point,
    pub initial_energy: Energy,
    pub residual_energy: Energy,
    pub is_redundant: bool,
    pub status: NodeStatus,
}

impl Node {
    pub fn new(id: NodeId, position: Point, energy: Energy) -> Self {
        Self {
            id,
            serial: id,
            position,
            initial_energy: energy,
            residual_energy: energy,
            is_redundant: false,
            status: if energy.is_zero() {
                NodeStatus::Failed
            } else {
                NodeStatus::Alive
            },
        }
    }

    pub fn redundant(mut self) -> Self {
        self.is_redundant = true;
        self
    }

    pub fn is_alive(&self) -> bool {
        self.status == NodeStatus::Alive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Connectivity {
    /// Edge iff the nodes are within radio range.
    Radio,
    /// Edge iff the (unordered) pair is listed.
    Explicit(BTreeSet<(NodeId, NodeId)>),
}

fn pair(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyGraph {
    nodes: BTreeMap<NodeId, Node>,
    serials: BTreeMap<NodeId, NodeId>,
    radio_range: f64,
    connectivity: Connectivity,
    failed_links: BTreeSet<(NodeId, NodeId)>,
    version: u64,
}

impl TopologyGraph {
    /// Empty field whose edges are implied by `radio_range`.
    pub fn new(radio_range: f64) -> Self {
        Self {
            nodes: BTreeMap::new(),
            serials: BTreeMap::new(),
            radio_range,
            connectivity: Connectivity::Radio,
            failed_links: BTreeSet::new(),
            version: 0,
        }
    }

    /// Empty topology whose edges are exactly `links` (used when path
    /// profiles are given directly and have no geometric embedding).
    pub fn with_links(radio_range: f64, links: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut g = Self::new(radio_range);
        g.connectivity = Connectivity::Explicit(
            links
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| pair(u, v))
                .collect(),
        );
        g
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), TopologyError> {
        if self.nodes.contains_key(&node.id) || self.serials.contains_key(&node.serial) {
            return Err(TopologyError::DuplicateNode(node.id));
        }
        self.serials.insert(node.serial, node.id);
        self.nodes.insert(node.id, node);
        self.version += 1;
        Ok(())
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self.connectivity, Connectivity::Radio)
    }

    /// Bumped on every structural change (node added, failed, replaced,
    /// link failed).
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    /// Physical node currently holding `serial`.
    pub fn by_serial(&self, serial: NodeId) -> Option<&Node> {
        self.serials.get(&serial).and_then(|id| self.nodes.get(id))
    }

    pub fn resolve(&self, serial: NodeId) -> Option<NodeId> {
        self.serials.get(&serial).copied()
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(Node::is_alive)
    }

    pub fn link_failed(&self, u: NodeId, v: NodeId) -> bool {
        self.failed_links.contains(&pair(u, v))
    }

    /// Whether `u` and `v` could talk if both were alive.
    fn linked(&self, u: NodeId, v: NodeId) -> bool {
        if u == v || self.link_failed(u, v) {
            return false;
        }
        let (Some(a), Some(b)) = (self.nodes.get(&u), self.nodes.get(&v)) else {
            return false;
        };
        match &self.connectivity {
            Connectivity::Radio => a.position.distance(&b.position) <= self.radio_range,
            Connectivity::Explicit(links) => links.contains(&pair(u, v)),
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.is_alive(u) && self.is_alive(v) && self.linked(u, v)
    }

    /// Alive neighbours of an alive node, in id order.
    pub fn neighbors(&self, u: NodeId) -> Vec<NodeId> {
        if !self.is_alive(u) {
            return Vec::new();
        }
        self.reachable_from(u)
    }

    /// Alive nodes `u` is linked to, regardless of `u`'s own health. This is
    /// who `u` would address a beacon to.
    pub fn reachable_from(&self, u: NodeId) -> Vec<NodeId> {
        match &self.connectivity {
            Connectivity::Radio => self
                .nodes
                .values()
                .filter(|n| n.is_alive() && self.linked(u, n.id))
                .map(|n| n.id)
                .collect(),
            Connectivity::Explicit(links) => {
                let mut out: Vec<NodeId> = links
                    .iter()
                    .filter_map(|&(a, b)| match (a == u, b == u) {
                        (true, _) => Some(b),
                        (_, true) => Some(a),
                        _ => None,
                    })
                    .filter(|&v| self.is_alive(v) && !self.link_failed(u, v))
                    .collect();
                out.sort();
                out
            }
        }
    }

    /// Neighbour lists of every alive node, computed in one pass (radio
    /// mode buckets nodes into a grid of range-sized cells). Each list is
    /// sorted by id and equals [`neighbors`](Self::neighbors).
    pub fn adjacency(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let alive: Vec<&Node> = self.nodes.values().filter(|n| n.is_alive()).collect();
        let mut out: BTreeMap<NodeId, Vec<NodeId>> =
            alive.iter().map(|n| (n.id, Vec::new())).collect();
        match &self.connectivity {
            Connectivity::Explicit(_) => {
                for n in &alive {
                    out.insert(n.id, self.neighbors(n.id));
                }
            }
            Connectivity::Radio => {
                let r = self.radio_range;
                let cell = |p: &Point| {
                    if r.is_finite() && r > 0.0 {
                        ((p.x / r).floor() as i64, (p.y / r).floor() as i64)
                    } else {
                        (0, 0)
                    }
                };
                let mut grid: BTreeMap<(i64, i64), Vec<&Node>> = BTreeMap::new();
                for n in &alive {
                    grid.entry(cell(&n.position)).or_default().push(n);
                }
                for n in &alive {
                    let (cx, cy) = cell(&n.position);
                    let list = out.get_mut(&n.id).expect("alive node");
                    for dx in -1..=1 {
                        for dy in -1..=1 {
                            for m in grid.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                                if m.id != n.id
                                    && n.position.distance(&m.position) <= r
                                    && !self.link_failed(n.id, m.id)
                                {
                                    list.push(m.id);
                                }
                            }
                        }
                    }
                    list.sort_unstable();
                }
            }
        }
        out
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.neighbors(u).len()
    }

    pub fn fail_node(&mut self, id: NodeId) -> Result<(), TopologyError> {
        let node = self
            .nodes
            .get_mut(&id)
            .ok_or(TopologyError::UnknownNode(id))?;
        if node.status == NodeStatus::Alive {
            node.status = NodeStatus::Failed;
            self.version += 1;
        }
        Ok(())
    }

    pub fn fail_link(&mut self, u: NodeId, v: NodeId) -> Result<(), TopologyError> {
        for id in [u, v] {
            if !self.nodes.contains_key(&id) {
                return Err(TopologyError::UnknownNode(id));
            }
        }
        if self.failed_links.insert(pair(u, v)) {
            self.version += 1;
        }
        Ok(())
    }

    /// Takes up to `amount` out of the node's budget and returns what was
    /// actually drawn. A node whose budget reaches zero fails.
    pub fn drain(&mut self, id: NodeId, amount: Energy) -> Energy {
        let Some(node) = self.nodes.get_mut(&id) else {
            return Energy::ZERO;
        };
        let drawn = amount.min(node.residual_energy);
        node.residual_energy = node.residual_energy - drawn;
        if node.residual_energy.is_zero() && node.status == NodeStatus::Alive && !drawn.is_zero() {
            node.status = NodeStatus::Failed;
            self.version += 1;
        }
        drawn
    }

    /// Alive redundant node closest to `anchor`; ties go to the lower id.
    pub fn nearest_redundant(&self, anchor: Point) -> Option<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.is_redundant && n.is_alive())
            .min_by(|a, b| {
                a.position
                    .distance(&anchor)
                    .total_cmp(&b.position.distance(&anchor))
                    .then(a.id.cmp(&b.id))
            })
            .map(|n| n.id)
    }

    /// Hands `serial` (currently held by a failed or suspect node) to the
    /// redundant node `spare`. The previous holder is retired; in explicit
    /// mode the spare also inherits its links.
    pub(crate) fn transfer_serial(
        &mut self,
        serial: NodeId,
        spare: NodeId,
    ) -> Result<NodeId, TopologyError> {
        let old = self
            .resolve(serial)
            .ok_or(TopologyError::UnknownNode(serial))?;
        let spare_serial = self
            .nodes
            .get(&spare)
            .ok_or(TopologyError::UnknownNode(spare))?
            .serial;

        if let Connectivity::Explicit(links) = &mut self.connectivity {
            let inherited: Vec<(NodeId, NodeId)> = links
                .iter()
                .filter_map(|&(a, b)| match (a == old, b == old) {
                    (true, _) => Some(pair(spare, b)),
                    (_, true) => Some(pair(a, spare)),
                    _ => None,
                })
                .collect();
            links.retain(|&(a, b)| a != old && b != old);
            links.extend(inherited);
        }

        let old_node = self.nodes.get_mut(&old).expect("resolved");
        old_node.status = NodeStatus::Retired;
        self.serials.remove(&spare_serial);
        self.serials.insert(serial, spare);
        let spare_node = self.nodes.get_mut(&spare).expect("checked");
        spare_node.serial = serial;
        spare_node.is_redundant = false;
        self.version += 1;
        Ok(old)
    }

    /// One line per node: `id x y energy redundant_flag`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            writeln!(
                out,
                "{} {} {} {} {}",
                n.id,
                n.position.x,
                n.position.y,
                n.residual_energy,
                u8::from(n.is_redundant)
            )
            .expect("writing to a String");
        }
        out
    }

    /// Parses the format written by [`to_text`](Self::to_text). Blank lines
    /// and `#` comments are skipped.
    pub fn from_text(text: &str, radio_range: f64) -> Result<Self, TopologyError> {
        let mut g = Self::new(radio_range);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| TopologyError::Parse {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(parse_err(format!(
                    "expected 5 fields `id x y energy redundant_flag`, found {}",
                    fields.len()
                )));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad id `{}`", fields[0])))?;
            let coord = |s: &str, name: &str| -> Result<f64, TopologyError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("bad {name} `{s}`")))
            };
            let x = coord(fields[1], "x")?;
            let y = coord(fields[2], "y")?;
            let energy: Energy = fields[3]
                .parse()
                .map_err(|e| parse_err(format!("{e}")))?;
            let redundant = match fields[4] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(parse_err(format!("bad redundant flag `{other}`"))),
            };
            let mut node = Node::new(NodeId(id), Point::new(x, y), energy);
            node.is_redundant = redundant;
            g.add_node(node).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(g)
    }
}

/// Parameters of a random uniform deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub width: f64,
    pub height: f64,
    pub node_count: u32,
    pub radio_range: f64,
    pub seed: u64,
    /// Fraction of nodes held back as spares for failure recovery.
    pub redundant_fraction: f64,
    pub initial_energy: Energy,
}

impl FieldSpec {
    pub fn new(width: f64, height: f64, node_count: u32, seed: u64) -> Self {
        Self {
            width,
            height,
            node_count,
            radio_range: 40.0,
            seed,
            redundant_fraction: 0.05,
            initial_energy: Energy::from_joules(23_760.0),
        }
    }
}

/// Places `node_count` nodes uniformly at random in the rectangle
/// `[0, width] × [0, height]`. Identical specs give identical fields.
pub fn deploy_field(spec: &FieldSpec) -> Result<TopologyGraph, TopologyError> {
    if !(spec.width > 0.0 && spec.height > 0.0) {
        return Err(TopologyError::InvalidField(format!(
            "area must be positive, got {} x {}",
            spec.width, spec.height
        )));
    }
    if !(0.0..=1.0).contains(&spec.redundant_fraction) {
        return Err(TopologyError::InvalidField(format!(
            "redundant fraction must lie in [0, 1], got {}",
            spec.redundant_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut g = TopologyGraph::new(spec.radio_range);
    for i in 0..spec.node_count {
        let position = Point::new(rng.gen::<f64>() * spec.width, rng.gen::<f64>() * spec.height);
        g.add_node(Node::new(NodeId(i), position, spec.initial_energy))?;
    }
    let n = spec.node_count as usize;
    let spares = (spec.redundant_fraction * n as f64).round() as usize;
    let mut chosen = sample(&mut rng, n, spares.min(n)).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        g.nodes
            .get_mut(&NodeId(i as u32))
            .expect("just inserted")
            .is_redundant = true;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn node(id: u32, x: f64, y: f64) -> Node {
        Node::new(NodeId(id), Point::new(x, y), Energy::from_joules(10.0))
    }

    #[test]
    fn deploy_is_deterministic_and_bounded() {
        let spec = FieldSpec::new(501.0, 501.0, 1000, 42);
        let g = deploy_field(&spec).unwrap();
        assert_eq!(g.len(), 1000);
        assert!(g.nodes().all(|n| (0.0..=501.0).contains(&n.position.x)
            && (0.0..=501.0).contains(&n.position.y)));
        assert_eq!(g.nodes().filter(|n| n.is_redundant).count(), 50);
        assert_eq!(deploy_field(&spec).unwrap(), g);
        let other = deploy_field(&FieldSpec::new(501.0, 501.0, 1000, 43)).unwrap();
        assert_ne!(other, g);

        let empty = deploy_field(&FieldSpec::new(10.0, 10.0, 0, 1)).unwrap();
        assert!(empty.is_empty());
        assert!(deploy_field(&FieldSpec::new(0.0, 10.0, 5, 1)).is_err());
    }

    #[test]
    fn radio_edges() {
        let mut g = TopologyGraph::new(5.0);
        for n in [node(0, 0.0, 0.0), node(1, 3.0, 4.0), node(2, 10.0, 0.0)] {
            g.add_node(n).unwrap();
        }
        assert!(g.has_edge(NodeId(0), NodeId(1)));
        assert!(g.has_edge(NodeId(1), NodeId(0)));
        assert!(!g.has_edge(NodeId(0), NodeId(2)));
        assert_eq!(g.neighbors(NodeId(1)), vec![NodeId(0)]);
        g.fail_node(NodeId(1)).unwrap();
        assert!(!g.has_edge(NodeId(0), NodeId(1)));
        assert!(g.neighbors(NodeId(1)).is_empty());
        assert!(g.add_node(node(0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn explicit_links_and_failures() {
        let mut g = TopologyGraph::with_links(1.0, [(NodeId(0), NodeId(1)), (NodeId(2), NodeId(1))]);
        for n in [node(0, 0.0, 0.0), node(1, 50.0, 0.0), node(2, 100.0, 0.0)] {
            g.add_node(n).unwrap();
        }
        assert!(g.has_edge(NodeId(0), NodeId(1)));
        assert!(!g.has_edge(NodeId(0), NodeId(2)));
        let v = g.version();
        g.fail_link(NodeId(1), NodeId(0)).unwrap();
        assert!(g.version() > v);
        assert!(!g.has_edge(NodeId(0), NodeId(1)));
        assert_eq!(g.neighbors(NodeId(1)), vec![NodeId(2)]);
    }

    #[test]
    fn drain_clamps_and_fails() {
        let mut g = TopologyGraph::new(1.0);
        g.add_node(node(0, 0.0, 0.0)).unwrap();
        let got = g.drain(NodeId(0), Energy::from_joules(4.0));
        assert_eq!(got, Energy::from_joules(4.0));
        let got = g.drain(NodeId(0), Energy::from_joules(100.0));
        assert_eq!(got, Energy::from_joules(6.0));
        let n = g.node(NodeId(0)).unwrap();
        assert_eq!(n.status, NodeStatus::Failed);
        assert!(n.residual_energy.is_zero());
    }

    #[test]
    fn nearest_redundant_prefers_distance_then_id() {
        let mut g = TopologyGraph::new(1.0);
        g.add_node(node(0, 0.0, 0.0)).unwrap();
        g.add_node(node(7, 5.0, 0.0).redundant()).unwrap();
        g.add_node(node(5, 0.0, 1.0).redundant()).unwrap();
        assert_eq!(g.nearest_redundant(Point::new(0.0, 0.0)), Some(NodeId(5)));
        g.add_node(node(3, 1.0, 0.0).redundant()).unwrap();
        assert_eq!(g.nearest_redundant(Point::new(0.0, 0.0)), Some(NodeId(3)));
    }

    #[test]
    fn text_format_errors_carry_line_numbers() {
        let err = TopologyGraph::from_text("0 1 2 3 0\n\n1 1 2\n", 5.0).unwrap_err();
        assert!(matches!(err, TopologyError::Parse { line: 3, .. }));
        let err = TopologyGraph::from_text("0 1 2 3 0\n0 1 2 3 0\n", 5.0).unwrap_err();
        assert!(matches!(err, TopologyError::Parse { line: 2, .. }));
        let g = TopologyGraph::from_text("# field\n4 1.5 2 0 1\n", 5.0).unwrap();
        let n = g.node(NodeId(4)).unwrap();
        assert!(n.is_redundant);
        assert_eq!(n.status, NodeStatus::Failed);
    }

    proptest! {
        #[test]
        fn text_round_trip(seed in any::<u64>(), count in 0u32..40) {
            let mut spec = FieldSpec::new(100.0, 60.0, count, seed);
            spec.radio_range = 12.0;
            let g = deploy_field(&spec).unwrap();
            let back = TopologyGraph::from_text(&g.to_text(), 12.0).unwrap();
            prop_assert_eq!(back.to_text(), g.to_text());
            for n in g.nodes() {
                let m = back.node(n.id).unwrap();
                prop_assert_eq!(m.position, n.position);
                prop_assert_eq!(m.residual_energy, n.residual_energy);
                prop_assert_eq!(m.is_redundant, n.is_redundant);
            }
        }

        #[test]
        fn edges_are_symmetric(seed in any::<u64>()) {
            let mut spec = FieldSpec::new(50.0, 50.0, 25, seed);
            spec.radio_range = 15.0;
            let g = deploy_field(&spec).unwrap();
            for u in g.nodes() {
                for v in g.nodes() {
                    prop_assert_eq!(g.has_edge(u.id, v.id), g.has_edge(v.id, u.id));
                    let near = u.id != v.id && u.position.distance(&v.position) <= 15.0;
                    prop_assert_eq!(g.has_edge(u.id, v.id), near);
                }
            }
            let adj = g.adjacency();
            for u in g.nodes() {
                prop_assert_eq!(&adj[&u.id], &g.neighbors(u.id));
            }
        }
    }
}
