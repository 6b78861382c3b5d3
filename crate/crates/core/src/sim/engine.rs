//! Discrete-event execution of one transfer round.
//!
//! Each path carries its packets one at a time, store-and-forward, so a
//! fault-free path finishes after `Δ·H·τ`. A hop attempt is judged when
//! it would arrive: it succeeds if both ends are alive and their link is
//! up. After `m` failed attempts the holder `a` sends a beacon to another
//! neighbour `c`; meanwhile the receiver `b` runs a timer from the expected
//! arrival. Whichever concludes first starts the replacement.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributor::Distribution;
use crate::energy::Energy;
use crate::model::{self, EnergyParams, LinkParams, PathId};
use crate::routing::{self, RoutingError, RoutingTable, Substitution};
use crate::topology::{NodeId, NodeStatus, TopologyGraph};

use super::event::{EventKind, EventQueue, SimEvent};
use super::fault::{self, Classification, FaultCase, FaultScript, FaultTarget};
use super::ledger::{Component, EnergyLedger};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("a transfer round is already in progress")]
    TransferActive,
    #[error("no transfer round in progress")]
    NoActiveTransfer,
    #[error("distribution uses path {0}, which is not in the routing table")]
    UnknownPath(PathId),
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// `m`, delivery attempts per hop before the self-check.
    pub max_attempts: u32,
    pub seed: u64,
    /// Radio power while listening, W.
    pub idle_power: f64,
    /// Size of beacon, acknowledgement and notification packets, bits.
    pub control_bits: f64,
    /// Independent per-attempt loss probability.
    pub loss_probability: f64,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            seed: 0,
            idle_power: 4.096e-4,
            control_bits: 100.0,
            loss_probability: 0.0,
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        if !(self.idle_power.is_finite() && self.idle_power >= 0.0) {
            return bad(format!("idle_power must be >= 0, got {}", self.idle_power));
        }
        if !(self.control_bits.is_finite() && self.control_bits > 0.0) {
            return bad(format!("control_bits must be > 0, got {}", self.control_bits));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return bad(format!(
                "loss_probability must lie in [0, 1), got {}",
                self.loss_probability
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    /// `a`'s beacon reached `c`, so `a` replaced `b`.
    Beacon,
    /// `b`'s timer expired, so `b` replaced `a`.
    Timer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryOutcome {
    Pending,
    Replaced(Substitution),
    /// Another path had already replaced the suspect node.
    AlreadyReplaced,
    Unrecoverable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub path: PathId,
    pub packet: u64,
    pub hop: usize,
    /// Serials of the sending and receiving ends of the failed hop.
    pub sender: NodeId,
    pub receiver: NodeId,
    /// When `a` gave up after `m` attempts.
    pub detected_at: f64,
    /// When `b` expected the packet.
    pub expected_arrival: f64,
    pub classification: Option<Classification>,
    pub classified_at: Option<f64>,
    pub timer_expired_at: Option<f64>,
    pub driven_by: Option<Detection>,
    pub initiator: Option<NodeId>,
    pub outcome: RecoveryOutcome,
    pub recovered_at: Option<f64>,
    #[serde(skip)]
    epoch: u64,
    #[serde(skip)]
    sender_phys: NodeId,
    #[serde(skip)]
    receiver_phys: NodeId,
}

impl FaultRecord {
    pub fn case(&self) -> Option<FaultCase> {
        self.classification.map(|c| c.case)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub path: PathId,
    pub packets: u64,
    pub hops: u32,
    pub hop_delay: f64,
    /// Time the last packet reached the sink; `None` if the path failed.
    pub delay: Option<f64>,
    pub delivered: u64,
    pub dropped: u64,
    pub retransmissions: u64,
    pub failed: bool,
    /// Data-packet tx and rx energy spent by this path's nodes.
    pub traffic_energy: Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: NodeId,
    pub serial: NodeId,
    pub status: NodeStatus,
    pub initial: Energy,
    pub residual: Energy,
    pub tx: Energy,
    pub rx: Energy,
    pub idle: Energy,
    pub sensing: Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub total_packets: u64,
    pub completion_time: f64,
    pub paths: Vec<PathReport>,
    pub faults: Vec<FaultRecord>,
    /// Every node that spent energy in the round.
    pub nodes: Vec<NodeSnapshot>,
    pub delivered: u64,
    pub dropped: u64,
    pub retransmissions: u64,
    pub total_energy: Energy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<String>,
}

impl TransferReport {
    pub fn path(&self, id: PathId) -> Option<&PathReport> {
        self.paths.iter().find(|p| p.path == id)
    }
}

#[derive(Debug, Clone)]
struct PathRun {
    id: PathId,
    route: Vec<NodeId>,
    tau: f64,
    hop_distance: f64,
    allocated: u64,
    originated: u64,
    delivered: u64,
    dropped: u64,
    retransmissions: u64,
    hop: usize,
    packet: u64,
    attempts: u32,
    first_send_at: f64,
    epoch: u64,
    fault: Option<usize>,
    recovering: bool,
    failed: bool,
    end_time: Option<f64>,
    traffic: Energy,
}

impl PathRun {
    fn last_hop(&self) -> usize {
        self.route.len() - 1
    }
}

struct Round {
    paths: Vec<PathRun>,
    faults: FaultScript,
    records: Vec<FaultRecord>,
    participants: BTreeSet<NodeId>,
    next_packet: u64,
    total: u64,
    now: f64,
}

/// Runs one transfer round at a time over an owned topology and table.
pub struct Simulator {
    graph: TopologyGraph,
    table: RoutingTable,
    sink: NodeId,
    ep: EnergyParams,
    link: LinkParams,
    config: SimConfig,
    queue: EventQueue,
    ledger: EnergyLedger,
    rng: ChaCha8Rng,
    trace: Vec<String>,
    round: Option<Round>,
}

impl Simulator {
    pub fn new(
        graph: TopologyGraph,
        table: RoutingTable,
        sink: NodeId,
        ep: EnergyParams,
        link: LinkParams,
        config: SimConfig,
    ) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            graph,
            table,
            sink,
            ep,
            link,
            config,
            queue: EventQueue::new(),
            ledger: EnergyLedger::new(),
            trace: Vec::new(),
            round: None,
        })
    }

    pub fn graph(&self) -> &TopologyGraph {
        &self.graph
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn into_parts(self) -> (TopologyGraph, RoutingTable, EnergyLedger) {
        (self.graph, self.table, self.ledger)
    }

    pub fn is_active(&self) -> bool {
        self.round.is_some()
    }

    fn control_time(&self) -> f64 {
        model::per_hop_delay(self.config.control_bits, &self.link)
    }

    /// Schedules the first packet of every loaded path and the scripted
    /// faults. Only one round may be active.
    pub fn start_transfer(
        &mut self,
        dist: &Distribution,
        faults: FaultScript,
    ) -> Result<(), SimError> {
        if self.round.is_some() {
            return Err(SimError::TransferActive);
        }
        faults.validate().map_err(SimError::InvalidConfig)?;
        let entries = self.table.routes_to(self.sink);
        let mut paths = Vec::new();
        for alloc in &dist.allocations {
            let entry = entries
                .iter()
                .find(|e| e.route.id == alloc.path)
                .ok_or(SimError::UnknownPath(alloc.path))?;
            paths.push(PathRun {
                id: alloc.path,
                route: entry.route.nodes.clone(),
                tau: entry.profile.hop_delay,
                hop_distance: entry.profile.mean_hop_distance(),
                allocated: alloc.packets,
                originated: 0,
                delivered: 0,
                dropped: 0,
                retransmissions: 0,
                hop: 0,
                packet: 0,
                attempts: 0,
                first_send_at: 0.0,
                epoch: 0,
                fault: None,
                recovering: false,
                failed: false,
                end_time: None,
                traffic: Energy::ZERO,
            });
        }

        let mut participants = BTreeSet::new();
        for p in paths.iter().filter(|p| p.allocated > 0) {
            for &s in &p.route {
                if let Some(id) = self.graph.resolve(s) {
                    participants.insert(id);
                }
            }
        }

        self.queue.clear();
        self.trace.clear();
        for (index, f) in faults.0.iter().enumerate() {
            self.queue.push(
                f.time,
                EventKind::FaultTrigger { index },
                usize::MAX,
                0,
                None,
                None,
            );
        }
        self.round = Some(Round {
            total: dist.allocated(),
            paths,
            faults,
            records: Vec::new(),
            participants,
            next_packet: 0,
            now: 0.0,
        });
        let n = self.round.as_ref().expect("just set").paths.len();
        for i in 0..n {
            self.originate(i, 0.0);
        }
        Ok(())
    }

    /// Processes one event. Returns `false` once the queue is empty.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.round.is_none() {
            return Err(SimError::NoActiveTransfer);
        }
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        self.round_mut().now = ev.time;
        self.record_trace(&ev);
        match ev.kind {
            EventKind::FaultTrigger { index } => self.on_fault_trigger(index)?,
            EventKind::PacketSend => self.on_send(&ev),
            EventKind::PacketArrive => self.on_arrive(&ev),
            EventKind::AckTimeout => self.on_ack_timeout(&ev),
            EventKind::BeaconSend => self.on_beacon_send(&ev),
            EventKind::BeaconResult => self.on_beacon_result(&ev),
            EventKind::TimerExpire => self.on_timer(&ev),
            EventKind::RecoveryComplete => self.on_recovery_complete(&ev),
        }
        debug_assert!(self.census_holds());
        Ok(true)
    }

    /// `(delivered, dropped, in flight or queued)` over all paths.
    pub fn packet_census(&self) -> Option<(u64, u64, u64)> {
        let round = self.round.as_ref()?;
        let delivered = round.paths.iter().map(|p| p.delivered).sum();
        let dropped = round.paths.iter().map(|p| p.dropped).sum();
        let pending = round
            .paths
            .iter()
            .map(|p| p.allocated - p.delivered - p.dropped)
            .sum();
        Some((delivered, dropped, pending))
    }

    fn census_holds(&self) -> bool {
        self.round.as_ref().is_none_or(|r| {
            r.paths
                .iter()
                .all(|p| p.delivered + p.dropped <= p.allocated && p.delivered <= p.originated)
        })
    }

    /// Drains the queue, settles idle and sensing costs over the round and
    /// returns the report. Packets still undelivered when nothing is left
    /// to happen are dropped and their paths marked failed.
    pub fn finish(&mut self) -> Result<TransferReport, SimError> {
        while self.step()? {}
        let mut round = self.round.take().ok_or(SimError::NoActiveTransfer)?;
        for p in round.paths.iter_mut() {
            let pending = p.allocated - p.delivered - p.dropped;
            if pending > 0 {
                log::warn!("path {} stalled with {pending} undelivered packets", p.id);
                p.dropped += pending;
                p.failed = true;
                p.end_time.get_or_insert(round.now);
            }
        }
        let completion_time = round
            .paths
            .iter()
            .filter_map(|p| p.end_time)
            .fold(0.0, f64::max);

        account_idle_and_sensing(
            &mut self.ledger,
            &mut self.graph,
            completion_time,
            self.ep.sensing_power,
            self.config.idle_power,
            Some(&round.participants),
            &round.participants,
        );

        let paths: Vec<PathReport> = round
            .paths
            .iter()
            .map(|p| PathReport {
                path: p.id,
                packets: p.allocated,
                hops: (p.route.len() - 1) as u32,
                hop_delay: p.tau,
                delay: if p.failed { None } else { p.end_time },
                delivered: p.delivered,
                dropped: p.dropped,
                retransmissions: p.retransmissions,
                failed: p.failed,
                traffic_energy: p.traffic,
            })
            .collect();
        let nodes = self
            .ledger
            .accounts()
            .filter_map(|(&id, acct)| {
                let n = self.graph.node(id)?;
                Some(NodeSnapshot {
                    id,
                    serial: n.serial,
                    status: n.status,
                    initial: n.initial_energy,
                    residual: n.residual_energy,
                    tx: acct.tx,
                    rx: acct.rx,
                    idle: acct.idle,
                    sensing: acct.sensing,
                })
            })
            .collect();
        Ok(TransferReport {
            total_packets: round.total,
            completion_time,
            delivered: paths.iter().map(|p| p.delivered).sum(),
            dropped: paths.iter().map(|p| p.dropped).sum(),
            retransmissions: paths.iter().map(|p| p.retransmissions).sum(),
            paths,
            faults: round.records,
            nodes,
            total_energy: self.ledger.total(),
            trace: std::mem::take(&mut self.trace),
        })
    }

    fn round_mut(&mut self) -> &mut Round {
        self.round.as_mut().expect("active round")
    }

    fn path(&self, i: usize) -> &PathRun {
        &self.round.as_ref().expect("active round").paths[i]
    }

    fn path_mut(&mut self, i: usize) -> &mut PathRun {
        &mut self.round_mut().paths[i]
    }

    fn record_trace(&mut self, ev: &SimEvent) {
        if !self.config.trace {
            return;
        }
        let show = |n: Option<NodeId>| n.map_or_else(|| "-".to_string(), |n| n.to_string());
        let (packet, path) = match ev.kind {
            EventKind::FaultTrigger { index } => (format!("fault{index}"), "-".to_string()),
            _ => {
                let p = self.path(ev.path);
                (p.packet.to_string(), p.id.to_string())
            }
        };
        let mut line = String::new();
        write!(
            line,
            "{:.9} {} {} {} {} {}",
            ev.time,
            ev.kind.label(),
            show(ev.from),
            show(ev.to),
            packet,
            path
        )
        .expect("writing to a String");
        self.trace.push(line);
    }

    fn resolve(&self, serial: NodeId) -> NodeId {
        // Serials on an active route always resolve; a serial is only ever
        // moved, never dropped.
        self.graph.resolve(serial).unwrap_or(serial)
    }

    fn charge_traffic(&mut self, i: usize, node: NodeId, component: Component, joules: f64) {
        let drawn = self.ledger.charge(&mut self.graph, node, component, joules);
        if !drawn.is_zero() {
            self.ledger.add_busy(node, self.ep.packet_bits / self.link.bit_rate);
        }
        self.path_mut(i).traffic += drawn;
    }

    /// Control packets (beacon, acknowledgement, notification) cross one
    /// hop of path `i`.
    fn charge_control(&mut self, i: usize, node: NodeId, component: Component) {
        let bits = self.config.control_bits;
        let joules = match component {
            Component::Tx => model::tx_energy_per_bit(&self.ep, self.path(i).hop_distance) * bits,
            _ => model::rx_energy_per_bit(&self.ep) * bits,
        };
        let drawn = self.ledger.charge(&mut self.graph, node, component, joules);
        if !drawn.is_zero() {
            self.ledger.add_busy(node, bits / self.link.bit_rate);
        }
    }

    fn originate(&mut self, i: usize, now: f64) {
        let p = self.path(i);
        if p.failed {
            return;
        }
        if p.originated == p.allocated {
            self.path_mut(i).end_time = Some(now);
            return;
        }
        let source = self.resolve(p.route[0]);
        let packet = self.round_mut().next_packet;
        self.round_mut().next_packet += 1;
        let p = self.path_mut(i);
        p.originated += 1;
        p.packet = packet;
        p.hop = 0;
        p.attempts = 0;
        p.epoch += 1;
        p.fault = None;
        let epoch = p.epoch;
        let rx = model::rx_energy_per_bit(&self.ep) * self.ep.packet_bits;
        self.charge_traffic(i, source, Component::Rx, rx);
        self.queue
            .push(now, EventKind::PacketSend, i, epoch, Some(source), None);
    }

    fn hop_ends(&self, i: usize) -> (NodeId, NodeId) {
        let p = self.path(i);
        (self.resolve(p.route[p.hop]), self.resolve(p.route[p.hop + 1]))
    }

    fn on_fault_trigger(&mut self, index: usize) -> Result<(), SimError> {
        let f = self.round.as_ref().expect("active round").faults.0[index];
        match f.target {
            FaultTarget::NodeFail { node } => {
                self.graph.fail_node(node).map_err(RoutingError::from)?
            }
            FaultTarget::LinkFail { a, b } => {
                self.graph.fail_link(a, b).map_err(RoutingError::from)?
            }
        }
        log::info!("fault injected at t={}: {:?}", f.time, f.target);
        Ok(())
    }

    fn on_send(&mut self, ev: &SimEvent) {
        let i = ev.path;
        if ev.epoch != self.path(i).epoch || self.path(i).failed {
            return;
        }
        let now = ev.time;
        let (a, b) = self.hop_ends(i);
        let m = f64::from(self.config.max_attempts);
        let p = self.path_mut(i);
        p.attempts += 1;
        if p.attempts == 1 {
            p.first_send_at = now;
            let expected = now + p.tau;
            let (tau, epoch) = (p.tau, p.epoch);
            self.queue.push(
                expected + m * tau,
                EventKind::TimerExpire,
                i,
                epoch,
                Some(a),
                Some(b),
            );
        } else {
            p.retransmissions += 1;
        }
        let (tau, epoch, d) = (self.path(i).tau, self.path(i).epoch, self.path(i).hop_distance);
        let tx = model::tx_energy_per_bit(&self.ep, d) * self.ep.packet_bits;
        self.charge_traffic(i, a, Component::Tx, tx);
        self.queue
            .push(now + tau, EventKind::PacketArrive, i, epoch, Some(a), Some(b));
    }

    fn on_arrive(&mut self, ev: &SimEvent) {
        let i = ev.path;
        if ev.epoch != self.path(i).epoch || self.path(i).failed {
            return;
        }
        let now = ev.time;
        let (a, b) = (ev.from.expect("sender"), ev.to.expect("receiver"));
        let reachable = self.graph.has_edge(a, b);
        if reachable {
            let rx = model::rx_energy_per_bit(&self.ep) * self.ep.packet_bits;
            self.charge_traffic(i, b, Component::Rx, rx);
        }
        let lost = self.config.loss_probability > 0.0
            && self.rng.gen::<f64>() < self.config.loss_probability;
        if !reachable || lost {
            let epoch = self.path(i).epoch;
            self.queue
                .push(now, EventKind::AckTimeout, i, epoch, Some(a), Some(b));
            return;
        }

        let p = self.path_mut(i);
        p.hop += 1;
        p.attempts = 0;
        p.epoch += 1;
        p.fault = None;
        if p.hop == p.last_hop() {
            p.delivered += 1;
            let d = p.hop_distance;
            let tx = model::tx_energy_per_bit(&self.ep, d) * self.ep.packet_bits;
            self.charge_traffic(i, b, Component::Tx, tx);
            self.originate(i, now);
        } else {
            let epoch = p.epoch;
            self.queue
                .push(now, EventKind::PacketSend, i, epoch, Some(b), None);
        }
    }

    fn on_ack_timeout(&mut self, ev: &SimEvent) {
        let i = ev.path;
        if ev.epoch != self.path(i).epoch || self.path(i).failed {
            return;
        }
        let kind = if self.path(i).attempts < self.config.max_attempts {
            EventKind::PacketSend
        } else {
            self.open_fault(i, ev.time);
            EventKind::BeaconSend
        };
        self.queue.push(ev.time, kind, i, ev.epoch, ev.from, ev.to);
    }

    /// Fault record for the current hop, created on first use.
    fn open_fault(&mut self, i: usize, now: f64) -> usize {
        if let Some(idx) = self.path(i).fault {
            return idx;
        }
        let (a, b) = self.hop_ends(i);
        let p = self.path(i);
        let record = FaultRecord {
            path: p.id,
            packet: p.packet,
            hop: p.hop,
            sender: p.route[p.hop],
            receiver: p.route[p.hop + 1],
            detected_at: now,
            expected_arrival: p.first_send_at + p.tau,
            classification: None,
            classified_at: None,
            timer_expired_at: None,
            driven_by: None,
            initiator: None,
            outcome: RecoveryOutcome::Pending,
            recovered_at: None,
            epoch: p.epoch,
            sender_phys: a,
            receiver_phys: b,
        };
        let round = self.round_mut();
        round.records.push(record);
        let idx = round.records.len() - 1;
        round.paths[i].fault = Some(idx);
        idx
    }

    /// Record opened for `path` during hop epoch `epoch`, if any.
    fn record_for_epoch(&self, i: usize, epoch: u64) -> Option<usize> {
        let round = self.round.as_ref()?;
        let id = round.paths[i].id;
        round
            .records
            .iter()
            .rposition(|r| r.path == id && r.epoch == epoch)
    }

    fn on_beacon_send(&mut self, ev: &SimEvent) {
        let i = ev.path;
        if ev.epoch != self.path(i).epoch || self.path(i).failed {
            return;
        }
        let (a, b) = (ev.from.expect("sender"), ev.to.expect("receiver"));
        match fault::beacon_peer(&self.graph, a, b) {
            None => {
                let rec = self.open_fault(i, ev.time);
                let r = &mut self.round_mut().records[rec];
                r.classification = Some(Classification {
                    case: FaultCase::Case1,
                    beacon_peer: None,
                });
                r.classified_at = Some(ev.time);
                log::warn!("node {a} has no beacon peer; assuming it is at fault");
            }
            Some(c) => {
                self.charge_control(i, a, Component::Tx);
                let t = ev.time + 2.0 * self.control_time();
                self.queue
                    .push(t, EventKind::BeaconResult, i, ev.epoch, Some(a), Some(c));
            }
        }
    }

    fn on_beacon_result(&mut self, ev: &SimEvent) {
        let i = ev.path;
        let (a, c) = (ev.from.expect("sender"), ev.to.expect("peer"));
        let success = fault::beacon_succeeds(&self.graph, a, c);
        if success {
            self.charge_control(i, c, Component::Rx);
            self.charge_control(i, c, Component::Tx);
            self.charge_control(i, a, Component::Rx);
        }
        let case = if success {
            FaultCase::Case2
        } else {
            FaultCase::Case1
        };
        let Some(rec) = self.record_for_epoch(i, ev.epoch) else {
            return;
        };
        {
            let r = &mut self.round_mut().records[rec];
            if r.classification.is_none() {
                r.classification = Some(Classification {
                    case,
                    beacon_peer: Some(c),
                });
                r.classified_at = Some(ev.time);
            }
        }
        let live = ev.epoch == self.path(i).epoch && !self.path(i).failed;
        if live && case == FaultCase::Case2 && !self.path(i).recovering {
            let failed_serial = self.round.as_ref().expect("active").records[rec].receiver;
            self.start_recovery(i, rec, a, failed_serial, Detection::Beacon, ev.time);
        }
    }

    fn on_timer(&mut self, ev: &SimEvent) {
        let i = ev.path;
        let b = ev.to.expect("receiver");
        if ev.epoch != self.path(i).epoch {
            // The packet moved on. If this hop had a fault, note that b's
            // timer concluded too.
            if let Some(rec) = self.record_for_epoch(i, ev.epoch) {
                self.round_mut().records[rec]
                    .timer_expired_at
                    .get_or_insert(ev.time);
            }
            return;
        }
        if self.path(i).failed || !self.graph.is_alive(b) {
            return;
        }
        let rec = self.open_fault(i, ev.time);
        self.round_mut().records[rec].timer_expired_at = Some(ev.time);
        if !self.path(i).recovering {
            let failed_serial = self.round.as_ref().expect("active").records[rec].sender;
            self.start_recovery(i, rec, b, failed_serial, Detection::Timer, ev.time);
        }
    }

    fn start_recovery(
        &mut self,
        i: usize,
        rec: usize,
        initiator: NodeId,
        failed_serial: NodeId,
        how: Detection,
        now: f64,
    ) {
        let (suspect, epoch) = {
            let r = &self.round.as_ref().expect("active").records[rec];
            let suspect = if failed_serial == r.sender {
                r.sender_phys
            } else {
                r.receiver_phys
            };
            (suspect, r.epoch)
        };
        {
            let round = self.round_mut();
            round.paths[i].recovering = true;
            let r = &mut round.records[rec];
            r.driven_by = Some(how);
            r.initiator = Some(initiator);
        }

        if self.graph.resolve(failed_serial) != Some(suspect) {
            self.round_mut().records[rec].outcome = RecoveryOutcome::AlreadyReplaced;
            self.queue.push(
                now,
                EventKind::RecoveryComplete,
                i,
                epoch,
                Some(initiator),
                Some(failed_serial),
            );
            return;
        }

        let neighbours = self.graph.reachable_from(suspect);
        match routing::replace_failed_node(
            &mut self.graph,
            failed_serial,
            initiator,
            Some(&mut self.table),
        ) {
            Ok(sub) => {
                self.charge_control(i, initiator, Component::Tx);
                self.charge_control(i, sub.replacement, Component::Rx);
                for n in neighbours {
                    if n != initiator && n != sub.replacement {
                        self.charge_control(i, n, Component::Rx);
                    }
                }
                let round = self.round_mut();
                round.participants.insert(sub.replacement);
                round.records[rec].outcome = RecoveryOutcome::Replaced(sub);
                log::info!(
                    "node {} (serial {}) replaced by {}",
                    sub.failed,
                    sub.serial,
                    sub.replacement
                );
                let t = now + self.control_time();
                self.queue.push(
                    t,
                    EventKind::RecoveryComplete,
                    i,
                    epoch,
                    Some(initiator),
                    Some(sub.replacement),
                );
            }
            Err(e) => {
                log::warn!("path {} failed: {e}", self.path(i).id);
                let round = self.round_mut();
                round.records[rec].outcome = RecoveryOutcome::Unrecoverable;
                let p = &mut round.paths[i];
                p.recovering = false;
                p.failed = true;
                p.dropped = p.allocated - p.delivered;
                p.end_time = Some(now);
            }
        }
    }

    fn on_recovery_complete(&mut self, ev: &SimEvent) {
        let i = ev.path;
        if self.path(i).failed {
            return;
        }
        if let Some(rec) = self.record_for_epoch(i, ev.epoch) {
            self.round_mut().records[rec].recovered_at = Some(ev.time);
        }
        let p = self.path_mut(i);
        p.recovering = false;
        p.attempts = 0;
        p.epoch += 1;
        p.fault = None;
        let epoch = p.epoch;
        let (a, _) = self.hop_ends(i);
        self.queue
            .push(ev.time, EventKind::PacketSend, i, epoch, Some(a), None);
    }
}

/// Charges `sensing_power · duration` to every alive node in `sensing` (all
/// alive nodes when `None`), and idle-radio power for the part of the
/// round the radio was not busy to every alive node in `on_path`.
pub fn account_idle_and_sensing(
    ledger: &mut EnergyLedger,
    g: &mut TopologyGraph,
    duration: f64,
    sensing_power: f64,
    idle_power: f64,
    sensing: Option<&BTreeSet<NodeId>>,
    on_path: &BTreeSet<NodeId>,
) {
    if duration <= 0.0 {
        return;
    }
    let targets: Vec<NodeId> = match sensing {
        Some(set) => set.iter().copied().collect(),
        None => g.nodes().map(|n| n.id).collect(),
    };
    for id in targets {
        if sensing_power > 0.0 {
            ledger.charge(g, id, Component::Sensing, sensing_power * duration);
        }
    }
    for &id in on_path {
        let idle = (duration - ledger.account(id).busy_time).max(0.0);
        if idle_power > 0.0 && idle > 0.0 {
            ledger.charge(g, id, Component::Idle, idle_power * idle);
        }
    }
}

/// Runs one round from start to finish and hands the topology and table
/// back (with any replacements applied).
#[allow(clippy::too_many_arguments)]
pub fn run_transfer(
    graph: TopologyGraph,
    table: RoutingTable,
    sink: NodeId,
    dist: &Distribution,
    ep: &EnergyParams,
    link: &LinkParams,
    faults: FaultScript,
    config: &SimConfig,
) -> Result<(TransferReport, TopologyGraph, RoutingTable), SimError> {
    let mut sim = Simulator::new(graph, table, sink, *ep, *link, config.clone())?;
    sim.start_transfer(dist, faults)?;
    let report = sim.finish()?;
    let (g, t, _) = sim.into_parts();
    Ok((report, g, t))
}
