mod common;

use common::*;
use wsn_multipath::distributor::{self, Scheme};
use wsn_multipath::energy::Energy;
use wsn_multipath::model::{self, PathId};
use wsn_multipath::sim::{
    account_idle_and_sensing, run_transfer, Detection, EnergyLedger, FaultCase, FaultScript,
    RecoveryOutcome, SimConfig, SimError, Simulator,
};
use wsn_multipath::topology::{Node, NodeId, Point, TopologyGraph};

const TAU: f64 = 0.02;
/// 100-bit control packet at 50 kbps.
const CTRL: f64 = 0.002;

/// Simulator over one 3-hop lane (serials 0, 2, 3, 1) with `spares`
/// redundant nodes; returns it with the route's serials.
fn three_hop_with(spares: u32, config: SimConfig) -> (Simulator, Vec<NodeId>) {
    let profiles = profiles(&[3], TAU, 30.0);
    let (syn, table) = network(&profiles, spares);
    let route = syn.routes[0].nodes.clone();
    let sim = Simulator::new(syn.graph, table, syn.sink, energy(), link(), config).unwrap();
    (sim, route)
}

fn three_hop(spares: u32) -> (Simulator, Vec<NodeId>) {
    three_hop_with(spares, SimConfig::default())
}

#[test]
fn fault_free_reference_equal_split() {
    let profiles = reference_profiles();
    let (syn, table) = network(&profiles, 0);
    let dist = distributor::allocate(Scheme::EqualSplit, &energy(), &profiles, 100).unwrap();
    let (report, _, _) = run_transfer(
        syn.graph,
        table,
        syn.sink,
        &dist,
        &energy(),
        &link(),
        FaultScript::none(),
        &SimConfig::default(),
    )
    .unwrap();
    let delays: Vec<f64> = report.paths.iter().map(|p| p.delay.unwrap()).collect();
    for (got, want) in delays.iter().zip([3.6, 8.8, 2.0, 8.0, 2.8]) {
        assert!(rel_err(*got, want) < 1e-9, "{got} vs {want}");
    }
    assert_eq!(report.delivered, 100);
    assert_eq!(report.dropped, 0);
    assert!(report.faults.is_empty());
    assert!(rel_err(report.completion_time, 8.8) < 1e-9);
}

#[test]
fn zero_packets_cost_nothing_but_time_free_terms() {
    let (mut sim, _) = three_hop(1);
    sim.start_transfer(&manual_distribution(&[0]), FaultScript::none())
        .unwrap();
    let report = sim.finish().unwrap();
    assert_eq!(report.completion_time, 0.0);
    assert_eq!(report.delivered, 0);
    assert_eq!(report.total_energy, Energy::ZERO);
}

#[test]
fn traffic_energy_matches_closed_form() {
    let profiles = profiles(&[4, 11], TAU, 80.0);
    let (syn, table) = network(&profiles, 0);
    let (report, _, _) = run_transfer(
        syn.graph,
        table,
        syn.sink,
        &manual_distribution(&[13, 6]),
        &energy(),
        &link(),
        FaultScript::none(),
        &SimConfig::default(),
    )
    .unwrap();
    for (p, want_packets) in profiles.iter().zip([13u64, 6]) {
        let r = report.path(p.id).unwrap();
        let want = model::path_traffic_energy(&energy(), p, want_packets as f64);
        assert!(rel_err(r.traffic_energy.joules(), want) < 1e-9);
        let want_delay = model::path_delay(want_packets as f64, p);
        assert!(rel_err(r.delay.unwrap(), want_delay) < 1e-9);
    }
}

#[test]
fn node_failure_is_case_1_and_recovers() {
    let (mut sim, route) = three_hop(1);
    let victim = route[1];
    sim.start_transfer(
        &manual_distribution(&[3]),
        FaultScript::none().node_fail(1.5 * TAU, victim),
    )
    .unwrap();
    let report = sim.finish().unwrap();
    assert_eq!(report.delivered, 3);
    assert_eq!(report.dropped, 0);
    assert_eq!(report.faults.len(), 1);
    let f = &report.faults[0];
    assert_eq!(f.case(), Some(FaultCase::Case1));
    assert_eq!(f.sender, victim);
    assert_eq!(f.driven_by, Some(Detection::Timer));
    // b's timer: expected arrival 2τ, then m·τ more.
    assert_eq!(f.timer_expired_at, Some(f.expected_arrival + 5.0 * TAU));
    assert!((f.expected_arrival - 2.0 * TAU).abs() < 1e-15);
    let RecoveryOutcome::Replaced(sub) = f.outcome else {
        panic!("expected a replacement, got {:?}", f.outcome);
    };
    assert_eq!(sub.serial, victim);
    assert_eq!(f.initiator, Some(route[2]));
    // Fault-free 3·3·τ, plus (m+1)·τ of lost progress and one notification.
    let want = 9.0 * TAU + 6.0 * TAU + CTRL;
    assert!(rel_err(report.completion_time, want) < 1e-12, "{}", report.completion_time);

    // The replacement carries every later packet over the first-relay hop.
    let g = sim.graph();
    assert_eq!(g.resolve(victim), Some(sub.replacement));
    let d = report.nodes.iter().find(|n| n.id == sub.replacement).unwrap();
    let tx_per_packet = model::tx_energy_per_bit(&energy(), 10.0) * 1000.0;
    assert!(rel_err(d.tx.joules(), 3.0 * tx_per_packet) < 1e-12);
}

#[test]
fn link_failure_is_case_2_and_recovers() {
    let (mut sim, route) = three_hop(1);
    sim.start_transfer(
        &manual_distribution(&[3]),
        FaultScript::none().link_fail(1.5 * TAU, route[1], route[2]),
    )
    .unwrap();
    let report = sim.finish().unwrap();
    assert_eq!(report.delivered, 3);
    let f = &report.faults[0];
    assert_eq!(f.case(), Some(FaultCase::Case2));
    assert_eq!(f.driven_by, Some(Detection::Beacon));
    assert_eq!(f.initiator, Some(route[1]));
    let RecoveryOutcome::Replaced(sub) = f.outcome else {
        panic!("expected a replacement");
    };
    assert_eq!(sub.serial, route[2]);
    // b's timer also ran out after recovery; it is logged, not acted on.
    assert_eq!(f.timer_expired_at, Some(f.expected_arrival + 5.0 * TAU));
    let want = 9.0 * TAU + 5.0 * TAU + 3.0 * CTRL;
    assert!(rel_err(report.completion_time, want) < 1e-12, "{}", report.completion_time);
}

#[test]
fn no_spare_means_path_failure() {
    let (mut sim, route) = three_hop(0);
    sim.start_transfer(
        &manual_distribution(&[3]),
        FaultScript::none().node_fail(1.5 * TAU, route[1]),
    )
    .unwrap();
    let report = sim.finish().unwrap();
    assert_eq!(report.delivered, 0);
    assert_eq!(report.dropped, 3);
    assert!(report.paths[0].failed);
    assert_eq!(report.paths[0].delay, None);
    assert_eq!(report.faults[0].outcome, RecoveryOutcome::Unrecoverable);
}

#[test]
fn shared_source_failure_is_replaced_once() {
    let profiles = profiles(&[3, 4], TAU, 30.0);
    let (syn, table) = network(&profiles, 1);
    let (report, g, table) = run_transfer(
        syn.graph,
        table,
        syn.sink,
        &manual_distribution(&[4, 4]),
        &energy(),
        &link(),
        FaultScript::none().node_fail(0.5 * TAU, syn.source),
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(report.delivered, 8);
    let replaced = report
        .faults
        .iter()
        .filter(|f| matches!(f.outcome, RecoveryOutcome::Replaced(_)))
        .count();
    let skipped = report
        .faults
        .iter()
        .filter(|f| f.outcome == RecoveryOutcome::AlreadyReplaced)
        .count();
    assert_eq!((replaced, skipped), (1, 1));
    assert_eq!(table.substitutions.len(), 1);
    assert_ne!(g.resolve(syn.source), Some(syn.source));
}

#[test]
fn runs_are_byte_identical() {
    let run = || {
        let cfg = SimConfig {
            trace: true,
            ..SimConfig::default()
        };
        let (mut sim, _) = three_hop_with(1, cfg);
        sim.start_transfer(
            &manual_distribution(&[5]),
            FaultScript::none().node_fail(0.07, NodeId(3)),
        )
        .unwrap();
        serde_json::to_string(&sim.finish().unwrap()).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.contains("TimerExpire"));
}

#[test]
fn lossy_links_are_seeded() {
    let run = |seed: u64| {
        let profiles = profiles(&[6, 4], TAU, 30.0);
        let (syn, table) = network(&profiles, 2);
        let cfg = SimConfig {
            seed,
            loss_probability: 0.2,
            ..SimConfig::default()
        };
        run_transfer(
            syn.graph,
            table,
            syn.sink,
            &manual_distribution(&[30, 30]),
            &energy(),
            &link(),
            FaultScript::none(),
            &cfg,
        )
        .unwrap()
        .0
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert!(a.retransmissions > 0);
    assert_eq!(a.delivered + a.dropped, 60);
    assert_ne!(a.retransmissions, run(12).retransmissions);
}

#[test]
fn one_round_at_a_time() {
    let (mut sim, _) = three_hop(1);
    let dist = manual_distribution(&[2]);
    sim.start_transfer(&dist, FaultScript::none()).unwrap();
    assert_eq!(
        sim.start_transfer(&dist, FaultScript::none()),
        Err(SimError::TransferActive)
    );
    let mut steps = 0;
    while sim.step().unwrap() {
        steps += 1;
        let (d, x, pending) = sim.packet_census().unwrap();
        assert_eq!(d + x + pending, 2);
    }
    assert!(steps > 0);
    sim.finish().unwrap();
    assert!(!sim.is_active());
    assert_eq!(sim.step(), Err(SimError::NoActiveTransfer));
    sim.start_transfer(&dist, FaultScript::none()).unwrap();
}

#[test]
fn unknown_path_is_rejected() {
    let (mut sim, _) = three_hop(0);
    let dist = manual_distribution(&[1, 1]);
    assert_eq!(
        sim.start_transfer(&dist, FaultScript::none()),
        Err(SimError::UnknownPath(PathId(1)))
    );
}

#[test]
fn idle_and_sensing_examples() {
    let mut g = TopologyGraph::new(1.0);
    for i in 0..1000 {
        g.add_node(Node::new(NodeId(i), Point::default(), Energy::from_joules(10.0)))
            .unwrap();
    }
    let mut ledger = EnergyLedger::new();
    let none = Default::default();
    account_idle_and_sensing(&mut ledger, &mut g, 0.0, 0.024, 0.0, None, &none);
    assert_eq!(ledger.total(), Energy::ZERO);
    account_idle_and_sensing(&mut ledger, &mut g, 1.0, 0.024, 0.0, None, &none);
    assert_eq!(ledger.total(), Energy::from_joules(24.0));

    let mut ledger = EnergyLedger::new();
    let one = [NodeId(7)].into_iter().collect();
    account_idle_and_sensing(&mut ledger, &mut g, 3.6, 0.024, 0.0, Some(&one), &Default::default());
    assert_eq!(ledger.account(NodeId(7)).sensing, Energy::from_joules(0.0864));
}

#[test]
fn conservation_is_exact() {
    let profiles = reference_profiles();
    let (syn, table) = network(&profiles, 1);
    let victim = syn.routes[1].nodes[4];
    let (report, g, _) = run_transfer(
        syn.graph,
        table,
        syn.sink,
        &manual_distribution(&[20, 20, 20, 20, 20]),
        &energy(),
        &link(),
        FaultScript::none().node_fail(0.5, victim),
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(report.delivered, 100);
    for n in g.nodes() {
        let spent = n.initial_energy - n.residual_energy;
        let booked = report
            .nodes
            .iter()
            .find(|s| s.id == n.id)
            .map_or(Energy::ZERO, |s| s.tx + s.rx + s.idle + s.sensing);
        assert_eq!(spent, booked, "node {}", n.id);
    }
}
