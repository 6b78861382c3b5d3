#![allow(dead_code)]

use wsn_multipath::distributor::{Allocation, Distribution, Scheme};
use wsn_multipath::energy::Energy;
use wsn_multipath::model::{EnergyParams, LinkParams, PathId, PathProfile};
use wsn_multipath::routing::{self, RouteEntry, RoutingTable, SyntheticTopology};

pub const HOPS: [u32; 5] = [9, 22, 5, 20, 7];

pub fn energy() -> EnergyParams {
    EnergyParams {
        tx_electronics: 1.024e-3,
        amplifier: 1e-7,
        rx_electronics: 8.192e-4,
        path_loss_exponent: 2.0,
        bit_tx_time: 2.5e-3,
        bit_rx_time: 2.5e-3,
        sensing_power: 0.024,
        packet_bits: 1000.0,
    }
}

pub fn link() -> LinkParams {
    LinkParams {
        bit_rate: 50_000.0,
        link_delay: 0.0,
        queue_delay: 0.0,
    }
}

pub fn profiles(hops: &[u32], tau: f64, distance: f64) -> Vec<PathProfile> {
    hops.iter()
        .enumerate()
        .map(|(i, &h)| PathProfile::new(PathId(i), h, tau, distance))
        .collect()
}

pub fn reference_profiles() -> Vec<PathProfile> {
    profiles(&HOPS, 0.02, 100.0)
}

/// Synthetic lanes for `profiles` plus a routing table over them.
pub fn network(profiles: &[PathProfile], spares: u32) -> (SyntheticTopology, RoutingTable) {
    let syn = routing::synthetic_topology(profiles, spares, Energy::from_joules(23_760.0)).unwrap();
    let entries = syn
        .routes
        .iter()
        .zip(profiles)
        .map(|(r, p)| RouteEntry {
            route: r.clone(),
            profile: *p,
            params: energy(),
        })
        .collect();
    let table = RoutingTable::from_entries(&syn.graph, syn.source, syn.sink, entries);
    (syn, table)
}

pub fn manual_distribution(packets: &[u64]) -> Distribution {
    Distribution {
        scheme: Scheme::EqualSplit,
        allocations: packets
            .iter()
            .enumerate()
            .map(|(i, &p)| Allocation {
                path: PathId(i),
                packets: p,
            })
            .collect(),
        total: packets.iter().sum(),
        raw_capacities: None,
        infeasible: None,
    }
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
