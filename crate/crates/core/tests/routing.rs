//! Route discovery checked against an independent max-flow oracle.

mod common;

use std::collections::{BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsn_multipath::energy::Energy;
use wsn_multipath::routing::{discover_disjoint_paths, Route};
use wsn_multipath::topology::{deploy_field, FieldSpec, Node, NodeId, Point, TopologyGraph};

/// Random graph with explicit links, each pair linked with probability `p`.
fn random_graph(n: u32, p: f64, seed: u64) -> TopologyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < p {
                links.push((NodeId(a), NodeId(b)));
            }
        }
    }
    let mut g = TopologyGraph::with_links(1.0, links);
    for i in 0..n {
        g.add_node(Node::new(NodeId(i), Point::default(), Energy::from_joules(1.0)))
            .unwrap();
    }
    g
}

/// Maximum number of interior-disjoint s–t paths, by unit-capacity max
/// flow on the vertex-split graph (relays only, redundant nodes excluded).
fn max_disjoint(g: &TopologyGraph, s: NodeId, t: NodeId) -> usize {
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    let idx = |v: NodeId| ids.iter().position(|&x| x == v).unwrap();
    let n = ids.len();
    // Node v has "in" = 2v and "out" = 2v + 1.
    let size = 2 * n;
    let mut cap = vec![vec![0i32; size]; size];
    for &v in &ids {
        let i = idx(v);
        let relay = g.node(v).is_some_and(|x| !x.is_redundant && x.is_alive());
        cap[2 * i][2 * i + 1] = if v == s || v == t { n as i32 } else { i32::from(relay) };
        for u in g.neighbors(v) {
            cap[2 * i + 1][2 * idx(u)] = 1;
        }
    }
    let (src, dst) = (2 * idx(s) + 1, 2 * idx(t));
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; size];
        prev[src] = src;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for v in 0..size {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[dst] == usize::MAX {
            return flow;
        }
        let mut v = dst;
        while v != src {
            let u = prev[v];
            cap[u][v] -= 1;
            cap[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
}

/// Exhaustive search over simple paths, for very small graphs.
fn brute_force_disjoint(g: &TopologyGraph, s: NodeId, t: NodeId) -> usize {
    fn walk(g: &TopologyGraph, t: NodeId, path: &mut Vec<NodeId>, out: &mut Vec<BTreeSet<NodeId>>) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path[1..path.len() - 1].iter().copied().collect());
            return;
        }
        for v in g.neighbors(u) {
            if path.contains(&v) || (v != t && g.node(v).unwrap().is_redundant) {
                continue;
            }
            path.push(v);
            walk(g, t, path, out);
            path.pop();
        }
    }
    fn best(paths: &[BTreeSet<NodeId>], used: &BTreeSet<NodeId>, from: usize, direct: bool) -> usize {
        let mut top = 0;
        for i in from..paths.len() {
            let p = &paths[i];
            if p.is_empty() && direct {
                continue;
            }
            if p.is_disjoint(used) {
                let mut u = used.clone();
                u.extend(p.iter().copied());
                top = top.max(1 + best(paths, &u, i + 1, direct || p.is_empty()));
            }
        }
        top
    }
    let mut paths = Vec::new();
    walk(g, t, &mut vec![s], &mut paths);
    best(&paths, &BTreeSet::new(), 0, false)
}

fn check_routes(g: &TopologyGraph, s: NodeId, t: NodeId, routes: &[Route]) {
    for r in routes {
        assert_eq!(r.source(), s);
        assert_eq!(r.sink(), t);
        for w in r.nodes.windows(2) {
            assert!(g.has_edge(w[0], w[1]), "route {r} uses a missing edge");
        }
    }
    for (i, a) in routes.iter().enumerate() {
        for b in &routes[i + 1..] {
            let sa: BTreeSet<_> = a.nodes.iter().collect();
            let sb: BTreeSet<_> = b.nodes.iter().collect();
            let shared: BTreeSet<_> = sa.intersection(&sb).copied().copied().collect();
            assert_eq!(shared, BTreeSet::from([s, t]), "{a} and {b} share relays");
        }
    }
    for w in routes.windows(2) {
        assert!(w[0].hops() <= w[1].hops(), "hop counts must not decrease");
    }
    assert!(routes.len() <= g.degree(s));
}

#[test]
fn max_flow_oracle_agrees_with_enumeration() {
    for seed in 0..200 {
        let g = random_graph(7, 0.45, seed);
        assert_eq!(
            max_disjoint(&g, NodeId(0), NodeId(6)),
            brute_force_disjoint(&g, NodeId(0), NodeId(6)),
            "seed {seed}"
        );
    }
}

#[test]
fn source_degree_bounds_route_count() {
    // Source 0 has degree 3; the sink is reachable through each neighbour.
    let links = [(0, 1), (0, 2), (0, 3), (1, 9), (2, 9), (3, 9), (4, 9), (5, 9)];
    let mut g = TopologyGraph::with_links(1.0, links.map(|(a, b)| (NodeId(a), NodeId(b))));
    for i in [0, 1, 2, 3, 4, 5, 9] {
        g.add_node(Node::new(NodeId(i), Point::default(), Energy::from_joules(1.0)))
            .unwrap();
    }
    let routes = discover_disjoint_paths(&g, NodeId(0), NodeId(9), 10).unwrap();
    assert_eq!(routes.len(), 3);
    assert_eq!(discover_disjoint_paths(&g, NodeId(0), NodeId(9), 2).unwrap().len(), 2);
}

#[test]
fn geometric_discovery_is_deterministic() {
    let mut spec = FieldSpec::new(200.0, 200.0, 300, 5);
    spec.radio_range = 25.0;
    let g = deploy_field(&spec).unwrap();
    let a = discover_disjoint_paths(&g, NodeId(0), NodeId(1), 6).unwrap();
    let b = discover_disjoint_paths(&deploy_field(&spec).unwrap(), NodeId(0), NodeId(1), 6).unwrap();
    assert_eq!(a, b);
    check_routes(&g, NodeId(0), NodeId(1), &a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_never_beats_max_flow(seed in any::<u64>(), n in 4u32..=12, p in 0.15f64..0.7) {
        let g = random_graph(n, p, seed);
        let (s, t) = (NodeId(0), NodeId(n - 1));
        let routes = discover_disjoint_paths(&g, s, t, usize::MAX).unwrap();
        check_routes(&g, s, t, &routes);
        prop_assert!(routes.len() <= max_disjoint(&g, s, t));
    }

    #[test]
    fn geometric_routes_are_disjoint(seed in any::<u64>(), n in 2u32..=50, range in 10.0f64..60.0) {
        let mut spec = FieldSpec::new(100.0, 100.0, n, seed);
        spec.radio_range = range;
        let g = deploy_field(&spec).unwrap();
        let (s, t) = (NodeId(0), NodeId(n - 1));
        let routes = discover_disjoint_paths(&g, s, t, usize::MAX).unwrap();
        check_routes(&g, s, t, &routes);
        prop_assert!(routes.iter().all(|r| r.interior().iter().all(|&v| !g.node(v).unwrap().is_redundant)));
    }
}
