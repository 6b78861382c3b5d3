//! Packet allocation over node-disjoint paths.
//!
//! Three schemes are supported:
//!
//! * [`Scheme::SinglePath`]: everything on the minimum-hop path.
//! * [`Scheme::EqualSplit`]: `D / n` packets per path.
//! * [`Scheme::Adaptive`]: each path may carry at most as many packets as
//!   keeps its energy-delay product at or below the EDP of the equal
//!   split. The per-path bound is the positive root of
//!   `A·Δ² + B·Δ = C`; the roots are then scaled proportionally so that
//!   they sum to `D` and rounded with the largest-remainder method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, EnergyParams, ModelError, PathId, PathProfile};

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("degenerate path {path:?}: quadratic coefficient A = {a} (zero-delay or zero-energy path)")]
    DegeneratePath { path: Option<PathId>, a: f64 },
    #[error("invalid quadratic coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("raw capacity for path {path} must be finite and >= 0, got {value}")]
    InvalidCapacity { path: PathId, value: f64 },
    #[error("no capacity: all raw capacities are zero but {demand} packets must be placed")]
    NoCapacity { demand: u64 },
    #[error("no paths to allocate over")]
    NoPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SinglePath,
    EqualSplit,
    Adaptive,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SinglePath, Scheme::EqualSplit, Scheme::Adaptive];

    /// 1-based scheme number (1 = single path, 2 = equal split, 3 = adaptive).
    pub fn number(self) -> u8 {
        match self {
            Scheme::SinglePath => 1,
            Scheme::EqualSplit => 2,
            Scheme::Adaptive => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SinglePath => "single-path",
            Scheme::EqualSplit => "equal-split",
            Scheme::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "single" | "single-path" | "singlepath" => Ok(Scheme::SinglePath),
            "2" | "equal" | "equal-split" | "equalsplit" => Ok(Scheme::EqualSplit),
            "3" | "adaptive" => Ok(Scheme::Adaptive),
            other => Err(format!(
                "unknown scheme `{other}` (expected 1|2|3 or single|equal|adaptive)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub path: PathId,
    pub packets: u64,
}

/// Set when the summed per-path EDP bounds cannot absorb the demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    pub capacity: f64,
    pub demand: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub scheme: Scheme,
    pub allocations: Vec<Allocation>,
    pub total: u64,
    /// Real-valued per-path bounds `Δ*_j` (adaptive scheme only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_capacities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<Infeasibility>,
}

impl Distribution {
    pub fn packets_on(&self, path: PathId) -> Option<u64> {
        self.allocations
            .iter()
            .find(|a| a.path == path)
            .map(|a| a.packets)
    }

    pub fn packet_vector(&self) -> Vec<u64> {
        self.allocations.iter().map(|a| a.packets).collect()
    }

    pub fn allocated(&self) -> u64 {
        self.allocations.iter().map(|a| a.packets).sum()
    }
}

/// Coefficients of `A·Δ² + B·Δ = C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Expands `EDP_j(Δ) = EDP_avg` into quadratic form for one path.
pub fn coefficients_for_path(
    ep: &EnergyParams,
    profile: &PathProfile,
    edp_avg: f64,
) -> QuadraticCoefficients {
    let hops = f64::from(profile.hops);
    let delay_factor = profile.hop_delay * hops;
    let nodes = hops + 1.0;
    QuadraticCoefficients {
        a: ep.packet_energy_per_node(profile.mean_hop_distance()) * nodes * delay_factor,
        b: ep.sensing_power * nodes * delay_factor,
        c: edp_avg,
    }
}

/// Largest `Δ ≥ 0` with `A·Δ² + B·Δ ≤ C`.
///
/// Uses the cancellation-free form `2C / (B + √(B² + 4AC))`, algebraically
/// equal to `(−B + √(B² + 4AC)) / 2A` but stable when `4AC ≪ B²`.
pub fn solve_max_packets(coeffs: &QuadraticCoefficients) -> Result<f64, AllocError> {
    let QuadraticCoefficients { a, b, c } = *coeffs;
    if !(a.is_finite() && a > 0.0) {
        return Err(AllocError::DegeneratePath { path: None, a });
    }
    if !(b.is_finite() && b >= 0.0 && c.is_finite() && c >= 0.0) {
        return Err(AllocError::InvalidCoefficients(format!(
            "need B >= 0 and C >= 0, got B = {b}, C = {c}"
        )));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let disc = (b * b + 4.0 * a * c).sqrt();
    Ok(2.0 * c / (b + disc))
}

/// Hamilton apportionment of `total` over `weights`: floor every
/// proportional share, then hand the leftover units to the largest
/// fractional parts. Ties go to the lower index. With `caps`, a unit is
/// never given to an index already at its cap (callers ensure the caps can
/// absorb `total`).
///
/// Callers guarantee a positive weight sum.
fn largest_remainder(weights: &[f64], total: u64, caps: Option<&[u64]>) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    if let Some(caps) = caps {
        for (c, &cap) in counts.iter_mut().zip(caps) {
            *c = (*c).min(cap);
        }
    }
    let assigned: u64 = counts.iter().sum();

    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = shares[i] - shares[i].floor();
        let fj = shares[j] - shares[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });

    if assigned <= total {
        let mut left = total - assigned;
        while left > 0 {
            let before = left;
            for &i in &order {
                if left == 0 {
                    break;
                }
                if caps.is_some_and(|c| counts[i] >= c[i]) {
                    continue;
                }
                counts[i] += 1;
                left -= 1;
            }
            assert!(left < before, "caps cannot absorb the total");
        }
    } else {
        // Only reachable through floating-point overshoot of the shares.
        let mut excess = assigned - total;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

/// Scales raw per-path capacities so they sum to `total` and rounds them
/// to whole packets.
pub fn normalize_distribution(
    raw: &[(PathId, f64)],
    total: u64,
) -> Result<Distribution, AllocError> {
    if raw.is_empty() {
        return Err(AllocError::NoPaths);
    }
    for &(path, value) in raw {
        if !(value.is_finite() && value >= 0.0) {
            return Err(AllocError::InvalidCapacity { path, value });
        }
    }
    let capacity: f64 = raw.iter().map(|&(_, v)| v).sum();

    // Sort by path id so the tiebreak is on path id, not input position.
    let mut sorted: Vec<(PathId, f64)> = raw.to_vec();
    sorted.sort_by_key(|&(p, _)| p);

    let counts = if total == 0 {
        vec![0; sorted.len()]
    } else if capacity <= 0.0 {
        return Err(AllocError::NoCapacity { demand: total });
    } else {
        let weights: Vec<f64> = sorted.iter().map(|&(_, v)| v).collect();
        // When the whole-packet bounds can carry the demand, keep every
        // path within its own bound.
        let caps: Vec<u64> = weights.iter().map(|w| w.floor() as u64).collect();
        let fits = caps.iter().sum::<u64>() >= total;
        largest_remainder(&weights, total, fits.then_some(caps.as_slice()))
    };

    let infeasible = (capacity < total as f64).then_some(Infeasibility {
        capacity,
        demand: total,
    });
    if let Some(inf) = &infeasible {
        log::warn!(
            "aggregate path capacity {:.3} packets is below demand {}; allocating proportionally",
            inf.capacity,
            inf.demand
        );
    }

    Ok(Distribution {
        scheme: Scheme::Adaptive,
        allocations: sorted
            .iter()
            .zip(counts)
            .map(|(&(path, _), packets)| Allocation { path, packets })
            .collect(),
        total,
        raw_capacities: Some(sorted.iter().map(|&(_, v)| v).collect()),
        infeasible,
    })
}

/// Real-valued EDP-bounded capacity `Δ*_j` of every path, in input order.
pub fn adaptive_capacities(
    ep: &EnergyParams,
    paths: &[PathProfile],
    total: u64,
) -> Result<Vec<f64>, AllocError> {
    let edp_avg = model::average_edp(ep, paths, total as f64)?;
    paths
        .iter()
        .map(|p| {
            let coeffs = coefficients_for_path(ep, p, edp_avg);
            solve_max_packets(&coeffs).map_err(|e| match e {
                AllocError::DegeneratePath { a, .. } => AllocError::DegeneratePath {
                    path: Some(p.id),
                    a,
                },
                other => other,
            })
        })
        .collect()
}

/// Splits `total` packets over `paths` according to `scheme`.
pub fn allocate(
    scheme: Scheme,
    ep: &EnergyParams,
    paths: &[PathProfile],
    total: u64,
) -> Result<Distribution, AllocError> {
    if paths.is_empty() {
        return Err(AllocError::NoPaths);
    }
    let mut ordered: Vec<&PathProfile> = paths.iter().collect();
    ordered.sort_by_key(|p| p.id);

    match scheme {
        Scheme::SinglePath => {
            let best = ordered
                .iter()
                .min_by_key(|p| (p.hops, p.id))
                .expect("non-empty")
                .id;
            Ok(Distribution {
                scheme,
                allocations: ordered
                    .iter()
                    .map(|p| Allocation {
                        path: p.id,
                        packets: if p.id == best { total } else { 0 },
                    })
                    .collect(),
                total,
                raw_capacities: None,
                infeasible: None,
            })
        }
        Scheme::EqualSplit => {
            let counts = largest_remainder(&vec![1.0; ordered.len()], total, None);
            Ok(Distribution {
                scheme,
                allocations: ordered
                    .iter()
                    .zip(counts)
                    .map(|(p, packets)| Allocation {
                        path: p.id,
                        packets,
                    })
                    .collect(),
                total,
                raw_capacities: None,
                infeasible: None,
            })
        }
        Scheme::Adaptive => {
            let caps = adaptive_capacities(ep, paths, total)?;
            let raw: Vec<(PathId, f64)> = paths.iter().map(|p| p.id).zip(caps).collect();
            normalize_distribution(&raw, total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEdpCheck {
    pub path: PathId,
    pub packets: u64,
    pub edp: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdpBoundReport {
    pub edp_avg: f64,
    pub paths: Vec<PathEdpCheck>,
    pub all_pass: bool,
    pub infeasible: Option<Infeasibility>,
}

/// Relative slack when comparing a path EDP with the average; absorbs the
/// rounding difference between the per-path and the averaged expressions.
const EDP_BOUND_RTOL: f64 = 1e-9;

/// Checks `EDP_j(Δ_j) ≤ EDP_avg` for every path of `dist`.
pub fn verify_edp_bound(
    ep: &EnergyParams,
    paths: &[PathProfile],
    dist: &Distribution,
) -> Result<EdpBoundReport, AllocError> {
    let edp_avg = model::average_edp(ep, paths, dist.total as f64)?;
    let limit = edp_avg * (1.0 + EDP_BOUND_RTOL);
    let checks: Vec<PathEdpCheck> = paths
        .iter()
        .map(|p| {
            let packets = dist.packets_on(p.id).unwrap_or(0);
            let edp = model::path_edp(ep, p, packets as f64);
            PathEdpCheck {
                path: p.id,
                packets,
                edp,
                passes: edp <= limit,
            }
        })
        .collect();
    let all_pass = checks.iter().all(|c| c.passes);
    Ok(EdpBoundReport {
        edp_avg,
        paths: checks,
        all_pass,
        infeasible: dist.infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: f64, b: f64, c: f64) -> QuadraticCoefficients {
        QuadraticCoefficients { a, b, c }
    }

    fn raw(values: &[f64]) -> Vec<(PathId, f64)> {
        values.iter().enumerate().map(|(i, &v)| (PathId(i), v)).collect()
    }

    fn ep() -> EnergyParams {
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

    fn hops(hs: &[u32]) -> Vec<PathProfile> {
        hs.iter()
            .enumerate()
            .map(|(i, &h)| PathProfile::new(PathId(i), h, 0.02, 100.0))
            .collect()
    }

    #[test]
    fn solver_examples() {
        assert_eq!(solve_max_packets(&q(1.0, 0.0, 4.0)).unwrap(), 2.0);
        assert_eq!(solve_max_packets(&q(1.0, 3.0, 10.0)).unwrap(), 2.0);
        assert_eq!(solve_max_packets(&q(2.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            solve_max_packets(&q(0.0, 1.0, 1.0)),
            Err(AllocError::DegeneratePath { .. })
        ));
        assert!(matches!(
            solve_max_packets(&q(1.0, -1.0, 1.0)),
            Err(AllocError::InvalidCoefficients(_))
        ));
    }

    #[test]
    fn coefficient_edge_cases() {
        let p = PathProfile::new(PathId(0), 9, 0.02, 100.0);
        let no_sense = EnergyParams {
            sensing_power: 0.0,
            ..ep()
        };
        assert_eq!(coefficients_for_path(&no_sense, &p, 1.0).b, 0.0);
        let frozen = PathProfile { hop_delay: 0.0, ..p };
        let c = coefficients_for_path(&ep(), &frozen, 1.0);
        assert_eq!((c.a, c.b), (0.0, 0.0));
        assert!(solve_max_packets(&c).is_err());
    }

    #[test]
    fn normalize_examples() {
        let d = normalize_distribution(&raw(&[2.0; 5]), 100).unwrap();
        assert_eq!(d.packet_vector(), vec![20; 5]);
        let d = normalize_distribution(&raw(&[2.0, 1.0, 1.0]), 100).unwrap();
        assert_eq!(d.packet_vector(), vec![50, 25, 25]);
        let d = normalize_distribution(&raw(&[1.0, 1.0, 1.0]), 100).unwrap();
        assert_eq!(d.packet_vector(), vec![34, 33, 33]);
        assert_eq!(
            normalize_distribution(&raw(&[0.0, 0.0]), 10),
            Err(AllocError::NoCapacity { demand: 10 })
        );
        assert_eq!(
            normalize_distribution(&raw(&[0.0, 0.0]), 0)
                .unwrap()
                .packet_vector(),
            vec![0, 0]
        );
        assert!(normalize_distribution(&raw(&[1.0, f64::NAN]), 10).is_err());
    }

    #[test]
    fn rounding_respects_whole_packet_bounds_when_possible() {
        // Plain largest remainder would give [2, 2, 1], putting path 1 over
        // its bound of 1.9 packets.
        let d = normalize_distribution(&raw(&[3.0, 1.9, 1.9]), 5).unwrap();
        assert_eq!(d.packet_vector(), vec![3, 1, 1]);
        // Floors sum below the demand: no caps, plain apportionment.
        let d = normalize_distribution(&raw(&[2.5, 2.5]), 5).unwrap();
        assert_eq!(d.packet_vector(), vec![3, 2]);
    }

    #[test]
    fn tiebreak_follows_path_id_not_position() {
        let input = vec![(PathId(2), 1.0), (PathId(0), 1.0), (PathId(1), 1.0)];
        let d = normalize_distribution(&input, 100).unwrap();
        assert_eq!(d.packets_on(PathId(0)), Some(34));
        assert_eq!(d.packets_on(PathId(2)), Some(33));
    }

    #[test]
    fn infeasible_demand_is_flagged() {
        let d = normalize_distribution(&raw(&[3.0, 1.0]), 10).unwrap();
        assert_eq!(d.allocated(), 10);
        let inf = d.infeasible.unwrap();
        assert_eq!(inf.demand, 10);
        assert!((inf.capacity - 4.0).abs() < 1e-12);
        assert!(normalize_distribution(&raw(&[30.0, 10.0]), 10)
            .unwrap()
            .infeasible
            .is_none());
    }

    #[test]
    fn single_path_takes_minimum_hops() {
        let paths = hops(&[9, 22, 5, 20, 7]);
        let d = allocate(Scheme::SinglePath, &ep(), &paths, 100).unwrap();
        assert_eq!(d.packet_vector(), vec![0, 0, 100, 0, 0]);

        let mut reversed = paths.clone();
        reversed.reverse();
        assert_eq!(allocate(Scheme::SinglePath, &ep(), &reversed, 100).unwrap(), d);

        let tied = hops(&[4, 3, 3]);
        let d = allocate(Scheme::SinglePath, &ep(), &tied, 10).unwrap();
        assert_eq!(d.packet_vector(), vec![0, 10, 0]);
    }

    #[test]
    fn equal_split() {
        let paths = hops(&[9, 22, 5, 20, 7]);
        let d = allocate(Scheme::EqualSplit, &ep(), &paths, 100).unwrap();
        assert_eq!(d.packet_vector(), vec![20; 5]);
        let d = allocate(Scheme::EqualSplit, &ep(), &hops(&[1, 2, 3]), 100).unwrap();
        assert_eq!(d.packet_vector(), vec![34, 33, 33]);
    }

    #[test]
    fn adaptive_on_homogeneous_paths_matches_equal_split() {
        let paths = hops(&[6; 7]);
        for total in [0u64, 1, 6, 100, 101, 999] {
            let a = allocate(Scheme::Adaptive, &ep(), &paths, total).unwrap();
            let e = allocate(Scheme::EqualSplit, &ep(), &paths, total).unwrap();
            assert_eq!(a.packet_vector(), e.packet_vector(), "D = {total}");
        }
    }

    #[test]
    fn equal_split_on_homogeneous_paths_meets_bound() {
        let paths = hops(&[8; 4]);
        let d = allocate(Scheme::EqualSplit, &ep(), &paths, 100).unwrap();
        let r = verify_edp_bound(&ep(), &paths, &d).unwrap();
        assert!(r.all_pass);
        for c in &r.paths {
            assert!((c.edp - r.edp_avg).abs() <= 1e-12 * r.edp_avg);
        }
    }

    #[test]
    fn tiny_budget_reports_infeasibility() {
        // Averaging the distances hides the steep amplifier cost of the
        // long single hop, so the budget is far below what the demand needs
        // (capacities ≈ 10.5 and 3.7 packets for a demand of 100).
        let ep = EnergyParams {
            path_loss_exponent: 4.0,
            sensing_power: 1.0,
            ..ep()
        };
        let paths = vec![
            PathProfile::new(PathId(0), 35, 0.2, 10.0),
            PathProfile::new(PathId(1), 1, 0.05, 300.0),
        ];
        let d = allocate(Scheme::Adaptive, &ep, &paths, 100).unwrap();
        let caps = d.raw_capacities.clone().unwrap();
        assert!(caps.iter().sum::<f64>() < 100.0);
        assert!(d.infeasible.is_some());
        let report = verify_edp_bound(&ep, &paths, &d).unwrap();
        assert!(report.infeasible.is_some());
        // Cross-check every verdict with a direct EDP evaluation.
        for c in &report.paths {
            let p = paths.iter().find(|p| p.id == c.path).unwrap();
            let direct = model::path_edp(&ep, p, c.packets as f64);
            assert_eq!(c.passes, direct <= report.edp_avg * (1.0 + 1e-9));
        }
        assert!(!report.all_pass);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("1".parse::<Scheme>().unwrap(), Scheme::SinglePath);
        assert_eq!("Equal".parse::<Scheme>().unwrap(), Scheme::EqualSplit);
        assert_eq!("adaptive".parse::<Scheme>().unwrap(), Scheme::Adaptive);
        assert!("4".parse::<Scheme>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn root_satisfies_bound_and_is_monotone(
                a in 1e-8f64..1e4,
                b in 0.0f64..1e4,
                c in 0.0f64..1e6,
                dc in 1e-6f64..1e6,
                da in 1e-6f64..1e4,
            ) {
                let r = solve_max_packets(&q(a, b, c)).unwrap();
                prop_assert!(r >= 0.0);
                prop_assert!((a * r * r + b * r - c).abs() <= 1e-9 * c.max(1.0));
                prop_assert!(solve_max_packets(&q(a, b, c + dc)).unwrap() >= r);
                prop_assert!(solve_max_packets(&q(a + da, b, c)).unwrap() <= r);
            }

            #[test]
            fn normalized_counts_sum_to_total(
                values in proptest::collection::vec(0.0f64..500.0, 1..8),
                total in 0u64..2000,
            ) {
                prop_assume!(total == 0 || values.iter().sum::<f64>() > 0.0);
                let d = normalize_distribution(&raw(&values), total).unwrap();
                prop_assert_eq!(d.allocated(), total);
                let floors: u64 = values.iter().map(|v| v.floor() as u64).sum();
                if floors >= total {
                    for (a, v) in d.allocations.iter().zip(&values) {
                        prop_assert!(a.packets as f64 <= v.floor());
                    }
                }
            }

            #[test]
            fn every_scheme_allocates_exactly_d(
                hops in proptest::collection::vec(1u32..40, 1..7),
                tau in 1e-3f64..0.2,
                total in 0u64..1500,
            ) {
                let paths: Vec<PathProfile> = hops
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| PathProfile::new(PathId(i), h, tau, 100.0))
                    .collect();
                for scheme in [Scheme::SinglePath, Scheme::EqualSplit, Scheme::Adaptive] {
                    let d = allocate(scheme, &ep(), &paths, total).unwrap();
                    prop_assert_eq!(d.allocated(), total);
                }
            }
        }
    }
}
