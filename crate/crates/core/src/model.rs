//! Closed-form delay and energy model for a single multihop path.
//!
//! A path `j` is described by its hop count `H_j`, the time `τ_j` one packet
//! needs to cross one hop, and the straight-line source–sink distance `T`.
//! The average inter-hop distance is approximated as `T / H_j`.
//!
//! Every node on a path (there are `H_j + 1` of them) pays
//! `(E_t + E_r) · S` per packet it handles plus a sensing/processing drain
//! `K_r`, so the path energy is affine in the packet count while the path
//! delay is linear in it. Their product, the energy-delay product (EDP),
//! is therefore a quadratic in the packet count with no constant term.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid energy parameter `{field}`: {reason}")]
    InvalidEnergy { field: &'static str, reason: String },
    #[error("invalid link parameter `{field}`: {reason}")]
    InvalidLink { field: &'static str, reason: String },
    #[error("invalid path profile {path}: {reason}")]
    InvalidPath { path: PathId, reason: String },
    #[error("average EDP needs at least one path")]
    NoPaths,
}

/// Index of a path within the set discovered for one source/sink pair.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PathId(pub usize);

impl std::fmt::Display for PathId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Radio and electronics constants of a (homogeneous) sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// `e_t`: transmitter electronics power, J/s.
    pub tx_electronics: f64,
    /// `e_d`: amplifier coefficient, J/s per m^k.
    pub amplifier: f64,
    /// `e_r`: receiver power, J/s.
    pub rx_electronics: f64,
    /// `k`: path-loss exponent.
    pub path_loss_exponent: f64,
    /// `T_1b`: radio-on time to transmit one bit, s.
    pub bit_tx_time: f64,
    /// `T_2b`: radio-on time to receive one bit, s.
    pub bit_rx_time: f64,
    /// `K_r`: sensing/processing power per node, W.
    pub sensing_power: f64,
    /// `S`: data packet size, bits.
    pub packet_bits: f64,
}

/// Non-fatal findings from [`EnergyParams::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    PathLossExponentOutOfRange(f64),
}

impl EnergyParams {
    /// Checks the parameter invariants. A path-loss exponent outside
    /// `[2, 4]` is accepted but reported (and logged) as a warning.
    pub fn validate(&self) -> Result<Vec<ParamWarning>, ModelError> {
        let fields = [
            ("tx_electronics", self.tx_electronics),
            ("amplifier", self.amplifier),
            ("rx_electronics", self.rx_electronics),
            ("path_loss_exponent", self.path_loss_exponent),
            ("bit_tx_time", self.bit_tx_time),
            ("bit_rx_time", self.bit_rx_time),
            ("sensing_power", self.sensing_power),
            ("packet_bits", self.packet_bits),
        ];
        for (field, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidEnergy {
                    field,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        if self.packet_bits <= 0.0 {
            return Err(ModelError::InvalidEnergy {
                field: "packet_bits",
                reason: "must be > 0".into(),
            });
        }
        let mut warnings = Vec::new();
        let k = self.path_loss_exponent;
        if !(2.0..=4.0).contains(&k) {
            log::warn!("path-loss exponent {k} is outside the usual range [2, 4]");
            warnings.push(ParamWarning::PathLossExponentOutOfRange(k));
        }
        Ok(warnings)
    }

    /// `E_ts = e_t + e_d · d^k`: transmit power needed to reach distance `d`.
    pub fn tx_power_at(&self, distance: f64) -> f64 {
        self.tx_electronics + self.amplifier * distance.powf(self.path_loss_exponent)
    }

    /// Communication energy one node spends per packet it handles
    /// (receive plus forward over `distance`).
    pub fn packet_energy_per_node(&self, distance: f64) -> f64 {
        (tx_energy_per_bit(self, distance) + rx_energy_per_bit(self)) * self.packet_bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// `b`: link speed, bits/s.
    pub bit_rate: f64,
    /// `l`: propagation/link delay, s.
    pub link_delay: f64,
    /// `q`: average queuing delay per packet per hop, s.
    pub queue_delay: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.bit_rate.is_finite() && self.bit_rate > 0.0) {
            return Err(ModelError::InvalidLink {
                field: "bit_rate",
                reason: format!("must be > 0, got {}", self.bit_rate),
            });
        }
        for (field, v) in [("link_delay", self.link_delay), ("queue_delay", self.queue_delay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidLink {
                    field,
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Time for a packet of `bits` to cross one hop on this link.
    pub fn hop_time(&self, bits: f64) -> f64 {
        per_hop_delay(bits, self)
    }
}

/// Per-path inputs to the delay and energy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathProfile {
    pub id: PathId,
    /// `H_j`, number of links.
    pub hops: u32,
    /// `τ_j`, per-packet per-hop delay in seconds.
    pub hop_delay: f64,
    /// `T`, straight-line source–sink distance in metres.
    pub distance: f64,
}

impl PathProfile {
    pub fn new(id: PathId, hops: u32, hop_delay: f64, distance: f64) -> Self {
        Self {
            id,
            hops,
            hop_delay,
            distance,
        }
    }

    /// `d_j = T / H_j`.
    pub fn mean_hop_distance(&self) -> f64 {
        self.distance / f64::from(self.hops)
    }

    /// Checks `H ≥ 1`, `τ > 0`, `T > 0`, and, when a radio range is given,
    /// that the mean hop distance is reachable.
    pub fn validate(&self, radio_range: Option<f64>) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidPath {
            path: self.id,
            reason,
        };
        if self.hops < 1 {
            return Err(bad("hop count must be >= 1".into()));
        }
        if !(self.hop_delay.is_finite() && self.hop_delay > 0.0) {
            return Err(bad(format!("hop delay must be > 0, got {}", self.hop_delay)));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(bad(format!("distance must be > 0, got {}", self.distance)));
        }
        if let Some(range) = radio_range {
            let d = self.mean_hop_distance();
            if d > range {
                return Err(bad(format!(
                    "mean hop distance {d} m exceeds radio range {range} m"
                )));
            }
        }
        Ok(())
    }
}

/// `τ = S/b + l + q`.
pub fn per_hop_delay(packet_bits: f64, link: &LinkParams) -> f64 {
    packet_bits / link.bit_rate + link.link_delay + link.queue_delay
}

/// `T_j = Δ_j · τ_j · H_j`.
pub fn path_delay(packets: f64, profile: &PathProfile) -> f64 {
    packets * profile.hop_delay * f64::from(profile.hops)
}

/// `E_t = (e_t + e_d · d^k) · T_1b`.
pub fn tx_energy_per_bit(ep: &EnergyParams, distance: f64) -> f64 {
    ep.tx_power_at(distance) * ep.bit_tx_time
}

/// `E_r = e_r · T_2b`.
pub fn rx_energy_per_bit(ep: &EnergyParams) -> f64 {
    ep.rx_electronics * ep.bit_rx_time
}

/// Traffic-dependent part of the path energy: `(E_t + E_r) · Δ · S · (H + 1)`.
pub fn path_traffic_energy(ep: &EnergyParams, profile: &PathProfile, packets: f64) -> f64 {
    let nodes = f64::from(profile.hops) + 1.0;
    ep.packet_energy_per_node(profile.mean_hop_distance()) * packets * nodes
}

/// Sensing/processing part of the path energy: `K_r · (H + 1)`.
pub fn path_sensing_energy(ep: &EnergyParams, profile: &PathProfile) -> f64 {
    ep.sensing_power * (f64::from(profile.hops) + 1.0)
}

/// Total energy dissipated on path `j` when it carries `packets`.
pub fn path_energy(ep: &EnergyParams, profile: &PathProfile, packets: f64) -> f64 {
    path_traffic_energy(ep, profile, packets) + path_sensing_energy(ep, profile)
}

/// `EDP_j = E_j · T_j`.
pub fn path_edp(ep: &EnergyParams, profile: &PathProfile, packets: f64) -> f64 {
    path_energy(ep, profile, packets) * path_delay(packets, profile)
}

/// EDP of the equal split: every path loaded with `D / n` packets and
/// described by the arithmetic means of hop count, hop delay and distance.
pub fn average_edp(
    ep: &EnergyParams,
    paths: &[PathProfile],
    total_packets: f64,
) -> Result<f64, ModelError> {
    if paths.is_empty() {
        return Err(ModelError::NoPaths);
    }
    let n = paths.len() as f64;
    let mean = |f: fn(&PathProfile) -> f64| paths.iter().map(f).sum::<f64>() / n;
    let hops = mean(|p| f64::from(p.hops));
    let hop_delay = mean(|p| p.hop_delay);
    let distance = mean(|p| p.distance);
    let load = total_packets / n;

    let per_bit = ep.tx_power_at(distance / hops) * ep.bit_tx_time + rx_energy_per_bit(ep);
    let energy = per_bit * load * ep.packet_bits * (hops + 1.0) + ep.sensing_power * (hops + 1.0);
    let delay = load * hop_delay * hops;
    Ok(energy * delay)
}
