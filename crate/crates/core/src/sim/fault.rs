//! Scripted failures and their classification.

use serde::{Deserialize, Serialize};

use crate::topology::{NodeId, TopologyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultTarget {
    NodeFail { node: NodeId },
    LinkFail { a: NodeId, b: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFault {
    pub time: f64,
    #[serde(flatten)]
    pub target: FaultTarget,
}

/// Failures injected during a round, keyed by physical node id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultScript(pub Vec<ScriptedFault>);

impl FaultScript {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn node_fail(mut self, time: f64, node: NodeId) -> Self {
        self.0.push(ScriptedFault {
            time,
            target: FaultTarget::NodeFail { node },
        });
        self
    }

    pub fn link_fail(mut self, time: f64, a: NodeId, b: NodeId) -> Self {
        self.0.push(ScriptedFault {
            time,
            target: FaultTarget::LinkFail { a, b },
        });
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, f) in self.0.iter().enumerate() {
            if !(f.time.is_finite() && f.time >= 0.0) {
                return Err(format!("fault {i}: trigger time must be >= 0, got {}", f.time));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultCase {
    /// The sending node `a` is at fault.
    Case1,
    /// The receiving node `b` or the link `a`–`b` is at fault.
    Case2,
}

/// Outcome of `a`'s self-check after `m` failed deliveries to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub case: FaultCase,
    /// Neighbour `c` that received (or should have received) the beacon;
    /// `None` when `a` has no other neighbour and Case 1 is assumed.
    pub beacon_peer: Option<NodeId>,
}

/// Beacon target for `a`'s self-check: the lowest-id node `a` is linked to,
/// other than `b`.
pub fn beacon_peer(g: &TopologyGraph, a: NodeId, b: NodeId) -> Option<NodeId> {
    g.reachable_from(a).into_iter().find(|&c| c != b)
}

/// Whether a beacon from `a` to `c` gets through right now.
pub fn beacon_succeeds(g: &TopologyGraph, a: NodeId, c: NodeId) -> bool {
    g.has_edge(a, c)
}

/// Classifies a failed `a → b` transfer from the current state of the
/// network, as the beacon exchange would.
pub fn classify_fault(g: &TopologyGraph, a: NodeId, b: NodeId) -> Classification {
    match beacon_peer(g, a, b) {
        None => Classification {
            case: FaultCase::Case1,
            beacon_peer: None,
        },
        Some(c) => Classification {
            case: if beacon_succeeds(g, a, c) {
                FaultCase::Case2
            } else {
                FaultCase::Case1
            },
            beacon_peer: Some(c),
        },
    }
}
