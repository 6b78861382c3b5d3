//! Per-node energy bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::Energy;
use crate::topology::{NodeId, TopologyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Tx,
    Rx,
    Idle,
    Sensing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeAccount {
    pub tx: Energy,
    pub rx: Energy,
    pub idle: Energy,
    pub sensing: Energy,
    /// Seconds the radio spent transmitting or receiving.
    pub busy_time: f64,
}

impl NodeAccount {
    pub fn total(&self) -> Energy {
        self.tx + self.rx + self.idle + self.sensing
    }
}

/// Energy drawn from node budgets. Every charge goes through
/// [`TopologyGraph::drain`], so a node can never go below zero and the
/// amounts recorded here are exactly what left the budgets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    accounts: BTreeMap<NodeId, NodeAccount>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws `joules` from `node` and books it. Returns the amount actually
    /// drawn (less than requested when the budget runs out, zero for a node
    /// that is not alive).
    pub fn charge(
        &mut self,
        g: &mut TopologyGraph,
        node: NodeId,
        component: Component,
        joules: f64,
    ) -> Energy {
        if !g.is_alive(node) {
            return Energy::ZERO;
        }
        let drawn = g.drain(node, Energy::from_joules(joules));
        let acct = self.accounts.entry(node).or_default();
        match component {
            Component::Tx => acct.tx += drawn,
            Component::Rx => acct.rx += drawn,
            Component::Idle => acct.idle += drawn,
            Component::Sensing => acct.sensing += drawn,
        }
        drawn
    }

    pub fn add_busy(&mut self, node: NodeId, seconds: f64) {
        self.accounts.entry(node).or_default().busy_time += seconds;
    }

    pub fn account(&self, node: NodeId) -> NodeAccount {
        self.accounts.get(&node).copied().unwrap_or_default()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&NodeId, &NodeAccount)> {
        self.accounts.iter()
    }

    pub fn total(&self) -> Energy {
        self.accounts.values().map(NodeAccount::total).sum()
    }
}
