//! Deterministic discrete-event simulation of a transfer round.

pub mod engine;
pub mod event;
pub mod fault;
pub mod ledger;

pub use engine::{
    account_idle_and_sensing, run_transfer, Detection, FaultRecord, NodeSnapshot, PathReport,
    RecoveryOutcome, SimConfig, SimError, Simulator, TransferReport,
};
pub use fault::{classify_fault, Classification, FaultCase, FaultScript, FaultTarget};
pub use ledger::{Component, EnergyLedger, NodeAccount};
