//! Energy-delay aware multipath data transfer for wireless sensor networks.
//!
//! * [`model`]: delay and energy equations.
//! * [`distributor`]: splitting a transfer over node-disjoint paths.
//! * [`topology`] and [`routing`]: sensor field, route discovery, routing tables.
//! * [`sim`]: discrete-event transfer with fault detection and node replacement.
//! * [`scenario`] and [`harness`]: scenario files and scheme comparison.

pub mod distributor;
pub mod energy;
pub mod harness;
pub mod model;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod topology;
