//! Time-ordered event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    PacketSend,
    PacketArrive,
    AckTimeout,
    BeaconSend,
    BeaconResult,
    TimerExpire,
    FaultTrigger { index: usize },
    RecoveryComplete,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::PacketSend => "PacketSend",
            EventKind::PacketArrive => "PacketArrive",
            EventKind::AckTimeout => "AckTimeout",
            EventKind::BeaconSend => "BeaconSend",
            EventKind::BeaconResult => "BeaconResult",
            EventKind::TimerExpire => "TimerExpire",
            EventKind::FaultTrigger { .. } => "FaultTrigger",
            EventKind::RecoveryComplete => "RecoveryComplete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    /// Index of the path the event belongs to (unused for fault triggers).
    pub path: usize,
    /// Per-path hop epoch at scheduling time; events from an earlier epoch
    /// are stale.
    pub epoch: u64,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
}

// Min-heap order on (time, seq).
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Eq for SimEvent {}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
    last: Option<(f64, u64)>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues an event, stamping it with the next sequence number.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        time: f64,
        kind: EventKind,
        path: usize,
        epoch: u64,
        from: Option<NodeId>,
        to: Option<NodeId>,
    ) {
        assert!(time.is_finite(), "event time must be finite");
        if let Some((t, _)) = self.last {
            assert!(time >= t, "event scheduled in the past ({time} < {t})");
        }
        self.heap.push(SimEvent {
            time,
            seq: self.next_seq,
            kind,
            path,
            epoch,
            from,
            to,
        });
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        if let Some(prev) = self.last {
            assert!(
                (ev.time, ev.seq) > prev,
                "event processed out of order: ({}, {}) after {:?}",
                ev.time,
                ev.seq,
                prev
            );
        }
        self.last = Some((ev.time, ev.seq));
        Some(ev)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn clear(&mut self) {
        self.heap.clear();
        self.last = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pops_in_time_then_sequence_order(times in proptest::collection::vec(0u8..20, 0..200)) {
            let mut q = EventQueue::new();
            for (i, &t) in times.iter().enumerate() {
                q.push(f64::from(t), EventKind::PacketSend, i, 0, None, None);
            }
            let mut prev: Option<(f64, u64)> = None;
            while let Some(ev) = q.pop() {
                prop_assert_eq!(ev.path as u64, ev.seq);
                if let Some(p) = prev {
                    prop_assert!((ev.time, ev.seq) > p);
                }
                prev = Some((ev.time, ev.seq));
            }
        }
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn rejects_events_in_the_past() {
        let mut q = EventQueue::new();
        q.push(1.0, EventKind::PacketSend, 0, 0, None, None);
        q.pop();
        q.push(0.5, EventKind::PacketSend, 0, 0, None, None);
    }
}
