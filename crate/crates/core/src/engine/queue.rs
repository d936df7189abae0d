use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// A packet waiting for its earliest departure time.
#[derive(Debug, Clone)]
pub struct ScheduledPacket<P> {
    pub send_index: u64,
    pub enqueued_ns: u64,
    pub departure_ns: u64,
    pub payload: P,
    pub size: usize,
}

impl<P> ScheduledPacket<P> {
    fn key(&self) -> (u64, u64) {
        (self.departure_ns, self.send_index)
    }
}

impl<P> PartialEq for ScheduledPacket<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for ScheduledPacket<P> {}

impl<P> PartialOrd for ScheduledPacket<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for ScheduledPacket<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Bounded earliest-departure-first queue.
///
/// Packets leave in `(departure_ns, send_index)` order. The ordering is
/// exact; there is no time bucketing.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<ScheduledPacket<P>>>,
    capacity: usize,
}

impl<P> EventQueue<P> {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            heap: BinaryHeap::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.capacity
    }

    /// Hands the packet back when the queue is full.
    pub fn push(&mut self, packet: ScheduledPacket<P>) -> Result<(), ScheduledPacket<P>> {
        if self.is_full() {
            return Err(packet);
        }
        self.heap.push(Reverse(packet));
        Ok(())
    }

    pub fn next_departure(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(p)| p.departure_ns)
    }

    pub fn pop(&mut self) -> Option<ScheduledPacket<P>> {
        self.heap.pop().map(|Reverse(p)| p)
    }

    /// Pops the head only if it is due at `now_ns`.
    pub fn pop_due(&mut self, now_ns: u64) -> Option<ScheduledPacket<P>> {
        match self.next_departure() {
            Some(t) if t <= now_ns => self.pop(),
            _ => None,
        }
    }
}
