//! Userspace replay of a (delay table, arrival-ordered loss table) pair.
//!
//! The model mirrors the two kernel hooks: an egress stage stamps each
//! outgoing packet with `now + delay[egress_index]` and hands it to an
//! earliest-departure queue; an ingress stage sees packets as they come out
//! of that queue and drops the ones whose arrival rank is flagged. Both
//! indices wrap at the trace length, exactly like the in-kernel counters.
//!
//! [`simulate`] runs this on a virtual clock and is fully deterministic.
//! [`relay`] runs the same stages against real UDP sockets.

mod queue;
pub mod relay;

use serde::Serialize;
use thiserror::Error;

use crate::trace::{DelayTrace, Indexing, LossTrace, RawTrace, TraceError, LOST};

pub use queue::{EventQueue, ScheduledPacket};
pub use relay::{relay_run, PacketRecord, RelayConfig, SessionReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("loss table is indexed by {found}, the engine needs arrival order")]
    IndexingMismatch { found: Indexing },
    #[error("delay table has {delays} entries but loss table has {loss}")]
    LengthMismatch { delays: usize, loss: usize },
    #[error("{requested} packets requested from a {len}-entry trace without cyclic replay")]
    TraceExhausted { requested: usize, len: usize },
    #[error("event queue is full ({capacity} packets)")]
    QueueFull { capacity: usize },
    #[error("virtual clock overflowed")]
    ClockOverflow,
    #[error("invalid relay configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("relay i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Ingress verdict for one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Drop,
}

/// Sender-side half of the link: owns the delay table and `egress_index`.
#[derive(Debug, Clone)]
pub struct EgressStage {
    delays: Vec<u64>,
    index: usize,
    wraps: u64,
}

/// Result of stamping one packet at egress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stamp {
    pub table_index: usize,
    pub delay_ns: u64,
    pub departure_ns: u64,
}

impl EgressStage {
    pub fn new(delays: &DelayTrace) -> Self {
        Self {
            delays: delays.delays().to_vec(),
            index: 0,
            wraps: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Number of times the index went back to 0.
    pub fn wraps(&self) -> u64 {
        self.wraps
    }

    pub fn trace_len(&self) -> usize {
        self.delays.len()
    }

    /// Departure time for the next packet; advances and wraps the index.
    pub fn stamp(&mut self, now_ns: u64) -> Result<Stamp, EngineError> {
        let table_index = self.index;
        let delay_ns = self.delays[table_index];
        let departure_ns = now_ns
            .checked_add(delay_ns)
            .ok_or(EngineError::ClockOverflow)?;
        self.index += 1;
        if self.index >= self.delays.len() {
            self.index = 0;
            self.wraps += 1;
        }
        Ok(Stamp {
            table_index,
            delay_ns,
            departure_ns,
        })
    }

    /// Stamps a packet and queues it. A full queue is reported before any
    /// index is consumed.
    pub fn schedule_into<P>(
        &mut self,
        queue: &mut EventQueue<P>,
        now_ns: u64,
        send_index: u64,
        payload: P,
        size: usize,
    ) -> Result<u64, EngineError> {
        if queue.is_full() {
            return Err(EngineError::QueueFull {
                capacity: queue.capacity(),
            });
        }
        let stamp = self.stamp(now_ns)?;
        queue
            .push(ScheduledPacket {
                send_index,
                enqueued_ns: now_ns,
                departure_ns: stamp.departure_ns,
                payload,
                size,
            })
            .map_err(|_| EngineError::QueueFull {
                capacity: queue.capacity(),
            })?;
        Ok(stamp.departure_ns)
    }
}

/// Receiver-side half of the link: owns the loss table and `ingress_index`.
#[derive(Debug, Clone)]
pub struct IngressStage {
    flags: Vec<u8>,
    index: usize,
    wraps: u64,
}

impl IngressStage {
    pub fn new(loss: &LossTrace) -> Result<Self, EngineError> {
        if loss.indexing() != Indexing::ArrivalOrder {
            return Err(EngineError::IndexingMismatch {
                found: loss.indexing(),
            });
        }
        Ok(Self {
            flags: loss.flags().to_vec(),
            index: 0,
            wraps: 0,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn wraps(&self) -> u64 {
        self.wraps
    }

    /// Every arrival consumes an index, including the ones that get dropped.
    pub fn decide(&mut self) -> Verdict {
        let flag = self.flags[self.index];
        self.index += 1;
        if self.index >= self.flags.len() {
            self.index = 0;
            self.wraps += 1;
        }
        if flag == 1 {
            Verdict::Drop
        } else {
            Verdict::Pass
        }
    }
}

/// Both halves of an emulated link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub egress: EgressStage,
    pub ingress: IngressStage,
}

impl LinkState {
    pub fn new(delays: &DelayTrace, loss: &LossTrace) -> Result<Self, EngineError> {
        let ingress = IngressStage::new(loss)?;
        if delays.len() != loss.len() {
            return Err(EngineError::LengthMismatch {
                delays: delays.len(),
                loss: loss.len(),
            });
        }
        Ok(Self {
            egress: EgressStage::new(delays),
            ingress,
        })
    }

    pub fn trace_len(&self) -> usize {
        self.egress.trace_len()
    }

    pub fn egress_schedule<P>(
        &mut self,
        queue: &mut EventQueue<P>,
        now_ns: u64,
        send_index: u64,
        payload: P,
        size: usize,
    ) -> Result<u64, EngineError> {
        self.egress
            .schedule_into(queue, now_ns, send_index, payload, size)
    }

    pub fn ingress_decide(&mut self) -> Verdict {
        self.ingress.decide()
    }

    pub fn into_stages(self) -> (EgressStage, IngressStage) {
        (self.egress, self.ingress)
    }
}

/// Whether a replay may run past the end of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Replay {
    #[default]
    Once,
    /// Indices wrap to 0, as the kernel programs do.
    Cyclic,
}

/// One packet leaving the virtual link, in delivery order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub send_index: usize,
    pub arrival_rank: usize,
    pub injected_ns: u64,
    pub departure_ns: u64,
    pub verdict: Verdict,
}

/// What a receiver would have measured over the emulated link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedTrace {
    pub send_interval_ns: u64,
    /// Indexed by send order; `None` for dropped packets.
    pub delays: Vec<Option<u64>>,
    pub deliveries: Vec<Delivery>,
    pub egress_wraps: u64,
    pub ingress_wraps: u64,
}

impl ObservedTrace {
    pub fn delivered_count(&self) -> usize {
        self.delays.iter().filter(|d| d.is_some()).count()
    }

    pub fn dropped_count(&self) -> usize {
        self.delays.len() - self.delivered_count()
    }

    pub fn to_raw(&self) -> RawTrace {
        let entries = self
            .delays
            .iter()
            .map(|d| d.map_or(LOST, |ns| ns as i64))
            .collect();
        RawTrace::new(entries, self.send_interval_ns).expect("interval checked on entry")
    }
}

/// Replays `n_packets` probes sent every `send_interval_ns` over the
/// emulated link on a virtual clock.
///
/// Probe `i` is injected at `i * send_interval_ns`, stamped by the egress
/// stage, and judged by the ingress stage when it leaves the queue. The
/// observed delay is `departure - injection`. Past the end of the trace,
/// [`Replay::Cyclic`] must be requested explicitly.
pub fn simulate(
    delays: &DelayTrace,
    loss: &LossTrace,
    send_interval_ns: u64,
    n_packets: usize,
    replay: Replay,
) -> Result<ObservedTrace, EngineError> {
    if send_interval_ns == 0 {
        return Err(TraceError::InvalidInterval.into());
    }
    let mut link = LinkState::new(delays, loss)?;
    if replay == Replay::Once && n_packets > link.trace_len() {
        return Err(EngineError::TraceExhausted {
            requested: n_packets,
            len: link.trace_len(),
        });
    }

    let mut queue: EventQueue<()> = EventQueue::with_capacity(n_packets.max(1));
    let mut observed = vec![None; n_packets];
    let mut deliveries = Vec::with_capacity(n_packets);

    let mut deliver = |packet: ScheduledPacket<()>, link: &mut LinkState| {
        let arrival_rank = deliveries.len();
        let verdict = link.ingress_decide();
        let send_index = packet.send_index as usize;
        if verdict == Verdict::Pass {
            observed[send_index] = Some(packet.departure_ns - packet.enqueued_ns);
        }
        deliveries.push(Delivery {
            send_index,
            arrival_rank,
            injected_ns: packet.enqueued_ns,
            departure_ns: packet.departure_ns,
            verdict,
        });
    };

    for i in 0..n_packets {
        let now = (i as u64)
            .checked_mul(send_interval_ns)
            .ok_or(EngineError::ClockOverflow)?;
        // Everything due by now leaves before the next probe is stamped.
        // Later probes depart strictly after `now`, so this yields the
        // global (departure, send_index) order.
        while let Some(packet) = queue.pop_due(now) {
            deliver(packet, &mut link);
        }
        link.egress_schedule(&mut queue, now, i as u64, (), 0)?;
    }
    while let Some(packet) = queue.pop() {
        deliver(packet, &mut link);
    }

    Ok(ObservedTrace {
        send_interval_ns,
        delays: observed,
        deliveries,
        egress_wraps: link.egress.wraps(),
        ingress_wraps: link.ingress.wraps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{arrival_order, reorder_loss, split_trace};

    const MS: u64 = 1_000_000;

    fn arrival_loss(flags: &[u8]) -> LossTrace {
        LossTrace::new(flags.to_vec(), Indexing::ArrivalOrder).unwrap()
    }

    #[test]
    fn egress_stamps_now_plus_delay() {
        let mut stage = EgressStage::new(&DelayTrace::new(vec![50 * MS]).unwrap());
        assert_eq!(stage.stamp(0).unwrap().departure_ns, 50 * MS);
    }

    #[test]
    fn egress_index_wraps_at_trace_len() {
        let mut stage = EgressStage::new(&DelayTrace::new(vec![1, 2, 3]).unwrap());
        let used: Vec<usize> = (0..4)
            .map(|_| stage.stamp(0).unwrap().table_index)
            .collect();
        assert_eq!(used, vec![0, 1, 2, 0]);
        assert_eq!(stage.wraps(), 1);
        assert_eq!(stage.index(), 1);
    }

    #[test]
    fn queue_releases_overtaking_packet_first() {
        let mut link = LinkState::new(
            &DelayTrace::new(vec![30 * MS, 5 * MS]).unwrap(),
            &arrival_loss(&[0, 0]),
        )
        .unwrap();
        let mut q = EventQueue::with_capacity(4);
        link.egress_schedule(&mut q, 0, 0, "first", 0).unwrap();
        link.egress_schedule(&mut q, 10 * MS, 1, "second", 0)
            .unwrap();
        let a = q.pop().unwrap();
        let b = q.pop().unwrap();
        assert_eq!((a.payload, a.departure_ns), ("second", 15 * MS));
        assert_eq!((b.payload, b.departure_ns), ("first", 30 * MS));
    }

    #[test]
    fn full_queue_does_not_consume_index() {
        let mut link = LinkState::new(
            &DelayTrace::new(vec![1, 2]).unwrap(),
            &arrival_loss(&[0, 0]),
        )
        .unwrap();
        let mut q = EventQueue::with_capacity(1);
        link.egress_schedule(&mut q, 0, 0, (), 0).unwrap();
        assert!(matches!(
            link.egress_schedule(&mut q, 0, 1, (), 0),
            Err(EngineError::QueueFull { capacity: 1 })
        ));
        assert_eq!(link.egress.index(), 1);
    }

    #[test]
    fn ingress_drops_flagged_arrivals() {
        let mut stage = IngressStage::new(&arrival_loss(&[1, 0])).unwrap();
        assert_eq!(stage.decide(), Verdict::Drop);
        assert_eq!(stage.decide(), Verdict::Pass);

        let mut stage = IngressStage::new(&arrival_loss(&[0, 0, 0])).unwrap();
        assert!((0..10).all(|_| stage.decide() == Verdict::Pass));
    }

    #[test]
    fn ingress_wraps_modulo_trace_len() {
        let flags = [0u8, 1];
        let mut stage = IngressStage::new(&arrival_loss(&flags)).unwrap();
        for k in 0..9 {
            let expected = if flags[k % flags.len()] == 1 {
                Verdict::Drop
            } else {
                Verdict::Pass
            };
            assert_eq!(stage.decide(), expected, "arrival {k}");
        }
    }

    #[test]
    fn ingress_requires_arrival_order() {
        let send = LossTrace::new(vec![0], Indexing::SendOrder).unwrap();
        assert!(matches!(
            IngressStage::new(&send),
            Err(EngineError::IndexingMismatch { .. })
        ));
    }

    #[test]
    fn simulate_three_packet_round_trip() {
        let raw = RawTrace::new(vec![50 * MS as i64, LOST, 60 * MS as i64], 10 * MS).unwrap();
        let (d, l) = split_trace(&raw).unwrap();
        let perm = arrival_order(&d, 10 * MS).unwrap();
        let la = reorder_loss(&l, &perm).unwrap();
        let obs = simulate(&d, &la, 10 * MS, 3, Replay::Once).unwrap();
        assert_eq!(obs.to_raw(), raw);
    }

    #[test]
    fn simulate_constant_delay() {
        let d = DelayTrace::new(vec![7 * MS; 20]).unwrap();
        let obs = simulate(&d, &arrival_loss(&[0; 20]), 10 * MS, 20, Replay::Once).unwrap();
        assert!(obs.delays.iter().all(|&x| x == Some(7 * MS)));
    }

    #[test]
    fn simulate_checks_inputs() {
        let d = DelayTrace::new(vec![1, 2]).unwrap();
        let send = LossTrace::new(vec![0, 0], Indexing::SendOrder).unwrap();
        assert!(matches!(
            simulate(&d, &send, 10, 2, Replay::Once),
            Err(EngineError::IndexingMismatch { .. })
        ));
        assert!(matches!(
            simulate(&d, &arrival_loss(&[0]), 10, 1, Replay::Once),
            Err(EngineError::LengthMismatch { .. })
        ));
        assert!(matches!(
            simulate(&d, &arrival_loss(&[0, 0]), 10, 3, Replay::Once),
            Err(EngineError::TraceExhausted { .. })
        ));
    }

    #[test]
    fn cyclic_replay_reuses_table() {
        let d = DelayTrace::new(vec![5, 7]).unwrap();
        let obs = simulate(&d, &arrival_loss(&[0, 1]), 100, 5, Replay::Cyclic).unwrap();
        assert_eq!(obs.delays, vec![Some(5), None, Some(5), None, Some(5)]);
        assert_eq!(obs.egress_wraps, 2);
    }
}
