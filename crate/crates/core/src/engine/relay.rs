//! Real-time UDP relay that imposes a trace on live datagrams.
//!
//! Every datagram arriving on the listen socket is stamped by the egress
//! stage (`receive time + delay[egress_index]`) and handed to a dispatch
//! thread. The dispatch thread keeps an earliest-departure queue, sleeps
//! until shortly before the head is due, spins the rest of the way, asks the
//! ingress stage for a verdict, and forwards or discards the datagram.
//!
//! The receive thread owns `egress_index`; the dispatch thread owns
//! `ingress_index`. They only share an ordered channel and an in-flight
//! counter used for back-pressure.

use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::{EgressStage, EngineError, EventQueue, IngressStage, ScheduledPacket, Verdict};
use crate::ingest::stats::nearest_rank;
use crate::trace::{DelayTrace, Indexing, LossTrace, RawTrace, LOST};

const MAX_DATAGRAM: usize = 65_535;
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub listen: SocketAddr,
    pub forward: SocketAddr,
    /// Per-packet delays in nanoseconds, consumed in receive order.
    pub delay_table: Vec<u64>,
    /// Loss flags keyed by arrival rank.
    pub loss_table: LossTrace,
    /// Probe spacing of the original measurement; only used in reports.
    pub send_interval_ns: u64,
    /// Stop receiving after this many datagrams.
    pub max_packets: Option<usize>,
    /// Stop once no datagram has arrived for this long, counted from the
    /// first datagram.
    pub idle_timeout: Option<Duration>,
    pub queue_capacity: usize,
    /// The dispatcher busy-waits for the last stretch before a departure.
    pub spin_margin: Duration,
}

impl RelayConfig {
    pub fn new(
        listen: SocketAddr,
        forward: SocketAddr,
        delays: &DelayTrace,
        loss: LossTrace,
    ) -> Self {
        Self {
            listen,
            forward,
            delay_table: delays.delays().to_vec(),
            loss_table: loss,
            send_interval_ns: 10_000_000,
            max_packets: None,
            idle_timeout: Some(Duration::from_secs(2)),
            queue_capacity: 1 << 16,
            spin_margin: Duration::from_micros(200),
        }
    }

    fn check(&self) -> Result<(DelayTrace, IngressStage), EngineError> {
        if self.delay_table.is_empty() {
            return Err(EngineError::Config("delay table is empty".into()));
        }
        let delays = DelayTrace::new(self.delay_table.clone())
            .map_err(|e| EngineError::Config(e.to_string()))?;
        if self.loss_table.indexing() != Indexing::ArrivalOrder {
            return Err(EngineError::IndexingMismatch {
                found: self.loss_table.indexing(),
            });
        }
        if self.loss_table.len() != delays.len() {
            return Err(EngineError::LengthMismatch {
                delays: delays.len(),
                loss: self.loss_table.len(),
            });
        }
        if self.queue_capacity == 0 {
            return Err(EngineError::Config(
                "queue capacity must be positive".into(),
            ));
        }
        if self.send_interval_ns == 0 {
            return Err(EngineError::Config("send interval must be positive".into()));
        }
        let ingress = IngressStage::new(&self.loss_table)?;
        Ok((delays, ingress))
    }
}

/// Everything known about one relayed datagram. Times are nanoseconds since
/// the session started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Receive sequence number.
    pub index: usize,
    /// Delay table entry that was applied.
    pub table_index: usize,
    pub arrival_rank: usize,
    pub size: usize,
    pub receive_ns: u64,
    pub delay_ns: u64,
    pub intended_ns: u64,
    pub actual_ns: u64,
    pub verdict: Verdict,
    pub forwarded: bool,
}

impl PacketRecord {
    pub fn error_ns(&self) -> i64 {
        self.actual_ns as i64 - self.intended_ns as i64
    }

    pub fn dropped(&self) -> bool {
        self.verdict == Verdict::Drop
    }
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    /// Ordered by receive sequence.
    pub records: Vec<PacketRecord>,
    pub trace_len: usize,
    pub send_interval_ns: u64,
    pub egress_wraps: u64,
    pub ingress_wraps: u64,
    /// Datagrams discarded because the queue was full; they consumed no
    /// trace index.
    pub queue_overflows: usize,
    pub forward_failures: usize,
}

impl SessionReport {
    pub fn dropped_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.dropped())
            .map(|r| r.index)
            .collect()
    }

    /// Absolute scheduling errors of forwarded datagrams, ascending.
    fn abs_errors(&self) -> Vec<u64> {
        let mut errors: Vec<u64> = self
            .records
            .iter()
            .filter(|r| r.forwarded)
            .map(|r| r.error_ns().unsigned_abs())
            .collect();
        errors.sort_unstable();
        errors
    }

    pub fn p99_abs_error_ns(&self) -> Option<u64> {
        let errors = self.abs_errors();
        (!errors.is_empty()).then(|| nearest_rank(&errors, 99.0))
    }

    pub fn max_abs_error_ns(&self) -> Option<u64> {
        self.abs_errors().last().copied()
    }

    /// The delay each datagram actually experienced inside the relay, or
    /// lost, in receive order.
    pub fn observed_trace(&self) -> RawTrace {
        let entries = self
            .records
            .iter()
            .map(|r| {
                if r.dropped() {
                    LOST
                } else {
                    (r.actual_ns - r.receive_ns).max(1) as i64
                }
            })
            .collect();
        RawTrace::new(entries, self.send_interval_ns).expect("interval checked by config")
    }

    pub fn write_metrics<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,intended_ns,actual_ns,error_ns,dropped")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.index,
                r.intended_ns,
                r.actual_ns,
                r.error_ns(),
                u8::from(r.dropped())
            )?;
        }
        w.flush()
    }

    pub fn write_metrics_file(&self, path: &Path) -> io::Result<()> {
        self.write_metrics(BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, Copy)]
struct Clock {
    epoch: Instant,
}

impl Clock {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }
}

struct Received {
    size: usize,
    receive_ns: u64,
    table_index: usize,
    delay_ns: u64,
}

struct Dispatched {
    index: usize,
    arrival_rank: usize,
    actual_ns: u64,
    verdict: Verdict,
    forwarded: bool,
}

/// A bound relay, ready to run.
pub struct Relay {
    config: RelayConfig,
    socket: UdpSocket,
    egress: EgressStage,
    ingress: IngressStage,
    shutdown: Arc<AtomicBool>,
}

impl Relay {
    /// Validates the configuration before touching the network.
    pub fn bind(config: RelayConfig) -> Result<Self, EngineError> {
        let (delays, ingress) = config.check()?;
        let socket = UdpSocket::bind(config.listen).map_err(|source| EngineError::Bind {
            addr: config.listen,
            source,
        })?;
        socket.set_read_timeout(Some(POLL))?;
        Ok(Self {
            egress: EgressStage::new(&delays),
            ingress,
            socket,
            config,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Setting the flag ends the session; queued datagrams still go out.
    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }

    pub fn run(self) -> Result<SessionReport, EngineError> {
        let Relay {
            config,
            socket,
            mut egress,
            ingress,
            shutdown,
        } = self;
        let clock = Clock {
            epoch: Instant::now(),
        };
        let out = socket.try_clone()?;
        let in_flight = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = mpsc::channel::<ScheduledPacket<Vec<u8>>>();

        let dispatcher = Dispatcher {
            socket: out,
            forward: config.forward,
            ingress,
            queue: EventQueue::with_capacity(config.queue_capacity),
            rx,
            clock,
            spin_margin: config.spin_margin,
            in_flight: Arc::clone(&in_flight),
            records: Vec::new(),
            forward_failures: 0,
        };

        let (received, overflows, dispatched) = std::thread::scope(|s| {
            let handle = s.spawn(move || dispatcher.run());

            let mut received: Vec<Received> = Vec::new();
            let mut overflows = 0usize;
            let mut last_rx: Option<Instant> = None;
            let mut buf = vec![0u8; MAX_DATAGRAM];
            let result = loop {
                if shutdown.load(Ordering::Relaxed) {
                    break Ok(());
                }
                if config.max_packets.is_some_and(|m| received.len() >= m) {
                    break Ok(());
                }
                if let (Some(idle), Some(last)) = (config.idle_timeout, last_rx) {
                    if last.elapsed() >= idle {
                        break Ok(());
                    }
                }
                let (len, _from) = match socket.recv_from(&mut buf) {
                    Ok(v) => v,
                    Err(e)
                        if matches!(
                            e.kind(),
                            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                        ) =>
                    {
                        continue
                    }
                    Err(e) => break Err(EngineError::Io(e)),
                };
                let receive_ns = clock.now_ns();
                last_rx = Some(Instant::now());
                if in_flight.load(Ordering::Acquire) >= config.queue_capacity {
                    overflows += 1;
                    warn!("queue full, discarding datagram");
                    continue;
                }
                let stamp = match egress.stamp(receive_ns) {
                    Ok(stamp) => stamp,
                    Err(e) => break Err(e),
                };
                in_flight.fetch_add(1, Ordering::AcqRel);
                let packet = ScheduledPacket {
                    send_index: received.len() as u64,
                    enqueued_ns: receive_ns,
                    departure_ns: stamp.departure_ns,
                    payload: buf[..len].to_vec(),
                    size: len,
                };
                received.push(Received {
                    size: len,
                    receive_ns,
                    table_index: stamp.table_index,
                    delay_ns: stamp.delay_ns,
                });
                if tx.send(packet).is_err() {
                    break Err(EngineError::Config("dispatcher stopped early".into()));
                }
            };
            drop(tx);
            let dispatched = handle.join().expect("dispatch thread panicked");
            (result.map(|_| received), overflows, dispatched)
        });
        let received = received?;
        let (mut dispatched, ingress_wraps, forward_failures) = dispatched;

        dispatched.sort_by_key(|d| d.index);
        let records = received
            .into_iter()
            .zip(dispatched)
            .enumerate()
            .map(|(index, (r, d))| {
                debug_assert_eq!(index, d.index);
                PacketRecord {
                    index,
                    table_index: r.table_index,
                    arrival_rank: d.arrival_rank,
                    size: r.size,
                    receive_ns: r.receive_ns,
                    delay_ns: r.delay_ns,
                    intended_ns: r.receive_ns + r.delay_ns,
                    actual_ns: d.actual_ns,
                    verdict: d.verdict,
                    forwarded: d.forwarded,
                }
            })
            .collect();

        Ok(SessionReport {
            records,
            trace_len: config.delay_table.len(),
            send_interval_ns: config.send_interval_ns,
            egress_wraps: egress.wraps(),
            ingress_wraps,
            queue_overflows: overflows,
            forward_failures,
        })
    }
}

/// Binds and runs a relay session to completion.
pub fn relay_run(config: RelayConfig) -> Result<SessionReport, EngineError> {
    Relay::bind(config)?.run()
}

struct Dispatcher {
    socket: UdpSocket,
    forward: SocketAddr,
    ingress: IngressStage,
    queue: EventQueue<Vec<u8>>,
    rx: Receiver<ScheduledPacket<Vec<u8>>>,
    clock: Clock,
    spin_margin: Duration,
    in_flight: Arc<AtomicUsize>,
    records: Vec<Dispatched>,
    forward_failures: usize,
}

impl Dispatcher {
    fn enqueue(&mut self, packet: ScheduledPacket<Vec<u8>>) {
        // the receive side bounds in-flight packets by the same capacity
        if self.queue.push(packet).is_err() {
            unreachable!("in-flight counter exceeded queue capacity");
        }
    }

    fn drain_channel(&mut self) -> bool {
        loop {
            match self.rx.try_recv() {
                Ok(p) => self.enqueue(p),
                Err(TryRecvError::Empty) => return true,
                Err(TryRecvError::Disconnected) => return false,
            }
        }
    }

    fn release(&mut self, packet: ScheduledPacket<Vec<u8>>) {
        let arrival_rank = self.records.len();
        let verdict = self.ingress.decide();
        let forwarded = match verdict {
            Verdict::Drop => false,
            Verdict::Pass => match self.socket.send_to(&packet.payload, self.forward) {
                Ok(_) => true,
                Err(e) => {
                    self.forward_failures += 1;
                    warn!("forward of datagram {} failed: {e}", packet.send_index);
                    false
                }
            },
        };
        let actual_ns = self.clock.now_ns();
        self.in_flight.fetch_sub(1, Ordering::AcqRel);
        self.records.push(Dispatched {
            index: packet.send_index as usize,
            arrival_rank,
            actual_ns,
            verdict,
            forwarded,
        });
    }

    fn run(mut self) -> (Vec<Dispatched>, u64, usize) {
        let margin = self.spin_margin.as_nanos() as u64;
        let mut open = true;
        loop {
            let Some(due) = self.queue.next_departure() else {
                if !open {
                    break;
                }
                match self.rx.recv() {
                    Ok(p) => self.enqueue(p),
                    Err(_) => open = false,
                }
                continue;
            };
            let now = self.clock.now_ns();
            if now >= due {
                let packet = self.queue.pop().expect("head exists");
                self.release(packet);
                continue;
            }
            let wait = due - now;
            if wait > margin {
                let sleep = Duration::from_nanos(wait - margin);
                if open {
                    match self.rx.recv_timeout(sleep) {
                        Ok(p) => self.enqueue(p),
                        Err(RecvTimeoutError::Timeout) => {}
                        Err(RecvTimeoutError::Disconnected) => open = false,
                    }
                } else {
                    std::thread::sleep(sleep);
                }
            } else {
                while self.clock.now_ns() < due {
                    if open {
                        open = self.drain_channel();
                    }
                    std::hint::spin_loop();
                }
            }
        }
        debug!("dispatcher released {} datagrams", self.records.len());
        (self.records, self.ingress.wraps(), self.forward_failures)
    }
}
