mod common;

use std::collections::BTreeSet;
use std::net::UdpSocket;
use std::thread;
use std::time::{Duration, Instant};

use common::MS;
use satemu::engine::relay::Relay;
use satemu::engine::{IngressStage, RelayConfig, Verdict};
use satemu::trace::{DelayTrace, Indexing, LossTrace};

/// Sends `n` sequence-numbered probes through a relay and returns the report
/// together with the sequence numbers that reached the sink.
fn run_probes(
    delays: Vec<u64>,
    arrival_flags: Vec<u8>,
    n: usize,
    spacing: Duration,
) -> (satemu::engine::SessionReport, BTreeSet<u64>) {
    let sink = UdpSocket::bind("127.0.0.1:0").unwrap();
    sink.set_read_timeout(Some(Duration::from_millis(300)))
        .unwrap();
    let mut config = RelayConfig::new(
        "127.0.0.1:0".parse().unwrap(),
        sink.local_addr().unwrap(),
        &DelayTrace::new(delays).unwrap(),
        LossTrace::new(arrival_flags, Indexing::ArrivalOrder).unwrap(),
    );
    config.max_packets = Some(n);
    config.idle_timeout = Some(Duration::from_secs(2));
    let relay = Relay::bind(config).unwrap();
    let relay_addr = relay.local_addr().unwrap();
    let handle = thread::spawn(move || relay.run());

    let client = UdpSocket::bind("127.0.0.1:0").unwrap();
    let start = Instant::now();
    for seq in 0..n as u64 {
        let due = start + spacing * seq as u32;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        client.send_to(&seq.to_le_bytes(), relay_addr).unwrap();
    }
    let report = handle.join().unwrap().unwrap();

    let mut got = BTreeSet::new();
    let mut buf = [0u8; 64];
    while let Ok((len, _)) = sink.recv_from(&mut buf) {
        assert_eq!(len, 8);
        got.insert(u64::from_le_bytes(buf[..8].try_into().unwrap()));
    }
    (report, got)
}

#[test]
fn constant_delay_forwards_everything() {
    let (report, got) = run_probes(vec![40 * MS], vec![0], 100, Duration::from_millis(2));
    assert_eq!(report.records.len(), 100);
    assert_eq!(got.len(), 100);
    assert_eq!(report.egress_wraps, 100);
    for r in &report.records {
        assert_eq!(r.delay_ns, 40 * MS);
        assert_eq!(r.intended_ns - r.receive_ns, 40 * MS);
        assert!(r.actual_ns >= r.intended_ns, "dispatched early: {r:?}");
        assert!(r.forwarded);
        assert_eq!(r.size, 8);
    }
    let p99 = report.p99_abs_error_ns().unwrap();
    eprintln!("constant-delay relay p99 |error| = {p99} ns");
}

#[test]
fn drops_exactly_the_flagged_arrival_ranks() {
    let mut flags = vec![0u8; 10];
    flags[3] = 1;
    flags[7] = 1;

    let mut oracle =
        IngressStage::new(&LossTrace::new(flags.clone(), Indexing::ArrivalOrder).unwrap()).unwrap();
    let expected: Vec<usize> = (0..10)
        .filter(|_| oracle.decide() == Verdict::Drop)
        .collect();
    assert_eq!(expected, vec![3, 7]);

    let (report, got) = run_probes(vec![5 * MS; 10], flags, 10, Duration::from_millis(3));
    assert_eq!(report.dropped_indices(), expected);
    let missing: Vec<u64> = (0..10).filter(|s| !got.contains(s)).collect();
    assert_eq!(missing, vec![3, 7]);
}

#[test]
fn overtaking_packets_are_released_in_departure_order() {
    // second probe's departure (10 ms + 5 ms) is before the first's (30 ms)
    let (report, got) = run_probes(
        vec![30 * MS, 5 * MS],
        vec![0, 0],
        2,
        Duration::from_millis(10),
    );
    assert_eq!(got.len(), 2);
    assert_eq!(report.records[0].arrival_rank, 1);
    assert_eq!(report.records[1].arrival_rank, 0);
}

#[test]
fn metrics_file_layout() {
    let (report, _) = run_probes(vec![MS, 2 * MS], vec![0, 1], 2, Duration::from_millis(5));
    let mut buf = Vec::new();
    report.write_metrics(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,intended_ns,actual_ns,error_ns,dropped");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].ends_with(",1"));
    let fields: Vec<i64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields[3], fields[2] - fields[1]);
    assert_eq!(report.observed_trace().entries()[1], -1);
}
