// Runs the user-space relay on loopback: a client sends probes every 10 ms,
// the relay delays and drops them according to a trace, and a sink counts
// what arrives.
//
//   RUST_LOG=debug cargo run --example relay_loopback

use std::error::Error;
use std::net::UdpSocket;
use std::thread;
use std::time::{Duration, Instant};

use satemu::engine::relay::Relay;
use satemu::engine::RelayConfig;
use satemu::trace::{arrival_order, reorder_loss, split_trace, RawTrace, LOST};

const MS: i64 = 1_000_000;
const INTERVAL: Duration = Duration::from_millis(10);

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let _ = env_logger::try_init();
    let raw = RawTrace::new(
        vec![
            30 * MS,
            32 * MS,
            LOST,
            12 * MS,
            14 * MS,
            15 * MS,
            LOST,
            16 * MS,
        ],
        INTERVAL.as_nanos() as u64,
    )?;
    let (delays, loss) = split_trace(&raw)?;
    let arrival = reorder_loss(&loss, &arrival_order(&delays, raw.send_interval_ns())?)?;

    let sink = UdpSocket::bind("127.0.0.1:0")?;
    sink.set_read_timeout(Some(Duration::from_millis(300)))?;
    let mut config = RelayConfig::new("127.0.0.1:0".parse()?, sink.local_addr()?, &delays, arrival);
    config.max_packets = Some(raw.len());
    let relay = Relay::bind(config)?;
    let relay_addr = relay.local_addr()?;
    let session = thread::spawn(move || relay.run());

    let client = UdpSocket::bind("127.0.0.1:0")?;
    let start = Instant::now();
    for seq in 0..raw.len() as u32 {
        let due = start + INTERVAL * seq;
        thread::sleep(due.saturating_duration_since(Instant::now()));
        client.send_to(&seq.to_le_bytes(), relay_addr)?;
    }
    let report = session.join().expect("relay thread")?;

    let mut arrived = Vec::new();
    let mut buf = [0u8; 16];
    while let Ok((4, _)) = sink.recv_from(&mut buf) {
        arrived.push(u32::from_le_bytes(buf[..4].try_into()?));
    }
    println!("sink order {arrived:?}");
    println!("dropped    {:?}", report.dropped_indices());
    for r in &report.records {
        println!(
            "packet {} rank {} delay {} ns error {} ns {:?}",
            r.index,
            r.arrival_rank,
            r.delay_ns,
            r.error_ns(),
            r.verdict
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
