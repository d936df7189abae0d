// Replays a trace through the virtual-clock emulator and checks that what
// comes out matches what went in.
//
//   cargo run --example simulate_replay

use std::error::Error;

use satemu::compare::{compare, DEFAULT_TOLERANCE_NS};
use satemu::engine::{simulate, Replay, Verdict};
use satemu::synth::{synth_trace, SynthParams};
use satemu::trace::{arrival_order, reorder_loss, split_trace};

const MS: u64 = 1_000_000;
const INTERVAL_NS: u64 = 10 * MS;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let raw = synth_trace(&SynthParams {
        length: 600,
        period: 150,
        levels_ns: vec![25 * MS, 60 * MS, 40 * MS],
        jitter_ns: 3 * MS,
        loss_rate: 0.05,
        seed: 11,
        send_interval_ns: INTERVAL_NS,
    })?;
    let (delays, loss) = split_trace(&raw)?;
    let arrival = reorder_loss(&loss, &arrival_order(&delays, INTERVAL_NS)?)?;

    let observed = simulate(&delays, &arrival, INTERVAL_NS, raw.len(), Replay::Once)?;
    let overtaken = observed
        .deliveries
        .iter()
        .filter(|d| d.arrival_rank != d.send_index)
        .count();
    let dropped = observed
        .deliveries
        .iter()
        .filter(|d| d.verdict == Verdict::Drop)
        .count();
    println!(
        "{} packets, {dropped} dropped, {overtaken} out of send order",
        raw.len()
    );

    let report = compare(&raw, &observed.to_raw(), DEFAULT_TOLERANCE_NS, false)?;
    println!("{}", report.summary());
    assert!(report.pass && report.max_abs_error_ns == 0);

    // Running past the end of the tables replays them from the start.
    let cyclic = simulate(
        &delays,
        &arrival,
        INTERVAL_NS,
        3 * raw.len(),
        Replay::Cyclic,
    )?;
    println!(
        "cyclic replay of {} packets: {} egress wraps",
        cyclic.delays.len(),
        cyclic.egress_wraps
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
