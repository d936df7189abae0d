// Generates a trace whose minimum delay steps at regular handovers and
// recovers the handover period from the windowed minimum.
//
//   cargo run --example handover_stats

use std::error::Error;

use satemu::ingest::{trace_stats_with, StatsConfig};
use satemu::synth::{synth_trace, SynthParams};

const MS: u64 = 1_000_000;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let params = SynthParams {
        length: 10_000,
        period: 1500,
        levels_ns: vec![30 * MS, 45 * MS, 38 * MS],
        jitter_ns: 1_200_000,
        loss_rate: 0.01,
        seed: 3,
        send_interval_ns: 10 * MS,
    };
    let raw = synth_trace(&params)?;

    let stats = trace_stats_with(&raw, &StatsConfig::new(100))?;
    let delay = stats.delay.as_ref().ok_or("no delivered packets")?;
    println!(
        "{} samples, loss rate {:.3}, delay min {} / p50 {} / p99 {} / max {} ns",
        stats.count, stats.loss_rate, delay.min_ns, delay.p50_ns, delay.p99_ns, delay.max_ns
    );
    println!("floor changes at samples {:?}", stats.change_points);
    match stats.estimated_period {
        Some(p) => println!(
            "estimated period: {p} samples (generated with {})",
            params.period
        ),
        None => println!("no period found"),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
