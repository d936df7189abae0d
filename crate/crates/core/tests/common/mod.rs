#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satemu::trace::{RawTrace, LOST};

pub const MS: u64 = 1_000_000;
pub const INTERVAL_NS: u64 = 10 * MS;

/// Random valid trace: length 1..=max_len, delays 1..=500 ms, loss rate
/// 0..=30 %, with forced leading and consecutive loss runs on some draws.
pub fn random_trace(rng: &mut ChaCha8Rng, max_len: usize) -> RawTrace {
    let len = rng.gen_range(1..=max_len);
    let loss_rate = rng.gen_range(0.0..=0.3);
    let mut entries: Vec<i64> = (0..len)
        .map(|_| {
            if rng.gen_bool(loss_rate) {
                LOST
            } else {
                rng.gen_range(MS..=500 * MS) as i64
            }
        })
        .collect();
    if len > 1 && rng.gen_bool(0.3) {
        let lead = rng.gen_range(1..=len.min(5));
        entries[..lead].fill(LOST);
    }
    if len > 4 && rng.gen_bool(0.3) {
        let start = rng.gen_range(0..len - 3);
        let run = rng.gen_range(2..=(len - start).min(6));
        entries[start..start + run].fill(LOST);
    }
    if entries.iter().all(|&e| e == LOST) {
        let i = rng.gen_range(0..len);
        entries[i] = rng.gen_range(MS..=500 * MS) as i64;
    }
    RawTrace::new(entries, INTERVAL_NS).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force replay: sort every packet by (send time + delay, index),
/// walk the arrival-ordered loss flags, and read off what the receiver
/// sees. Shares no code with the engine.
pub fn brute_force_replay(delays: &[u64], arrival_flags: &[u8], interval: u64) -> Vec<i64> {
    let mut arrivals: Vec<(u64, usize)> = delays
        .iter()
        .enumerate()
        .map(|(i, &d)| (i as u64 * interval + d, i))
        .collect();
    arrivals.sort();
    let mut out = vec![0i64; delays.len()];
    for (rank, &(_, i)) in arrivals.iter().enumerate() {
        out[i] = if arrival_flags[rank] == 1 {
            LOST
        } else {
            delays[i] as i64
        };
    }
    out
}
