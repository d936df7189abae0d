//! Seeded synthetic traces with a periodically stepping delay floor, a
//! stand-in for LEO measurements where each satellite handover moves the
//! minimum path delay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::trace::{RawTrace, LOST};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub length: usize,
    /// Samples per floor segment.
    pub period: usize,
    /// Floor of each segment, cycled in order.
    pub levels_ns: Vec<u64>,
    /// Each delay is the floor plus a uniform draw from `0..=jitter_ns`.
    pub jitter_ns: u64,
    /// Probability that a packet is lost, in `[0, 1)`.
    pub loss_rate: f64,
    pub seed: u64,
    pub send_interval_ns: u64,
}

impl SynthParams {
    fn check(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_owned()));
        if self.length == 0 {
            return bad("length must be positive");
        }
        if self.period == 0 {
            return bad("period must be positive");
        }
        if self.levels_ns.is_empty() || self.levels_ns.contains(&0) {
            return bad("need at least one positive level");
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return bad("loss rate must be in [0, 1)");
        }
        if self.send_interval_ns == 0 {
            return bad("send interval must be positive");
        }
        let max_level = *self.levels_ns.iter().max().unwrap();
        if max_level
            .checked_add(self.jitter_ns)
            .is_none_or(|m| m > i64::MAX as u64)
        {
            return bad("level plus jitter overflows");
        }
        Ok(())
    }

    pub fn floor_at(&self, index: usize) -> u64 {
        self.levels_ns[(index / self.period) % self.levels_ns.len()]
    }
}

/// Generates a trace; the same parameters always give the same trace.
///
/// The first delivered packet of every segment sits exactly on the floor,
/// so each segment's minimum equals its configured level.
pub fn synth_trace(params: &SynthParams) -> Result<RawTrace, SynthError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut entries = Vec::with_capacity(params.length);
    let mut anchored_segment = None;
    for i in 0..params.length {
        let lost = params.loss_rate > 0.0 && rng.gen_bool(params.loss_rate);
        let jitter = rng.gen_range(0..=params.jitter_ns);
        if lost {
            entries.push(LOST);
            continue;
        }
        let segment = i / params.period;
        let floor = params.floor_at(i);
        let delay = if anchored_segment != Some(segment) {
            anchored_segment = Some(segment);
            floor
        } else {
            floor + jitter
        };
        entries.push(delay as i64);
    }
    Ok(RawTrace::new(entries, params.send_interval_ns).expect("interval checked"))
}
