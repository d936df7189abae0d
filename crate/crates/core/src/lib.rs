//! Trace-driven emulation of a network path's per-packet delay and loss.
//!
//! A measured trace (one delay or loss marker per probe packet) is split
//! into a delay table and a loss table. The delay table is applied where
//! packets leave the sender, by giving every packet an earliest departure
//! time; the loss table is applied where packets reach the receiver, keyed by
//! arrival rank. This crate provides:
//!
//! * [`trace`]: the split/reorder/reconstruct transforms,
//! * [`ingest`]: irtt import, canonical files, statistics,
//! * [`engine`]: a deterministic virtual-clock replay and a real-time UDP relay,
//! * [`deploy`]: bpftool map payloads and tc/ip attach scripts for the
//!   in-kernel programs,
//! * [`compare`] and [`synth`] for verification,
//! * [`cli`], backing the `satemu` binary.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod compare;
pub mod deploy;
pub mod engine;
pub mod ingest;
pub mod synth;
pub mod trace;

pub use compare::{compare, ComparisonReport};
pub use engine::{simulate, ObservedTrace, Replay};
pub use synth::{synth_trace, SynthParams};
pub use trace::{
    arrival_order, reconstruct, reorder_loss, split_trace, validate, ArrivalPermutation,
    DelayTrace, Indexing, LossTrace, RawTrace, LOST,
};
