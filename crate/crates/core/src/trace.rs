//! Per-packet delay/loss traces and the transforms that turn one raw trace
//! into the two tables the emulator replays.
//!
//! A [`RawTrace`] holds one entry per probe packet in send order: a positive
//! one-way delay in nanoseconds, or [`LOST`]. [`split_trace`] separates it
//! into a [`DelayTrace`] (every packet gets a delay, lost ones inherit their
//! predecessor's) and a send-ordered [`LossTrace`]. Because the receiver
//! counts packets by arrival, the loss flags must then be permuted into
//! arrival order ([`arrival_order`] + [`reorder_loss`]) before they are
//! loaded anywhere.

use serde::Serialize;
use thiserror::Error;

/// Sentinel entry marking a lost packet.
pub const LOST: i64 = -1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace has no delivered packet to take a delay from")]
    AllLost,
    #[error("invalid entry {value} at index {index}: expected a positive delay or -1")]
    InvalidEntry { index: usize, value: i64 },
    #[error("send interval must be positive")]
    InvalidInterval,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("loss trace is indexed by {found}, expected {expected}")]
    WrongIndexing { expected: Indexing, found: Indexing },
    #[error("invalid loss flag {value} at index {index}")]
    InvalidFlag { index: usize, value: u8 },
    #[error("zero delay at index {index}")]
    ZeroDelay { index: usize },
    #[error("not a permutation of 0..{len}")]
    NotAPermutation { len: usize },
}

/// A measured trace in send order, with the probe spacing it was taken at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTrace {
    entries: Vec<i64>,
    send_interval_ns: u64,
}

impl RawTrace {
    /// Entries are not checked here so that [`validate`] can report on
    /// malformed input; transforms reject invalid entries.
    pub fn new(entries: Vec<i64>, send_interval_ns: u64) -> Result<Self, TraceError> {
        if send_interval_ns == 0 {
            return Err(TraceError::InvalidInterval);
        }
        Ok(Self {
            entries,
            send_interval_ns,
        })
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn send_interval_ns(&self) -> u64 {
        self.send_interval_ns
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_lost(&self, index: usize) -> bool {
        self.entries.get(index) == Some(&LOST)
    }

    pub fn loss_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e == LOST).count()
    }

    /// Positive delays only, in send order.
    pub fn delivered(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().filter(|&&e| e > 0).map(|&e| e as u64)
    }

    /// Returns the first entry that is neither positive nor [`LOST`].
    pub fn first_invalid(&self) -> Option<(usize, i64)> {
        self.entries
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, e)| e <= 0 && e != LOST)
    }

    pub fn check(&self) -> Result<(), TraceError> {
        if self.entries.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        match self.first_invalid() {
            Some((index, value)) => Err(TraceError::InvalidEntry { index, value }),
            None => Ok(()),
        }
    }

    pub fn into_entries(self) -> Vec<i64> {
        self.entries
    }
}

/// Per-packet delays in send order; every value is strictly positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayTrace {
    delays: Vec<u64>,
}

impl DelayTrace {
    pub fn new(delays: Vec<u64>) -> Result<Self, TraceError> {
        if delays.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        if let Some(index) = delays.iter().position(|&d| d == 0) {
            return Err(TraceError::ZeroDelay { index });
        }
        Ok(Self { delays })
    }

    pub fn delays(&self) -> &[u64] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<u64> {
        self.delays.get(index).copied()
    }
}

/// What a loss table's position refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Indexing {
    /// Position `i` is the `i`-th packet sent.
    SendOrder,
    /// Position `k` is the `k`-th packet to reach the receiver.
    ArrivalOrder,
}

impl std::fmt::Display for Indexing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Indexing::SendOrder => f.write_str("send order"),
            Indexing::ArrivalOrder => f.write_str("arrival order"),
        }
    }
}

/// Binary loss indicators (1 = lost) tagged with their indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossTrace {
    flags: Vec<u8>,
    indexing: Indexing,
}

impl LossTrace {
    pub fn new(flags: Vec<u8>, indexing: Indexing) -> Result<Self, TraceError> {
        if let Some(index) = flags.iter().position(|&f| f > 1) {
            return Err(TraceError::InvalidFlag {
                index,
                value: flags[index],
            });
        }
        Ok(Self { flags, indexing })
    }

    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    pub fn indexing(&self) -> Indexing {
        self.indexing
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn loss_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f == 1).count()
    }

    /// Positions whose flag is set.
    pub fn lost_positions(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn expect_indexing(&self, expected: Indexing) -> Result<(), TraceError> {
        if self.indexing == expected {
            Ok(())
        } else {
            Err(TraceError::WrongIndexing {
                expected,
                found: self.indexing,
            })
        }
    }
}

/// `order[k]` is the send index of the `k`-th packet to arrive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalPermutation {
    order: Vec<usize>,
}

impl ArrivalPermutation {
    pub fn from_order(order: Vec<usize>) -> Result<Self, TraceError> {
        let len = order.len();
        let mut seen = vec![false; len];
        for &i in &order {
            if i >= len || std::mem::replace(&mut seen[i], true) {
                return Err(TraceError::NotAPermutation { len });
            }
        }
        Ok(Self { order })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &i)| k == i)
    }

    /// `rank[i]` is the arrival rank of send index `i`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (k, &i) in self.order.iter().enumerate() {
            ranks[i] = k;
        }
        ranks
    }
}

/// Splits a raw trace into a delay table and a send-ordered loss table.
///
/// A lost packet is given the delay of the nearest delivered packet before
/// it, so it would have arrived right behind its predecessor and never
/// overtakes or gets overtaken by it. Losses at the very start of the trace
/// have no predecessor and take the first delivered delay instead.
pub fn split_trace(raw: &RawTrace) -> Result<(DelayTrace, LossTrace), TraceError> {
    raw.check()?;
    let first = raw.delivered().next().ok_or(TraceError::AllLost)?;

    let mut carry = first;
    let mut delays = Vec::with_capacity(raw.len());
    let mut flags = Vec::with_capacity(raw.len());
    for &entry in raw.entries() {
        if entry == LOST {
            flags.push(1);
        } else {
            carry = entry as u64;
            flags.push(0);
        }
        delays.push(carry);
    }
    Ok((
        DelayTrace { delays },
        LossTrace {
            flags,
            indexing: Indexing::SendOrder,
        },
    ))
}

/// Arrival time of send index `i` relative to the first send.
pub fn arrival_time(index: usize, send_interval_ns: u64, delay_ns: u64) -> u128 {
    index as u128 * send_interval_ns as u128 + delay_ns as u128
}

/// Orders send indices by when they reach the receiver: packet `i` leaves at
/// `i * send_interval` and arrives `delays[i]` later. Equal arrival times
/// keep send order.
pub fn arrival_order(
    delays: &DelayTrace,
    send_interval_ns: u64,
) -> Result<ArrivalPermutation, TraceError> {
    if delays.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    if send_interval_ns == 0 {
        return Err(TraceError::InvalidInterval);
    }
    let mut keyed: Vec<(u128, usize)> = delays
        .delays()
        .iter()
        .enumerate()
        .map(|(i, &d)| (arrival_time(i, send_interval_ns, d), i))
        .collect();
    // keys are unique, so an unstable sort is deterministic
    keyed.sort_unstable();
    Ok(ArrivalPermutation {
        order: keyed.into_iter().map(|(_, i)| i).collect(),
    })
}

/// Re-keys send-ordered loss flags by arrival rank.
pub fn reorder_loss(loss: &LossTrace, perm: &ArrivalPermutation) -> Result<LossTrace, TraceError> {
    loss.expect_indexing(Indexing::SendOrder)?;
    if loss.len() != perm.len() {
        return Err(TraceError::LengthMismatch {
            left: loss.len(),
            right: perm.len(),
        });
    }
    Ok(LossTrace {
        flags: perm.order().iter().map(|&i| loss.flags[i]).collect(),
        indexing: Indexing::ArrivalOrder,
    })
}

/// Inverse of [`reorder_loss`].
pub fn restore_send_order(
    loss: &LossTrace,
    perm: &ArrivalPermutation,
) -> Result<LossTrace, TraceError> {
    loss.expect_indexing(Indexing::ArrivalOrder)?;
    if loss.len() != perm.len() {
        return Err(TraceError::LengthMismatch {
            left: loss.len(),
            right: perm.len(),
        });
    }
    let mut flags = vec![0; loss.len()];
    for (k, &i) in perm.order().iter().enumerate() {
        flags[i] = loss.flags[k];
    }
    Ok(LossTrace {
        flags,
        indexing: Indexing::SendOrder,
    })
}

/// Rebuilds a raw trace from its split halves.
pub fn reconstruct(
    delays: &DelayTrace,
    loss: &LossTrace,
    send_interval_ns: u64,
) -> Result<RawTrace, TraceError> {
    loss.expect_indexing(Indexing::SendOrder)?;
    if delays.len() != loss.len() {
        return Err(TraceError::LengthMismatch {
            left: delays.len(),
            right: loss.len(),
        });
    }
    let entries = delays
        .delays()
        .iter()
        .zip(loss.flags())
        .map(|(&d, &f)| if f == 1 { LOST } else { d as i64 })
        .collect();
    RawTrace::new(entries, send_interval_ns)
}

/// Findings from [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceDiagnostics {
    pub entries: usize,
    pub losses: usize,
    pub invalid: usize,
    pub invalid_indices: Vec<usize>,
    pub max_delay_ns: Option<u64>,
    /// Whether every delay fits a 32-bit kernel map value.
    pub fits_u32: bool,
}

impl TraceDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.entries > 0 && self.invalid == 0 && self.losses < self.entries && self.fits_u32
    }
}

pub fn validate(raw: &RawTrace) -> TraceDiagnostics {
    let invalid_indices: Vec<usize> = raw
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e <= 0 && e != LOST)
        .map(|(i, _)| i)
        .collect();
    let max_delay_ns = raw.delivered().max();
    TraceDiagnostics {
        entries: raw.len(),
        losses: raw.loss_count(),
        invalid: invalid_indices.len(),
        invalid_indices,
        max_delay_ns,
        fits_u32: max_delay_ns.is_none_or(|m| m <= u32::MAX as u64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: i64 = 1_000_000;
    const MS_U: u64 = 1_000_000;

    fn raw(entries: &[i64]) -> RawTrace {
        RawTrace::new(entries.to_vec(), 10 * MS_U).unwrap()
    }

    // Linear scan holding the last delivered value; leading losses take the
    // first delivered one.
    fn carry_forward_oracle(entries: &[i64]) -> Vec<u64> {
        let first = entries.iter().copied().find(|&e| e > 0).unwrap() as u64;
        let mut held = first;
        entries
            .iter()
            .map(|&e| {
                if e > 0 {
                    held = e as u64;
                }
                held
            })
            .collect()
    }

    #[test]
    fn split_single_loss() {
        let (d, l) = split_trace(&raw(&[50 * MS, LOST, 60 * MS])).unwrap();
        assert_eq!(d.delays(), &[50 * MS_U, 50 * MS_U, 60 * MS_U]);
        assert_eq!(l.flags(), &[0, 1, 0]);
        assert_eq!(l.indexing(), Indexing::SendOrder);
    }

    #[test]
    fn split_consecutive_losses_carry_forward() {
        let input = [40 * MS, LOST, LOST, 55 * MS];
        let expected = carry_forward_oracle(&input);
        assert_eq!(expected, vec![40 * MS_U, 40 * MS_U, 40 * MS_U, 55 * MS_U]);
        let (d, l) = split_trace(&raw(&input)).unwrap();
        assert_eq!(d.delays(), expected.as_slice());
        assert_eq!(l.flags(), &[0, 1, 1, 0]);
    }

    #[test]
    fn split_leading_loss_carries_back() {
        let input = [LOST, 30 * MS];
        let expected = carry_forward_oracle(&input);
        assert_eq!(expected, vec![30 * MS_U, 30 * MS_U]);
        let (d, l) = split_trace(&raw(&input)).unwrap();
        assert_eq!(d.delays(), expected.as_slice());
        assert_eq!(l.flags(), &[1, 0]);
    }

    #[test]
    fn split_all_delivered_is_identity() {
        let input = [12 * MS, 7 * MS, 9 * MS];
        let (d, l) = split_trace(&raw(&input)).unwrap();
        assert_eq!(d.delays(), &[12 * MS_U, 7 * MS_U, 9 * MS_U]);
        assert!(l.flags().iter().all(|&f| f == 0));
    }

    #[test]
    fn split_errors() {
        assert_eq!(split_trace(&raw(&[])), Err(TraceError::EmptyTrace));
        assert_eq!(split_trace(&raw(&[LOST, LOST])), Err(TraceError::AllLost));
        assert_eq!(
            split_trace(&raw(&[5, 0])),
            Err(TraceError::InvalidEntry { index: 1, value: 0 })
        );
        assert_eq!(
            split_trace(&raw(&[-2])),
            Err(TraceError::InvalidEntry {
                index: 0,
                value: -2
            })
        );
    }

    #[test]
    fn zero_interval_rejected() {
        assert_eq!(RawTrace::new(vec![1], 0), Err(TraceError::InvalidInterval));
    }

    // Stable sort of computed arrival times, written independently of
    // `arrival_order`.
    fn stable_sort_oracle(delays: &[u64], interval: u64) -> Vec<usize> {
        let arrivals: Vec<u64> = delays
            .iter()
            .enumerate()
            .map(|(i, d)| i as u64 * interval + d)
            .collect();
        let mut idx: Vec<usize> = (0..delays.len()).collect();
        idx.sort_by_key(|&i| arrivals[i]);
        idx
    }

    #[test]
    fn arrival_order_reorders_overtaken_packet() {
        let delays = [30 * MS_U, 5 * MS_U, 5 * MS_U];
        assert_eq!(stable_sort_oracle(&delays, 10 * MS_U), vec![1, 2, 0]);
        let perm = arrival_order(&DelayTrace::new(delays.to_vec()).unwrap(), 10 * MS_U).unwrap();
        assert_eq!(perm.order(), &[1, 2, 0]);
    }

    #[test]
    fn arrival_order_constant_delay_is_identity() {
        let perm =
            arrival_order(&DelayTrace::new(vec![25 * MS_U; 50]).unwrap(), 10 * MS_U).unwrap();
        assert!(perm.is_identity());
    }

    #[test]
    fn arrival_order_tie_goes_to_lower_send_index() {
        let delays = [20 * MS_U, 10 * MS_U];
        assert_eq!(stable_sort_oracle(&delays, 10 * MS_U), vec![0, 1]);
        let perm = arrival_order(&DelayTrace::new(delays.to_vec()).unwrap(), 10 * MS_U).unwrap();
        assert_eq!(perm.order(), &[0, 1]);
    }

    #[test]
    fn reorder_gathers_by_permutation() {
        let loss = LossTrace::new(vec![0, 1, 0], Indexing::SendOrder).unwrap();
        let perm = ArrivalPermutation::from_order(vec![1, 2, 0]).unwrap();
        let oracle: Vec<u8> = perm.order().iter().map(|&i| loss.flags()[i]).collect();
        assert_eq!(oracle, vec![1, 0, 0]);
        let out = reorder_loss(&loss, &perm).unwrap();
        assert_eq!(out.flags(), oracle.as_slice());
        assert_eq!(out.indexing(), Indexing::ArrivalOrder);
        assert_eq!(restore_send_order(&out, &perm).unwrap(), loss);
    }

    #[test]
    fn reorder_identity_and_all_zero() {
        let loss = LossTrace::new(vec![1, 0, 1, 1], Indexing::SendOrder).unwrap();
        let out = reorder_loss(&loss, &ArrivalPermutation::identity(4)).unwrap();
        assert_eq!(out.flags(), loss.flags());

        let zeros = LossTrace::new(vec![0; 3], Indexing::SendOrder).unwrap();
        let perm = ArrivalPermutation::from_order(vec![2, 0, 1]).unwrap();
        assert_eq!(reorder_loss(&zeros, &perm).unwrap().flags(), &[0, 0, 0]);
    }

    #[test]
    fn reorder_errors() {
        let loss = LossTrace::new(vec![0, 1], Indexing::SendOrder).unwrap();
        assert!(matches!(
            reorder_loss(&loss, &ArrivalPermutation::identity(3)),
            Err(TraceError::LengthMismatch { .. })
        ));
        let arrived = LossTrace::new(vec![0, 1], Indexing::ArrivalOrder).unwrap();
        assert!(matches!(
            reorder_loss(&arrived, &ArrivalPermutation::identity(2)),
            Err(TraceError::WrongIndexing { .. })
        ));
    }

    #[test]
    fn permutation_validation() {
        assert!(ArrivalPermutation::from_order(vec![0, 0]).is_err());
        assert!(ArrivalPermutation::from_order(vec![2, 0]).is_err());
        let p = ArrivalPermutation::from_order(vec![2, 0, 1]).unwrap();
        assert_eq!(p.ranks(), vec![1, 2, 0]);
    }

    #[test]
    fn reconstruct_examples() {
        let d = DelayTrace::new(vec![50 * MS_U, 50 * MS_U, 60 * MS_U]).unwrap();
        let l = LossTrace::new(vec![0, 1, 0], Indexing::SendOrder).unwrap();
        let r = reconstruct(&d, &l, 10 * MS_U).unwrap();
        assert_eq!(r.entries(), &[50 * MS, LOST, 60 * MS]);

        let none = LossTrace::new(vec![0; 3], Indexing::SendOrder).unwrap();
        let r = reconstruct(&d, &none, 10 * MS_U).unwrap();
        assert_eq!(r.entries(), &[50 * MS, 50 * MS, 60 * MS]);

        let short = LossTrace::new(vec![0; 2], Indexing::SendOrder).unwrap();
        assert!(matches!(
            reconstruct(&d, &short, 10 * MS_U),
            Err(TraceError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        let diag = validate(&raw(&[50 * MS, LOST]));
        assert_eq!((diag.entries, diag.losses, diag.invalid), (2, 1, 0));
        assert!(diag.fits_u32);

        // 2^32 - 1 ns is about 4.295 s, so 5 s does not fit.
        assert_eq!(u32::MAX as i64, 4_294_967_295);
        let diag = validate(&raw(&[5_000_000_000]));
        assert!(!diag.fits_u32);
        assert!(validate(&raw(&[4_294_967_295])).fits_u32);

        let diag = validate(&raw(&[0]));
        assert_eq!(diag.invalid, 1);
        assert_eq!(diag.invalid_indices, vec![0]);
    }

    #[test]
    fn delay_and_loss_constructors_check_invariants() {
        assert_eq!(DelayTrace::new(vec![]), Err(TraceError::EmptyTrace));
        assert_eq!(
            DelayTrace::new(vec![3, 0]),
            Err(TraceError::ZeroDelay { index: 1 })
        );
        assert_eq!(
            LossTrace::new(vec![0, 2], Indexing::SendOrder),
            Err(TraceError::InvalidFlag { index: 1, value: 2 })
        );
    }
}
