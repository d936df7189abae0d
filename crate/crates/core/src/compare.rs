//! Per-packet comparison of an original trace against what was observed
//! over the emulated link.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::stats::nearest_rank;
use crate::trace::RawTrace;

/// Default pass threshold for delay error: 2 ms.
pub const DEFAULT_TOLERANCE_NS: u64 = 2_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("traces differ in length ({original} vs {observed}); allow truncation to compare the common prefix")]
    LengthMismatch { original: usize, observed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Indices present in both traces.
    pub n_compared: usize,
    /// `(index, observed - original)` wherever both sides delivered.
    pub errors: Vec<(usize, i64)>,
    pub max_abs_error_ns: u64,
    pub p50_abs_error_ns: u64,
    pub p99_abs_error_ns: u64,
    /// Indices where exactly one side lost the packet.
    pub loss_mismatches: Vec<usize>,
    pub tolerance_ns: u64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn summary(&self) -> String {
        format!(
            "compared {} packets: max |error| {} ns, p50 {} ns, p99 {} ns, {} loss mismatches, tolerance {} ns: {}",
            self.n_compared,
            self.max_abs_error_ns,
            self.p50_abs_error_ns,
            self.p99_abs_error_ns,
            self.loss_mismatches.len(),
            self.tolerance_ns,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares `observed` against `original` index by index.
///
/// The verdict passes iff every delay error is within `tolerance_ns` and the
/// two traces lost exactly the same packets. Unequal lengths are an error
/// unless `truncate` is set, in which case the common prefix is compared.
pub fn compare(
    original: &RawTrace,
    observed: &RawTrace,
    tolerance_ns: u64,
    truncate: bool,
) -> Result<ComparisonReport, CompareError> {
    if original.len() != observed.len() && !truncate {
        return Err(CompareError::LengthMismatch {
            original: original.len(),
            observed: observed.len(),
        });
    }
    let mut errors = Vec::new();
    let mut loss_mismatches = Vec::new();
    let pairs = original.entries().iter().zip(observed.entries());
    let n_compared = pairs.len();
    for (i, (&a, &b)) in pairs.enumerate() {
        match (a > 0, b > 0) {
            (true, true) => errors.push((i, b - a)),
            (false, false) => {}
            _ => loss_mismatches.push(i),
        }
    }

    let mut abs: Vec<u64> = errors.iter().map(|&(_, e)| e.unsigned_abs()).collect();
    abs.sort_unstable();
    let (p50, p99, max) = if abs.is_empty() {
        (0, 0, 0)
    } else {
        (
            nearest_rank(&abs, 50.0),
            nearest_rank(&abs, 99.0),
            *abs.last().unwrap(),
        )
    };
    Ok(ComparisonReport {
        n_compared,
        pass: max <= tolerance_ns && loss_mismatches.is_empty(),
        errors,
        max_abs_error_ns: max,
        p50_abs_error_ns: p50,
        p99_abs_error_ns: p99,
        loss_mismatches,
        tolerance_ns,
    })
}

/// Writes original vs observed side by side for plotting:
/// `index,original_ns,observed_ns,error_ns`, with `-1` for losses and an
/// empty error field where either side lost the packet.
pub fn write_series<W: Write>(
    mut w: W,
    original: &RawTrace,
    observed: &RawTrace,
) -> io::Result<()> {
    writeln!(w, "index,original_ns,observed_ns,error_ns")?;
    for (i, (&a, &b)) in original
        .entries()
        .iter()
        .zip(observed.entries())
        .enumerate()
    {
        if a > 0 && b > 0 {
            writeln!(w, "{i},{a},{b},{}", b - a)?;
        } else {
            writeln!(w, "{i},{a},{b},")?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::LOST;

    const MS: i64 = 1_000_000;

    fn raw(e: Vec<i64>) -> RawTrace {
        RawTrace::new(e, 10_000_000).unwrap()
    }

    #[test]
    fn identical_traces_pass_with_zero_error() {
        let a = raw(vec![5 * MS, LOST, 7 * MS]);
        let r = compare(&a, &a, 0, false).unwrap();
        assert_eq!(r.max_abs_error_ns, 0);
        assert_eq!(r.n_compared, 3);
        assert!(r.pass);
    }

    #[test]
    fn constant_offset_against_default_tolerance() {
        let a = raw(vec![30 * MS, 40 * MS, LOST]);
        let b = raw(vec![32 * MS, 42 * MS, LOST]);
        let r = compare(&a, &b, DEFAULT_TOLERANCE_NS, false).unwrap();
        assert_eq!(r.max_abs_error_ns, 2_000_000);
        assert!(r.pass);
        assert!(
            !compare(&a, &b, DEFAULT_TOLERANCE_NS - 1, false)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn loss_only_in_observed_fails() {
        let a = raw(vec![MS; 8]);
        let mut e = vec![MS; 8];
        e[5] = LOST;
        let r = compare(&a, &raw(e), DEFAULT_TOLERANCE_NS, false).unwrap();
        assert_eq!(r.loss_mismatches, vec![5]);
        assert!(!r.pass);
    }

    #[test]
    fn errors_flip_sign_when_swapped() {
        let a = raw(vec![3 * MS, 9 * MS]);
        let b = raw(vec![4 * MS, 2 * MS]);
        let ab = compare(&a, &b, 0, false).unwrap();
        let ba = compare(&b, &a, 0, false).unwrap();
        for ((i, x), (j, y)) in ab.errors.iter().zip(&ba.errors) {
            assert_eq!(i, j);
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn length_mismatch_and_truncation() {
        let a = raw(vec![MS, MS, MS]);
        let b = raw(vec![MS, MS]);
        assert_eq!(
            compare(&a, &b, 0, false),
            Err(CompareError::LengthMismatch {
                original: 3,
                observed: 2
            })
        );
        let r = compare(&a, &b, 0, true).unwrap();
        assert_eq!(r.n_compared, 2);
        assert!(r.pass);
    }

    #[test]
    fn series_format() {
        let mut buf = Vec::new();
        write_series(&mut buf, &raw(vec![5, LOST]), &raw(vec![6, LOST])).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "index,original_ns,observed_ns,error_ns\n0,5,6,1\n1,-1,-1,\n"
        );
    }
}
