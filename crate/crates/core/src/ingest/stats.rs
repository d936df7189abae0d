//! Descriptive statistics for a trace.
//!
//! Besides the usual delay summary, the trace is cut into fixed windows and
//! the minimum delay of each window is tracked. On a LEO path the floor of
//! the delay jumps whenever the serving satellite changes, so the spacing of
//! jumps in the windowed minimum estimates the handover period.

use serde::Serialize;

use super::IngestError;
use crate::trace::{RawTrace, TraceError};

/// Default jump size (2 ms) that counts as a change of the delay floor.
pub const DEFAULT_CHANGE_THRESHOLD_NS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsConfig {
    /// Window length in samples.
    pub window: usize,
    /// A window minimum differing from the previous one by more than this
    /// is a change-point.
    pub change_threshold_ns: u64,
}

impl StatsConfig {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            change_threshold_ns: DEFAULT_CHANGE_THRESHOLD_NS,
        }
    }
}

/// Percentiles use the nearest-rank method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySummary {
    pub min_ns: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowMin {
    pub start: usize,
    /// `None` when every packet in the window was lost.
    pub min_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStats {
    pub count: usize,
    pub loss_count: usize,
    pub loss_rate: f64,
    /// Absent when every packet was lost.
    pub delay: Option<DelaySummary>,
    pub window: usize,
    pub windowed_min: Vec<WindowMin>,
    /// Sample index (window start) of every floor change.
    pub change_points: Vec<usize>,
    /// Median spacing of change-points in samples; needs at least three.
    pub estimated_period: Option<usize>,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[u64], percent: f64) -> u64 {
    assert!(!sorted.is_empty());
    let rank = ((percent / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(raw: &RawTrace) -> Option<DelaySummary> {
    let mut delays: Vec<u64> = raw.delivered().collect();
    if delays.is_empty() {
        return None;
    }
    delays.sort_unstable();
    let sum: u128 = delays.iter().map(|&d| d as u128).sum();
    Some(DelaySummary {
        min_ns: delays[0],
        mean_ns: sum as f64 / delays.len() as f64,
        p50_ns: nearest_rank(&delays, 50.0),
        p99_ns: nearest_rank(&delays, 99.0),
        max_ns: *delays.last().unwrap(),
    })
}

fn windowed_min(raw: &RawTrace, window: usize) -> Vec<WindowMin> {
    raw.entries()
        .chunks(window)
        .enumerate()
        .map(|(w, chunk)| WindowMin {
            start: w * window,
            min_ns: chunk.iter().filter(|&&e| e > 0).map(|&e| e as u64).min(),
        })
        .collect()
}

fn change_points(series: &[WindowMin], threshold: u64) -> Vec<usize> {
    let mut points = Vec::new();
    let mut previous: Option<u64> = None;
    for w in series {
        let Some(current) = w.min_ns else { continue };
        if let Some(prev) = previous {
            if current.abs_diff(prev) > threshold {
                points.push(w.start);
            }
        }
        previous = Some(current);
    }
    points
}

fn median_gap(points: &[usize]) -> Option<usize> {
    if points.len() < 3 {
        return None;
    }
    let mut gaps: Vec<usize> = points.windows(2).map(|p| p[1] - p[0]).collect();
    gaps.sort_unstable();
    Some(gaps[(gaps.len() - 1) / 2])
}

pub fn trace_stats(raw: &RawTrace, window: usize) -> Result<TraceStats, IngestError> {
    trace_stats_with(raw, &StatsConfig::new(window))
}

pub fn trace_stats_with(raw: &RawTrace, config: &StatsConfig) -> Result<TraceStats, IngestError> {
    if config.window == 0 {
        return Err(IngestError::InvalidWindow);
    }
    raw.check()?;
    if raw.is_empty() {
        return Err(TraceError::EmptyTrace.into());
    }
    let loss_count = raw.loss_count();
    let series = windowed_min(raw, config.window);
    let points = change_points(&series, config.change_threshold_ns);
    Ok(TraceStats {
        count: raw.len(),
        loss_count,
        loss_rate: loss_count as f64 / raw.len() as f64,
        delay: summarize(raw),
        window: config.window,
        estimated_period: median_gap(&points),
        change_points: points,
        windowed_min: series,
    })
}
