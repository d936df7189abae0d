//! Canonical delimited-text trace files.
//!
//! Every file is a header line followed by one `<index>,<value>` line per
//! packet, indices consecutive from 0:
//!
//! ```text
//! index,delay_ns        raw trace (value > 0, or -1 for lost) / delay table
//! index,lost            loss flags keyed by send index
//! arrival_rank,lost     loss flags keyed by arrival rank
//! ```
//!
//! Writers are byte-exact. Readers trim whitespace around fields and ignore
//! blank lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::IngestError;
use crate::trace::{DelayTrace, Indexing, LossTrace, RawTrace, LOST};

pub const TRACE_HEADER: &str = "index,delay_ns";
pub const SEND_LOSS_HEADER: &str = "index,lost";
pub const ARRIVAL_LOSS_HEADER: &str = "arrival_rank,lost";

fn loss_header(indexing: Indexing) -> &'static str {
    match indexing {
        Indexing::SendOrder => SEND_LOSS_HEADER,
        Indexing::ArrivalOrder => ARRIVAL_LOSS_HEADER,
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads the header and `(line number, value)` rows, checking index order.
fn read_rows<R: BufRead>(reader: R) -> Result<(String, Vec<(usize, i64)>), IngestError> {
    let mut header = None;
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(line.replace(' ', ""));
            continue;
        }
        let (index, value) = line
            .split_once(',')
            .ok_or_else(|| parse_err(line_no, "expected <index>,<value>"))?;
        let index: usize = index
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad index {index:?}")))?;
        if index != rows.len() {
            return Err(parse_err(
                line_no,
                format!("index {index} out of sequence, expected {}", rows.len()),
            ));
        }
        let value: i64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad value {value:?}")))?;
        rows.push((line_no, value));
    }
    let header = header.ok_or_else(|| parse_err(1, "missing header"))?;
    Ok((header, rows))
}

fn expect_header(found: &str, expected: &str) -> Result<(), IngestError> {
    if found == expected {
        Ok(())
    } else {
        Err(parse_err(
            1,
            format!("header {found:?}, expected {expected:?}"),
        ))
    }
}

pub fn parse_trace<R: BufRead>(reader: R, send_interval_ns: u64) -> Result<RawTrace, IngestError> {
    let (header, rows) = read_rows(reader)?;
    expect_header(&header, TRACE_HEADER)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (line, value) in rows {
        if value <= 0 && value != LOST {
            return Err(parse_err(
                line,
                format!("delay {value} is neither positive nor -1"),
            ));
        }
        entries.push(value);
    }
    Ok(RawTrace::new(entries, send_interval_ns)?)
}

pub fn parse_delays<R: BufRead>(reader: R) -> Result<DelayTrace, IngestError> {
    let (header, rows) = read_rows(reader)?;
    expect_header(&header, TRACE_HEADER)?;
    let mut delays = Vec::with_capacity(rows.len());
    for (line, value) in rows {
        if value <= 0 {
            return Err(parse_err(
                line,
                format!("delay table entry {value} is not positive"),
            ));
        }
        delays.push(value as u64);
    }
    Ok(DelayTrace::new(delays)?)
}

pub fn parse_loss<R: BufRead>(reader: R) -> Result<LossTrace, IngestError> {
    let (header, rows) = read_rows(reader)?;
    let indexing = if header == SEND_LOSS_HEADER {
        Indexing::SendOrder
    } else if header == ARRIVAL_LOSS_HEADER {
        Indexing::ArrivalOrder
    } else {
        return Err(parse_err(
            1,
            format!("header {header:?}, expected {SEND_LOSS_HEADER:?} or {ARRIVAL_LOSS_HEADER:?}"),
        ));
    };
    let mut flags = Vec::with_capacity(rows.len());
    for (line, value) in rows {
        match value {
            0 | 1 => flags.push(value as u8),
            _ => return Err(parse_err(line, format!("loss flag {value} is not 0 or 1"))),
        }
    }
    Ok(LossTrace::new(flags, indexing)?)
}

fn write_rows<W: Write>(
    mut w: W,
    header: &str,
    values: impl Iterator<Item = i64>,
) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for (i, v) in values.enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    w.flush()
}

pub fn format_trace<W: Write>(w: W, raw: &RawTrace) -> std::io::Result<()> {
    write_rows(w, TRACE_HEADER, raw.entries().iter().copied())
}

pub fn format_delays<W: Write>(w: W, delays: &DelayTrace) -> std::io::Result<()> {
    write_rows(w, TRACE_HEADER, delays.delays().iter().map(|&d| d as i64))
}

pub fn format_loss<W: Write>(w: W, loss: &LossTrace) -> std::io::Result<()> {
    write_rows(
        w,
        loss_header(loss.indexing()),
        loss.flags().iter().map(|&f| f as i64),
    )
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IngestError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IngestError::io(path, e))
}

/// The file carries no probe spacing, so the caller supplies it.
pub fn read_canonical(path: &Path, send_interval_ns: u64) -> Result<RawTrace, IngestError> {
    parse_trace(open(path)?, send_interval_ns)
}

pub fn write_canonical(raw: &RawTrace, path: &Path) -> Result<(), IngestError> {
    format_trace(create(path)?, raw).map_err(|e| IngestError::io(path, e))
}

pub fn read_delays(path: &Path) -> Result<DelayTrace, IngestError> {
    parse_delays(open(path)?)
}

pub fn write_delays(delays: &DelayTrace, path: &Path) -> Result<(), IngestError> {
    format_delays(create(path)?, delays).map_err(|e| IngestError::io(path, e))
}

pub fn read_loss(path: &Path) -> Result<LossTrace, IngestError> {
    parse_loss(open(path)?)
}

pub fn write_loss(loss: &LossTrace, path: &Path) -> Result<(), IngestError> {
    format_loss(create(path)?, loss).map_err(|e| IngestError::io(path, e))
}
