//! Import of `irtt client -o <file>` JSON.
//!
//! Only three things per round trip are used: the sequence number
//! (`seqno`), the `lost` marker, and `delay.rtt` in nanoseconds. The probe
//! interval comes from `config.params.interval` when present.

use std::collections::BTreeMap;

use log::warn;
use serde_json::Value;

use super::IngestError;
use crate::trace::{RawTrace, LOST};

/// A parsed measurement plus what had to be patched up to get there.
#[derive(Debug, Clone)]
pub struct IrttImport {
    pub trace: RawTrace,
    /// Sequence number stored at index 0.
    pub first_seq: u64,
    /// Sequence numbers that appeared more than once; the first record won.
    pub duplicate_seqs: Vec<u64>,
    /// Sequence numbers with no record at all, filled in as losses.
    pub missing_seqs: Vec<u64>,
    /// How often each raw `lost` marker value was seen.
    pub loss_markers: BTreeMap<String, usize>,
}

fn loss_marker(record: &Value) -> Result<String, IngestError> {
    match record.get("lost") {
        None | Some(Value::Null) => Ok("false".to_owned()),
        Some(Value::Bool(b)) => Ok(b.to_string()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(IngestError::MalformedDocument(format!(
            "unexpected lost marker {other}"
        ))),
    }
}

fn seqno(record: &Value) -> Result<u64, IngestError> {
    record
        .get("seqno")
        .or_else(|| record.get("seq"))
        .and_then(Value::as_u64)
        .ok_or_else(|| IngestError::MalformedDocument("record without a sequence number".into()))
}

fn rtt(record: &Value) -> Result<Option<i64>, IngestError> {
    match record.get("delay").and_then(|d| d.get("rtt")) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_i64()
            .map(Some)
            .ok_or_else(|| IngestError::MalformedDocument(format!("non-integer rtt {v}"))),
    }
}

fn document_interval(doc: &Value) -> Option<u64> {
    let config = doc.get("config")?;
    config
        .get("params")
        .and_then(|p| p.get("interval"))
        .or_else(|| config.get("interval"))
        .and_then(Value::as_u64)
        .filter(|&ns| ns > 0)
}

/// Parses an irtt JSON document into a send-ordered trace.
///
/// Any marker other than `"false"` counts as lost, whichever direction the
/// tool blamed. Gaps in the sequence numbers become losses. For repeated
/// sequence numbers the first record is kept.
pub fn parse_irtt(document: &str, interval_ns: Option<u64>) -> Result<IrttImport, IngestError> {
    let doc: Value = serde_json::from_str(document)
        .map_err(|e| IngestError::MalformedDocument(e.to_string()))?;
    let records = doc
        .get("round_trips")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::MalformedDocument("missing round_trips array".into()))?;
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    let send_interval = document_interval(&doc)
        .or(interval_ns)
        .ok_or(IngestError::MissingInterval)?;

    let mut by_seq: BTreeMap<u64, i64> = BTreeMap::new();
    let mut duplicate_seqs = Vec::new();
    let mut loss_markers = BTreeMap::new();
    for record in records {
        let seq = seqno(record)?;
        let marker = loss_marker(record)?;
        let entry = if marker != "false" {
            LOST
        } else {
            match rtt(record)? {
                None => LOST,
                Some(ns) if ns > 0 => ns,
                Some(ns) => {
                    return Err(IngestError::MalformedDocument(format!(
                        "seq {seq}: non-positive rtt {ns}"
                    )))
                }
            }
        };
        *loss_markers.entry(marker).or_insert(0) += 1;
        if by_seq.contains_key(&seq) {
            duplicate_seqs.push(seq);
            continue;
        }
        by_seq.insert(seq, entry);
    }
    if !duplicate_seqs.is_empty() {
        warn!(
            "{} duplicate sequence numbers, kept first occurrence",
            duplicate_seqs.len()
        );
    }

    let first_seq = *by_seq.keys().next().expect("records is non-empty");
    let last_seq = *by_seq.keys().next_back().expect("records is non-empty");
    let mut entries = Vec::with_capacity((last_seq - first_seq + 1) as usize);
    let mut missing_seqs = Vec::new();
    for seq in first_seq..=last_seq {
        match by_seq.get(&seq) {
            Some(&e) => entries.push(e),
            None => {
                missing_seqs.push(seq);
                entries.push(LOST);
            }
        }
    }

    Ok(IrttImport {
        trace: RawTrace::new(entries, send_interval)?,
        first_seq,
        duplicate_seqs,
        missing_seqs,
        loss_markers,
    })
}
