//! Getting traces in and out of files.
//!
//! * [`irtt`] reads the JSON output of the `irtt` round-trip measurement tool.
//! * [`canonical`] is the toolkit's own delimited-text format for raw traces,
//!   delay tables, and loss tables.
//! * [`stats`] summarises a trace, including windowed-minimum handover
//!   detection.

pub mod canonical;
pub mod irtt;
pub mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::trace::TraceError;

pub use canonical::{
    read_canonical, read_delays, read_loss, write_canonical, write_delays, write_loss,
};
pub use irtt::{parse_irtt, IrttImport};
pub use stats::{trace_stats, trace_stats_with, DelaySummary, StatsConfig, TraceStats, WindowMin};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed measurement document: {0}")]
    MalformedDocument(String),
    #[error("measurement document has no round-trip records")]
    NoRecords,
    #[error("no send interval in the document and none given")]
    MissingInterval,
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}
