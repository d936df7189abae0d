//! Kernel-side artifacts: array-map payloads and the shell scripts that
//! attach the data-plane programs and populate their maps.
//!
//! Everything here is text generation. Nothing is executed, and identical
//! inputs always produce byte-identical output.

mod maps;
mod scripts;

use thiserror::Error;

use crate::trace::TraceError;

pub use maps::{
    decode_u32_le, emit_map_commands, encode_map_entries, encode_u32_le, MapCommands, MapImage,
    MapTarget, DELAY_MAP_NAME, LOSS_MAP_NAME,
};
pub use scripts::{emit_deploy_script, emit_teardown_script, DeployScript, Role};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeployError {
    #[error("value {value} at key {key} does not fit a 32-bit map value")]
    ValueOverflow { key: usize, value: u64 },
    #[error("trace of {0} entries does not fit 32-bit map keys")]
    KeyOverflow(usize),
    #[error("map image is empty")]
    EmptyImage,
    #[error("invalid role {0:?}, expected sender or receiver")]
    InvalidRole(String),
    #[error("{what} {value:?} is not safe to put in a shell command")]
    UnsafeName { what: &'static str, value: String },
    #[error("malformed byte string {0:?}")]
    MalformedBytes(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}
