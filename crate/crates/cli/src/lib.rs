//! File formats, run configuration and the benchmark/verification harness
//! behind the `depcap` binary.

pub mod cli;
pub mod config;
pub mod format;
pub mod harness;
pub mod model_io;
pub mod verify;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const VERIFY_FAILED: u8 = 2;
}
