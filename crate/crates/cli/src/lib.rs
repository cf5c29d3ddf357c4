//! Experiment driver for multi-anchor CSI positioning: dataset generation,
//! training, evaluation and the experiment matrix.

pub mod args;
pub mod commands;
pub mod eval;
pub mod matrix;

use posfuse_core::{Error, ErrorKind};

/// Process exit code for an error: 2 config, 3 data, 4 numeric.
pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

/// Thread count requested through `POSFUSE_THREADS`; `0` means sequential.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, Error> {
    match value {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| Some(n.max(1)))
            .map_err(|_| Error::Config(format!("POSFUSE_THREADS must be a non-negative integer, got '{v}'"))),
    }
}
