//! Multi-anchor CSI fingerprint positioning with uncertainty-aware fusion.
//!
//! The crate is organised around the pipeline it implements:
//!
//! - [`channel_sim`]: synthetic multipath CSI per anchor, fingerprint
//!   preprocessing, angle-delay attenuation of the strongest path and the
//!   binary dataset container.
//! - [`nn`]: a small dense network engine with hand-written backprop, the
//!   MSE / heteroscedastic NLL / multi-task objectives, Adam and
//!   Monte-Carlo dropout prediction.
//! - [`training`]: early fusion, single-task late fusion and multi-task late
//!   fusion training regimes plus the model bundle file.
//! - [`fusion`]: averaging, inverse-variance and spurious-robust fusion.
//! - [`metrics`]: mean error, sparsification/oracle curves, AUSE, the
//!   logistic uncertainty threshold and integrity risk.

// Negated float comparisons are deliberate: they make NaN fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_sim;
pub mod error;
pub mod fusion;
pub mod hash;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod training;

mod anchor;
mod binio;

pub use anchor::AnchorId;
pub use error::{Error, ErrorKind, Result};

/// Toolkit version embedded in reports and file provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
