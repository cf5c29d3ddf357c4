//! Synthetic multi-anchor CSI generation and fingerprint preprocessing.
//!
//! Channels come from a geometry-based single-bounce model: a direct path
//! (unless the UE sits inside the anchor's LOS-blocked polygon) plus one path
//! per point scatterer. Each path contributes
//! `gain * steering(angle) * exp(-j 2 pi k df L / c)` on subcarrier `k`, where
//! `L` is the path length. Subcarrier phasors are referenced to the lowest
//! subcarrier; the carrier-frequency term of each path is absorbed into a
//! fixed per-path phase drawn from the environment seed.

mod container;
mod dataset;
mod env;
mod fingerprint;
mod synth;
mod transform;

pub use container::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use dataset::{gen_dataset, gen_dataset_with_stats, Dataset, Sample, ScenarioSpec, ScenarioTag, SplitSpec, Splits};
pub use env::{AnchorGeometry, Bounds, Environment, Point2, Scatterer, UlaArray};
pub use fingerprint::{compute_norm_stats, to_fingerprint, Fingerprint, NormStats};
pub use synth::{synth_channel, CsiDomain, CsiTensor, SPEED_OF_LIGHT};
pub use transform::{attenuate_strongest, from_angle_delay, to_angle_delay};
