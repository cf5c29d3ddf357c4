//! Training regimes and the model bundle.
//!
//! - early: one network over the anchor-concatenated fingerprints;
//! - stl: one independent trunk + head per anchor;
//! - mtl: one shared trunk with a head per anchor, trained on the summed
//!   per-anchor losses of a shared mini-batch.

mod bundle;
mod config;
mod predict;
mod schedule;
mod train;

pub use bundle::{EpochRecord, History, ModelBundle, ModelGroup, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use config::{planned_param_count, TrainConfig, TrainMode};
pub use predict::{predict_all, predict_dataset};
pub use schedule::PlateauSchedule;
pub use train::{train, validation_loss};
