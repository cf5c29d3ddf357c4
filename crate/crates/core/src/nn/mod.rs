//! Dense network engine with hand-derived gradients.
//!
//! Networks are split the way the late-fusion models are: a [`Trunk`]
//! (shared feature extractor) followed by a [`Head`] that emits either a
//! position `[x, y]` or a position plus per-coordinate log-variances
//! `[x, y, s_x, s_y]` with `s = log sigma^2`.

mod adam;
mod loss;
mod mcd;
mod mlp;
mod model;
mod mtl;

pub use adam::{adam_step, AdamState};
pub use loss::{loss, mse_loss, nll_loss, LossEval, LossKind, OutputMode};
pub use mcd::{mc_moments, mcd_predict, mcd_predict_fingerprint, Prediction, VARIANCE_FLOOR};
pub use mlp::{MaskSource, Mlp, NoMasks, RowMasks, StreamMasks};
pub use model::{forward, forward_fingerprint, model_loss, Head, ModelEval, Trunk};
pub use mtl::{mtl_loss, MtlEval};
