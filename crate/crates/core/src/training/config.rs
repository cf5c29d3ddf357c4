use serde::{Deserialize, Serialize};

use crate::nn::{LossKind, OutputMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Early,
    Stl,
    Mtl,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Early => "early",
            TrainMode::Stl => "stl",
            TrainMode::Mtl => "mtl",
        }
    }

    pub fn is_late(self) -> bool {
        self != TrainMode::Early
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub reduced_learning_rate: f64,
    /// Epochs without validation improvement before the rate is reduced.
    pub patience: usize,
    pub trunk_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Mtl,
            loss: LossKind::Nll,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            reduced_learning_rate: 1e-4,
            patience: 100,
            trunk_widths: vec![128, 128],
            head_widths: vec![64, 64],
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if self.patience >= self.epochs {
            return fail(format!(
                "patience ({}) must be smaller than epochs ({})",
                self.patience, self.epochs
            ));
        }
        if self.batch_size < 1 {
            return fail("batch size must be at least 1".into());
        }
        for (name, rate) in [
            ("learning_rate", self.learning_rate),
            ("reduced_learning_rate", self.reduced_learning_rate),
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                return fail(format!("{name} must be positive, got {rate}"));
            }
        }
        if self.trunk_widths.is_empty() || self.trunk_widths.contains(&0) || self.head_widths.contains(&0) {
            return fail("trunk needs at least one layer and all widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn output_mode(&self) -> OutputMode {
        self.loss.output_mode()
    }
}

fn dense_params(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Total trainable parameters of the networks `cfg` would build for
/// `anchors` anchors with per-anchor fingerprint length `fp_len`.
pub fn planned_param_count(cfg: &TrainConfig, anchors: usize, fp_len: usize) -> usize {
    let input = match cfg.mode {
        TrainMode::Early => anchors * fp_len,
        _ => fp_len,
    };
    let mut trunk = vec![input];
    trunk.extend(&cfg.trunk_widths);
    let mut head = vec![*cfg.trunk_widths.last().unwrap_or(&input)];
    head.extend(&cfg.head_widths);
    head.push(cfg.output_mode().arity());
    let (t, h) = (dense_params(&trunk), dense_params(&head));
    match cfg.mode {
        TrainMode::Early => t + h,
        TrainMode::Stl => anchors * (t + h),
        TrainMode::Mtl => t + anchors * h,
    }
}
