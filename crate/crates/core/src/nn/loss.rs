use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Nll,
}

impl LossKind {
    pub fn output_mode(self) -> OutputMode {
        match self {
            LossKind::Mse => OutputMode::Position,
            LossKind::Nll => OutputMode::PositionLogVariance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Nll => "nll",
        }
    }
}

/// What a head emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputMode {
    /// `[x, y]`
    Position,
    /// `[x, y, log var_x, log var_y]`
    PositionLogVariance,
}

impl OutputMode {
    pub fn arity(self) -> usize {
        match self {
            OutputMode::Position => 2,
            OutputMode::PositionLogVariance => 4,
        }
    }
}

/// Batch loss and its gradient with respect to the raw network outputs.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad: Array2<f64>,
}

fn check_shapes(pred: &ArrayView2<f64>, labels: &ArrayView2<f64>, arity: usize) -> Result<()> {
    if pred.ncols() != arity {
        return Err(Error::domain(format!(
            "expected {arity} outputs per sample, got {}",
            pred.ncols()
        )));
    }
    if labels.ncols() != 2 || labels.nrows() != pred.nrows() || pred.nrows() == 0 {
        return Err(Error::domain(
            "labels must be a non-empty batch x 2 matrix matching predictions",
        ));
    }
    Ok(())
}

/// Mean over the batch of `(x~ - x)^2 + (y~ - y)^2`.
pub fn mse_loss(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<LossEval> {
    check_shapes(&pred, &labels, 2)?;
    let n = pred.nrows() as f64;
    let err = &pred - &labels;
    let value = err.iter().map(|e| e * e).sum::<f64>() / n;
    let grad = err * (2.0 / n);
    Ok(LossEval { value, grad })
}

/// Heteroscedastic Gaussian negative log-likelihood in log-variance form:
/// per sample `e_x^2 exp(-s_x) / 2 + e_y^2 exp(-s_y) / 2 + (s_x + s_y) / 2`,
/// averaged over the batch.
pub fn nll_loss(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<LossEval> {
    check_shapes(&pred, &labels, 4)?;
    let n = pred.nrows() as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut value = 0.0;
    for ((p, l), mut g) in pred.rows().into_iter().zip(labels.rows()).zip(grad.rows_mut()) {
        for c in 0..2 {
            let e = p[c] - l[c];
            let s = p[c + 2];
            let precision = (-s).exp();
            value += 0.5 * e * e * precision + 0.5 * s;
            g[c] = e * precision / n;
            g[c + 2] = 0.5 * (1.0 - e * e * precision) / n;
        }
    }
    Ok(LossEval { value: value / n, grad })
}

pub fn loss(kind: LossKind, pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<LossEval> {
    match kind {
        LossKind::Mse => mse_loss(pred, labels),
        LossKind::Nll => nll_loss(pred, labels),
    }
}
