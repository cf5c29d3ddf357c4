use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::OutputMode;
use super::mlp::RowMasks;
use super::model::{forward, Head, Trunk};
use crate::channel_sim::Fingerprint;
use crate::rng::{self, domain, Stream};
use crate::{Error, Result};

/// Lower bound applied to combined variances so inverse weights stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-coordinate `[x, y]` statistics from Monte-Carlo dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: [f64; 2],
    pub aleatoric: [f64; 2],
    pub epistemic: [f64; 2],
    pub combined: [f64; 2],
}

/// Mean and population variance of `values`, accumulated around the first
/// value so identical samples give exactly zero variance; never negative.
pub fn mc_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(a, b), &v| {
        let d = v - shift;
        (a + d, b + d * d)
    });
    let mean_d = s1 / n;
    (shift + mean_d, (s2 / n - mean_d * mean_d).max(0.0))
}

/// Runs `passes` dropout-active forward passes over a batch. Row `i`'s masks
/// come from a stream keyed by `(seed, row_keys[i], pass)`, so results do not
/// depend on batching.
pub fn mcd_predict(
    trunk: &Trunk,
    head: &Head,
    inputs: ArrayView2<f64>,
    passes: usize,
    seed: u64,
    row_keys: &[u64],
) -> Result<Vec<Prediction>> {
    if passes < 1 {
        return Err(Error::domain("at least one Monte-Carlo pass is required"));
    }
    if row_keys.len() != inputs.nrows() {
        return Err(Error::domain("one row key per input row is required"));
    }
    let stochastic = trunk.net.dropout() > 0.0 || head.net.dropout() > 0.0;
    let passes = if stochastic { passes } else { 1 };
    let outputs: Vec<Array2<f64>> = (0..passes as u64)
        .map(|t| {
            let mut streams: Vec<Stream> = row_keys
                .iter()
                .map(|&k| rng::keyed(seed, &[domain::MC_DROPOUT, k, t]))
                .collect();
            forward(trunk, head, inputs, &mut RowMasks(&mut streams))
        })
        .collect::<Result<_>>()?;

    let with_variance = head.output == OutputMode::PositionLogVariance;
    let mut column = vec![0.0; passes];
    let predictions = (0..inputs.nrows())
        .map(|row| {
            let mut p = Prediction {
                mean: [0.0; 2],
                aleatoric: [0.0; 2],
                epistemic: [0.0; 2],
                combined: [0.0; 2],
            };
            for c in 0..2 {
                column.iter_mut().zip(&outputs).for_each(|(v, o)| *v = o[[row, c]]);
                let (mean, var) = mc_moments(&column);
                p.mean[c] = mean;
                p.epistemic[c] = var;
                if with_variance {
                    p.aleatoric[c] = outputs.iter().map(|o| o[[row, c + 2]].exp()).sum::<f64>() / passes as f64;
                }
                p.combined[c] = (p.epistemic[c] + p.aleatoric[c]).max(VARIANCE_FLOOR);
            }
            p
        })
        .collect();
    Ok(predictions)
}

/// Single-fingerprint form; the pass streams are seeded from `rng`.
pub fn mcd_predict_fingerprint(
    trunk: &Trunk,
    head: &Head,
    fp: &Fingerprint,
    passes: usize,
    rng: &mut Stream,
) -> Result<Prediction> {
    let x = ArrayView2::from_shape((1, fp.values.len()), &fp.values).map_err(|e| Error::domain(e.to_string()))?;
    let seed = rng.random::<u64>();
    Ok(mcd_predict(trunk, head, x, passes, seed, &[0])?[0])
}
