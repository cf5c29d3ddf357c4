use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;

use super::bundle::ModelBundle;
use super::config::TrainMode;
use super::train::gather;
use crate::channel_sim::{Dataset, Sample};
use crate::fusion::UncertainEstimate;
use crate::nn::mcd_predict;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Rows per Monte-Carlo chunk; results do not depend on it.
const CHUNK: usize = 512;

fn check(bundle: &ModelBundle, anchors: usize, fp_len: usize) -> Result<()> {
    let expected = match bundle.mode {
        TrainMode::Early => anchors * fp_len,
        _ => fp_len,
    };
    let (trunk, _) = bundle
        .heads()
        .next()
        .ok_or_else(|| Error::domain("bundle has no heads"))?;
    if bundle.anchors != anchors || trunk.input_dim() != expected {
        return Err(Error::domain(format!(
            "bundle expects {} anchors with input width {}, data has {anchors} anchors giving {expected}",
            bundle.anchors,
            trunk.input_dim()
        )));
    }
    Ok(())
}

/// Monte-Carlo dropout estimates for the dataset samples at `indices`.
/// Entry `i` holds one estimate per anchor (late modes) or the single joint
/// estimate (early mode). Masks are keyed by sample index, so the result
/// is independent of chunking and scheduling.
pub fn predict_dataset(
    bundle: &ModelBundle,
    dataset: &Dataset,
    indices: &[u32],
    passes: usize,
    seed: u64,
) -> Result<Vec<Vec<UncertainEstimate>>> {
    check(bundle, dataset.anchors, dataset.fingerprint_len())?;
    let heads: Vec<_> = bundle.heads().collect();
    let mut out: Vec<Vec<UncertainEstimate>> = vec![Vec::with_capacity(heads.len()); indices.len()];
    for (c, chunk) in indices.chunks(CHUNK).enumerate() {
        let batch = gather(dataset, chunk, bundle.mode);
        let row_keys: Vec<u64> = chunk.iter().map(|&i| u64::from(i)).collect();
        let per_head = heads
            .par_iter()
            .enumerate()
            .map(|(k, (trunk, head))| {
                let x = &batch.inputs[k.min(batch.inputs.len() - 1)];
                let head_seed = rng::derive_seed(seed, &[u64::from(head.anchor.0)]);
                mcd_predict(trunk, head, x.view(), passes, head_seed, &row_keys)
            })
            .collect::<Result<Vec<_>>>()?;
        for ((_, head), preds) in heads.iter().zip(per_head) {
            for (j, p) in preds.into_iter().enumerate() {
                out[c * CHUNK + j].push(UncertainEstimate::new(head.anchor, p.mean, p.combined));
            }
        }
    }
    Ok(out)
}

/// Estimates for a single sample; mask streams are seeded from `rng`.
pub fn predict_all(
    bundle: &ModelBundle,
    sample: &Sample,
    passes: usize,
    rng: &mut Stream,
) -> Result<Vec<UncertainEstimate>> {
    let fp_len = sample.fingerprints.first().map_or(0, |f| f.len());
    check(bundle, sample.fingerprints.len(), fp_len)?;
    let seed = rng.random::<u64>();
    let inputs: Vec<Vec<f64>> = match bundle.mode {
        TrainMode::Early => vec![sample
            .fingerprints
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .collect()],
        _ => sample.fingerprints.iter().map(|f| f.values.clone()).collect(),
    };
    bundle
        .heads()
        .zip(&inputs)
        .map(|((trunk, head), x)| {
            let x = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::domain(e.to_string()))?;
            let head_seed = rng::derive_seed(seed, &[u64::from(head.anchor.0)]);
            let p = mcd_predict(trunk, head, x, passes, head_seed, &[0])?[0];
            Ok(UncertainEstimate::new(head.anchor, p.mean, p.combined))
        })
        .collect()
}
