use ndarray::ArrayView2;
use rayon::prelude::*;

use super::loss::LossKind;
use super::mlp::StreamMasks;
use super::model::{model_loss, Head, ModelEval, Trunk};
use crate::rng::Stream;
use crate::{Error, Result};

/// Multi-task objective: the unweighted sum of per-anchor losses.
#[derive(Debug, Clone)]
pub struct MtlEval {
    pub loss: f64,
    pub per_anchor: Vec<f64>,
    /// Sum of every anchor's trunk gradient, accumulated in anchor order.
    pub trunk_grad: Vec<f64>,
    pub head_grads: Vec<Vec<f64>>,
}

/// `inputs[n]` holds anchor `n`'s fingerprints for the shared mini-batch of
/// positions in `labels`; `streams[n]` supplies that anchor's dropout masks.
pub fn mtl_loss(
    trunk: &Trunk,
    heads: &[Head],
    inputs: &[ArrayView2<f64>],
    labels: ArrayView2<f64>,
    kind: LossKind,
    streams: &mut [Stream],
) -> Result<MtlEval> {
    if heads.is_empty() || inputs.len() != heads.len() || streams.len() != heads.len() {
        return Err(Error::domain(format!(
            "{} heads, {} input blocks and {} dropout streams must agree and be non-empty",
            heads.len(),
            inputs.len(),
            streams.len()
        )));
    }
    let evals: Vec<ModelEval> = heads
        .par_iter()
        .zip(inputs.par_iter())
        .zip(streams.par_iter_mut())
        .map(|((head, x), stream)| model_loss(trunk, head, x.view(), labels, kind, &mut StreamMasks(stream)))
        .collect::<Result<_>>()?;

    let mut trunk_grad = vec![0.0; trunk.net.param_count()];
    let mut per_anchor = Vec::with_capacity(evals.len());
    let mut head_grads = Vec::with_capacity(evals.len());
    for eval in evals {
        trunk_grad.iter_mut().zip(&eval.trunk_grad).for_each(|(t, g)| *t += g);
        per_anchor.push(eval.loss);
        head_grads.push(eval.head_grad);
    }
    Ok(MtlEval {
        loss: per_anchor.iter().sum(),
        per_anchor,
        trunk_grad,
        head_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::tests::{compare_gradients, random_batch};
    use crate::nn::{Head, NoMasks};
    use crate::{rng, AnchorId};

    fn setup(anchors: usize, kind: LossKind, seed: u64) -> (Trunk, Vec<Head>) {
        let mut r = rng::keyed(seed, &[1]);
        let trunk = Trunk::new(4, &[5, 5], 0.0, &mut r);
        let heads = (0..anchors)
            .map(|n| Head::new(AnchorId::from_index(n), 5, &[3], kind.output_mode(), 0.0, &mut r))
            .collect();
        (trunk, heads)
    }

    fn streams(n: usize) -> Vec<Stream> {
        (0..n as u64).map(|k| rng::keyed(0, &[k])).collect()
    }

    #[test]
    fn single_anchor_equals_single_model_loss() {
        let (trunk, heads) = setup(1, LossKind::Nll, 1);
        let x = random_batch(1, 6, 4, 0.0, 1.0);
        let y = random_batch(2, 6, 2, -1.0, 1.0);
        let m = mtl_loss(&trunk, &heads, &[x.view()], y.view(), LossKind::Nll, &mut streams(1)).unwrap();
        let s = model_loss(&trunk, &heads[0], x.view(), y.view(), LossKind::Nll, &mut NoMasks).unwrap();
        assert_eq!(m.loss, s.loss);
        assert_eq!(m.trunk_grad, s.trunk_grad);
        assert_eq!(m.head_grads[0], s.head_grad);
    }

    #[test]
    fn equal_losses_add_up() {
        let (trunk, heads) = setup(1, LossKind::Mse, 2);
        let twice = vec![heads[0].clone(), heads[0].clone()];
        let x = random_batch(3, 6, 4, 0.0, 1.0);
        let y = random_batch(4, 6, 2, -1.0, 1.0);
        let m = mtl_loss(
            &trunk,
            &twice,
            &[x.view(), x.view()],
            y.view(),
            LossKind::Mse,
            &mut streams(2),
        )
        .unwrap();
        assert_eq!(m.loss, 2.0 * m.per_anchor[0]);
    }

    #[test]
    fn trunk_gradient_is_sum_of_isolated_gradients() {
        for kind in [LossKind::Mse, LossKind::Nll] {
            let (trunk, heads) = setup(3, kind, 3);
            let xs: Vec<_> = (0..3).map(|n| random_batch(10 + n, 7, 4, 0.0, 1.0)).collect();
            let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
            let y = random_batch(5, 7, 2, -1.0, 1.0);
            let m = mtl_loss(&trunk, &heads, &views, y.view(), kind, &mut streams(3)).unwrap();
            let mut expected = vec![0.0; trunk.net.param_count()];
            for (head, x) in heads.iter().zip(&xs) {
                let e = model_loss(&trunk, head, x.view(), y.view(), kind, &mut NoMasks).unwrap();
                expected.iter_mut().zip(&e.trunk_grad).for_each(|(a, g)| *a += g);
            }
            for (a, b) in m.trunk_grad.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn mtl_gradients_match_finite_differences() {
        for kind in [LossKind::Mse, LossKind::Nll] {
            let (trunk, heads) = setup(2, kind, 4);
            let xs: Vec<_> = (0..2).map(|n| random_batch(20 + n, 5, 4, 0.0, 1.0)).collect();
            let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
            let y = random_batch(6, 5, 2, -1.0, 1.0);
            let m = mtl_loss(&trunk, &heads, &views, y.view(), kind, &mut streams(2)).unwrap();
            let h = 1e-6;
            let mut numeric = Vec::new();
            for i in 0..trunk.net.param_count() {
                let eval_at = |d: f64| {
                    let mut t = trunk.clone();
                    t.net.params_mut()[i] += d;
                    mtl_loss(&t, &heads, &views, y.view(), kind, &mut streams(2))
                        .unwrap()
                        .loss
                };
                numeric.push((eval_at(h) - eval_at(-h)) / (2.0 * h));
            }
            let (within, worst) = compare_gradients(&m.trunk_grad, &numeric);
            assert!(within >= 0.95 && worst <= 1e-3, "{kind:?}: {within} {worst}");
        }
    }

    #[test]
    fn count_mismatch_is_a_domain_error() {
        let (trunk, heads) = setup(2, LossKind::Mse, 5);
        let x = random_batch(1, 3, 4, 0.0, 1.0);
        let y = random_batch(2, 3, 2, 0.0, 1.0);
        let err = mtl_loss(&trunk, &heads, &[x.view()], y.view(), LossKind::Mse, &mut streams(2));
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
