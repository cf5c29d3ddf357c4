use ndarray::{Array1, Array2, ArrayView2};

use super::loss::{loss, LossKind, OutputMode};
use super::mlp::{MaskSource, Mlp, NoMasks, StreamMasks};
use crate::channel_sim::Fingerprint;
use crate::rng::Stream;
use crate::{AnchorId, Error, Result};

/// Shared feature extractor; every layer is ReLU-activated.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub net: Mlp,
}

impl Trunk {
    pub fn new(input: usize, hidden: &[usize], dropout: f64, rng: &mut Stream) -> Self {
        let widths: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).collect();
        Self {
            net: Mlp::new(&widths, dropout, true, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.net.output_dim()
    }
}

/// Per-anchor regressor on top of the trunk features, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub anchor: AnchorId,
    pub output: OutputMode,
    pub net: Mlp,
}

impl Head {
    pub fn new(
        anchor: AnchorId,
        features: usize,
        hidden: &[usize],
        output: OutputMode,
        dropout: f64,
        rng: &mut Stream,
    ) -> Self {
        let widths: Vec<usize> = std::iter::once(features)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output.arity()))
            .collect();
        Self {
            anchor,
            output,
            net: Mlp::new(&widths, dropout, false, rng),
        }
    }
}

fn check_compatible(trunk: &Trunk, head: &Head, input_cols: usize) -> Result<()> {
    if input_cols != trunk.input_dim() {
        return Err(Error::domain(format!(
            "input has {input_cols} features, trunk expects {}",
            trunk.input_dim()
        )));
    }
    if head.net.input_dim() != trunk.feature_dim() {
        return Err(Error::domain(format!(
            "head for anchor {} expects {} features, trunk emits {}",
            head.anchor,
            head.net.input_dim(),
            trunk.feature_dim()
        )));
    }
    if head.net.output_dim() != head.output.arity() {
        return Err(Error::domain("head output width does not match its output mode"));
    }
    Ok(())
}

/// Raw head outputs for a batch (one row per sample).
pub fn forward(trunk: &Trunk, head: &Head, inputs: ArrayView2<f64>, masks: &mut dyn MaskSource) -> Result<Array2<f64>> {
    check_compatible(trunk, head, inputs.ncols())?;
    let features = trunk.net.forward(inputs, masks);
    Ok(head.net.forward(features.view(), masks))
}

/// Raw outputs for a single fingerprint. With `dropout_active` false the
/// result is deterministic and `rng` is untouched.
pub fn forward_fingerprint(
    trunk: &Trunk,
    head: &Head,
    fp: &Fingerprint,
    dropout_active: bool,
    rng: &mut Stream,
) -> Result<Array1<f64>> {
    let x = ArrayView2::from_shape((1, fp.values.len()), &fp.values).map_err(|e| Error::domain(e.to_string()))?;
    let out = if dropout_active {
        forward(trunk, head, x, &mut StreamMasks(rng))?
    } else {
        forward(trunk, head, x, &mut NoMasks)?
    };
    Ok(out.row(0).to_owned())
}

/// Loss of one trunk + head pair on a batch with gradients for both parts.
#[derive(Debug, Clone)]
pub struct ModelEval {
    pub loss: f64,
    pub trunk_grad: Vec<f64>,
    pub head_grad: Vec<f64>,
}

pub fn model_loss(
    trunk: &Trunk,
    head: &Head,
    inputs: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    kind: LossKind,
    masks: &mut dyn MaskSource,
) -> Result<ModelEval> {
    check_compatible(trunk, head, inputs.ncols())?;
    if head.output != kind.output_mode() {
        return Err(Error::config(format!(
            "{} loss needs {} head outputs, head has {}",
            kind.as_str(),
            kind.output_mode().arity(),
            head.output.arity()
        )));
    }
    let (features, trunk_cache) = trunk.net.forward_cached(inputs, masks);
    let (out, head_cache) = head.net.forward_cached(features.view(), masks);
    let eval = loss(kind, out.view(), labels)?;
    let mut head_grad = vec![0.0; head.net.param_count()];
    let mut trunk_grad = vec![0.0; trunk.net.param_count()];
    let feature_grad = head
        .net
        .backward(&head_cache, eval.grad, &mut head_grad, true)
        .expect("input gradient requested");
    trunk.net.backward(&trunk_cache, feature_grad, &mut trunk_grad, false);
    Ok(ModelEval {
        loss: eval.value,
        trunk_grad,
        head_grad,
    })
}
