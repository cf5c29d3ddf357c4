use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

use crate::rng::Stream;

/// Supplies inverted-dropout multipliers (0 or `1 / (1 - rate)`).
pub trait MaskSource {
    fn mask(&mut self, rate: f64, rows: usize, cols: usize) -> Array2<f64>;
}

/// Dropout disabled.
pub struct NoMasks;

impl MaskSource for NoMasks {
    fn mask(&mut self, _rate: f64, rows: usize, cols: usize) -> Array2<f64> {
        Array2::ones((rows, cols))
    }
}

/// Draws a whole mask from a single stream, row-major.
pub struct StreamMasks<'a>(pub &'a mut Stream);

impl MaskSource for StreamMasks<'_> {
    fn mask(&mut self, rate: f64, rows: usize, cols: usize) -> Array2<f64> {
        let keep = 1.0 / (1.0 - rate);
        Array2::from_shape_fn((rows, cols), |_| if self.0.random::<f64>() < rate { 0.0 } else { keep })
    }
}

/// One stream per batch row, so a row's masks do not depend on which other
/// rows share its batch.
pub struct RowMasks<'a>(pub &'a mut [Stream]);

impl MaskSource for RowMasks<'_> {
    fn mask(&mut self, rate: f64, rows: usize, cols: usize) -> Array2<f64> {
        assert_eq!(rows, self.0.len(), "one stream per row");
        let keep = 1.0 / (1.0 - rate);
        let mut m = Array2::zeros((rows, cols));
        for (mut row, stream) in m.rows_mut().into_iter().zip(self.0.iter_mut()) {
            row.iter_mut().for_each(|v| {
                *v = if stream.random::<f64>() < rate { 0.0 } else { keep };
            });
        }
        m
    }
}

/// Fully connected ReLU network with a flat parameter vector.
///
/// Layer `i` stores its `in x out` weight matrix row-major followed by its
/// bias. Every hidden layer (and the output layer when `activate_output`
/// is set) applies ReLU then dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    dropout: f64,
    activate_output: bool,
    params: Vec<f64>,
}

/// Activations kept from a training-mode forward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    /// `relu'(z) * mask` for activated layers.
    gates: Vec<Option<Array2<f64>>>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Seeded fan-in scaled uniform initialization (He bound for ReLU layers,
    /// LeCun bound for a linear output), zero biases.
    pub fn new(widths: &[usize], dropout: f64, activate_output: bool, rng: &mut Stream) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        assert!((0.0..1.0).contains(&dropout), "dropout rate must lie in [0, 1)");
        let mut params = vec![0.0; param_count(widths)];
        let layers = widths.len() - 1;
        let mut off = 0;
        for i in 0..layers {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let activated = i + 1 < layers || activate_output;
            let bound = if activated { 6.0 } else { 3.0 };
            let bound = (bound / fan_in as f64).sqrt();
            for w in &mut params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Self {
            widths: widths.to_vec(),
            dropout,
            activate_output,
            params,
        }
    }

    pub fn from_parts(widths: Vec<usize>, dropout: f64, activate_output: bool, params: Vec<f64>) -> Option<Self> {
        (widths.len() >= 2
            && widths.iter().all(|&w| w > 0)
            && (0.0..1.0).contains(&dropout)
            && params.len() == param_count(&widths))
        .then_some(Self {
            widths,
            dropout,
            activate_output,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn is_activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers() || self.activate_output
    }

    fn offsets(&self, layer: usize) -> (usize, usize) {
        let off = param_count(&self.widths[..=layer]);
        (off, off + self.widths[layer] * self.widths[layer + 1])
    }

    fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.offsets(layer);
        let shape = (self.widths[layer], self.widths[layer + 1]);
        ArrayView2::from_shape(shape, &self.params[w..w + shape.0 * shape.1]).unwrap()
    }

    fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.offsets(layer);
        ArrayView1::from(&self.params[b..b + self.widths[layer + 1]])
    }

    fn affine(&self, layer: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), self.widths[layer + 1]));
        z.rows_mut().into_iter().for_each(|mut r| r.assign(&self.bias(layer)));
        general_mat_mul(1.0, x, &self.weights(layer), 1.0, &mut z);
        z
    }

    /// Gate for an activated layer: applies ReLU and dropout to `z` in place
    /// and returns the elementwise derivative multiplier.
    fn activate(&self, z: &mut Array2<f64>, masks: &mut dyn MaskSource) -> Array2<f64> {
        let mut gate = if self.dropout > 0.0 {
            masks.mask(self.dropout, z.nrows(), z.ncols())
        } else {
            Array2::ones(z.raw_dim())
        };
        ndarray::Zip::from(&mut *z).and(&mut gate).for_each(|v, g| {
            if *v <= 0.0 {
                *g = 0.0;
            }
            *v *= *g;
        });
        gate
    }

    /// Inference pass; dropout is applied only through `masks`.
    pub fn forward(&self, x: ArrayView2<f64>, masks: &mut dyn MaskSource) -> Array2<f64> {
        let mut a = x.to_owned();
        for layer in 0..self.layers() {
            let mut z = self.affine(layer, &a.view());
            if self.is_activated(layer) {
                self.activate(&mut z, masks);
            }
            a = z;
        }
        a
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>, masks: &mut dyn MaskSource) -> (Array2<f64>, ForwardCache) {
        let mut inputs = Vec::with_capacity(self.layers());
        let mut gates = Vec::with_capacity(self.layers());
        let mut a = x.to_owned();
        for layer in 0..self.layers() {
            let mut z = self.affine(layer, &a.view());
            gates.push(self.is_activated(layer).then(|| self.activate(&mut z, masks)));
            inputs.push(std::mem::replace(&mut a, z));
        }
        (a, ForwardCache { inputs, gates })
    }

    /// Accumulates parameter gradients into `grads` (same layout as the
    /// parameters) and returns the gradient with respect to the input when
    /// `want_input` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: Array2<f64>,
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<Array2<f64>> {
        assert_eq!(grads.len(), self.params.len());
        let mut g = grad_out;
        for layer in (0..self.layers()).rev() {
            if let Some(gate) = &cache.gates[layer] {
                g *= gate;
            }
            let (w_off, b_off) = self.offsets(layer);
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            {
                let (w_part, b_part) = grads[w_off..b_off + fan_out].split_at_mut(fan_in * fan_out);
                let mut dw = ArrayViewMut2::from_shape((fan_in, fan_out), w_part).unwrap();
                general_mat_mul(1.0, &cache.inputs[layer].t(), &g, 1.0, &mut dw);
                let mut db = ArrayViewMut1::from(b_part);
                db += &g.sum_axis(Axis(0));
            }
            if layer > 0 || want_input {
                g = g.dot(&self.weights(layer).t());
            } else {
                return None;
            }
        }
        Some(g)
    }

    /// Sets the bias of one output unit, e.g. to start position outputs at
    /// the label mean.
    pub fn set_output_bias(&mut self, unit: usize, value: f64) {
        let last = self.layers() - 1;
        let (_, b) = self.offsets(last);
        self.params[b + unit] = value;
    }

    pub fn output_bias(&self) -> Array1<f64> {
        self.bias(self.layers() - 1).to_owned()
    }
}
