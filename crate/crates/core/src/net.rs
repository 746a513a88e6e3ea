//! Minimal dense feed-forward networks with analytic gradients.
//!
//! Every learned component in the crate (the low-fidelity network and both
//! correction branches) is a plain fully-connected net described by a
//! [`NetworkSpec`] and a flat [`ParamVector`]. Gradients are computed by
//! hand-written reverse-mode accumulation so training is deterministic and
//! auditable; no external autodiff is involved.
//!
//! Parameter layout is fixed: layer by layer, weights in row-major order
//! (`fan_out` rows of `fan_in` columns) followed by that layer's biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Hyperbolic tangent on hidden layers.
    Tanh,
    /// No nonlinearity anywhere; the whole network is one affine map.
    Identity,
}

/// Architecture of a dense network. The activation applies to hidden
/// layers only; the output layer is always affine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = NetworkSpec { input_dim, hidden_layers, output_dim, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidInput(
                "network input and output dims must be positive".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidInput("hidden layer width must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_layers.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_layers);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fi, fo)| fi * fo + fo)
            .sum()
    }
}

/// Flat parameter vector in the crate's canonical layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Borrowed view of one layer's weights and biases inside a flat vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major, `fan_out` rows of `fan_in` columns.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

/// Decompose a flat vector into per-layer views (the "unflatten" half of
/// the layout round trip).
pub fn layer_views<'a>(spec: &NetworkSpec, params: &'a ParamVector) -> Result<Vec<LayerView<'a>>> {
    if params.len() != spec.param_count() {
        return Err(Error::Dimension(format!(
            "parameter vector has {} entries, spec needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    let mut views = Vec::new();
    let mut off = 0;
    for (fi, fo) in spec.layer_dims() {
        let w_end = off + fi * fo;
        let b_end = w_end + fo;
        views.push(LayerView {
            fan_in: fi,
            fan_out: fo,
            weights: &params.values[off..w_end],
            biases: &params.values[w_end..b_end],
        });
        off = b_end;
    }
    Ok(views)
}

/// Reassemble a flat vector from per-layer weight/bias slices.
pub fn from_layers(spec: &NetworkSpec, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<ParamVector> {
    let dims = spec.layer_dims();
    if layers.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "{} layers supplied, spec has {}",
            layers.len(),
            dims.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.param_count());
    for ((w, b), (fi, fo)) in layers.iter().zip(dims) {
        if w.len() != fi * fo || b.len() != fo {
            return Err(Error::Dimension("layer slice sizes disagree with spec".into()));
        }
        values.extend_from_slice(w);
        values.extend_from_slice(b);
    }
    Ok(ParamVector { values })
}

/// Glorot-uniform initialization: weights drawn from
/// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, biases zero.
/// Deterministic for a fixed seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fi, fo) in spec.layer_dims() {
        let bound = (6.0 / (fi + fo) as f64).sqrt();
        for _ in 0..fi * fo {
            let u: f64 = rng.random();
            values.push((2.0 * u - 1.0) * bound);
        }
        values.extend(std::iter::repeat_n(0.0, fo));
    }
    ParamVector { values }
}

/// Per-layer post-activation values saved by [`forward_batch`] for reuse
/// in [`backward_batch`]. `activations[0]` is the input batch itself.
#[derive(Debug, Clone)]
pub struct BatchCache {
    rows: usize,
    activations: Vec<Vec<f64>>,
}

impl BatchCache {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Dense forward pass over a flat row-major batch (`rows × input_dim`).
/// Returns the flat output batch and the cache needed for backprop.
pub fn forward_batch(
    spec: &NetworkSpec,
    params: &ParamVector,
    inputs: &[f64],
    rows: usize,
) -> Result<(Vec<f64>, BatchCache)> {
    spec.validate()?;
    if inputs.len() != rows * spec.input_dim {
        return Err(Error::Dimension(format!(
            "input batch has {} values, expected {} rows × {} features",
            inputs.len(),
            rows,
            spec.input_dim
        )));
    }
    let layers = layer_views(spec, params)?;
    let n_layers = layers.len();

    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(inputs.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let prev = &activations[l];
        let mut out = vec![0.0; rows * layer.fan_out];
        for r in 0..rows {
            let x = &prev[r * layer.fan_in..(r + 1) * layer.fan_in];
            for o in 0..layer.fan_out {
                let w = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                let mut z = layer.biases[o];
                for (wi, xi) in w.iter().zip(x) {
                    z += wi * xi;
                }
                out[r * layer.fan_out + o] = z;
            }
        }
        let is_hidden = l + 1 < n_layers;
        if is_hidden && spec.activation == Activation::Tanh {
            for v in &mut out {
                *v = v.tanh();
            }
        }
        activations.push(out);
    }
    let outputs = activations.last().unwrap().clone();
    Ok((outputs, BatchCache { rows, activations }))
}

/// Reverse-mode accumulation. Given the cotangent of the outputs
/// (`d_outputs`, flat `rows × output_dim`), returns the gradient with
/// respect to every parameter (same layout as the parameter vector) and
/// the cotangent of the inputs.
pub fn backward_batch(
    spec: &NetworkSpec,
    params: &ParamVector,
    cache: &BatchCache,
    d_outputs: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    let layers = layer_views(spec, params)?;
    let rows = cache.rows;
    if d_outputs.len() != rows * spec.output_dim {
        return Err(Error::Dimension(format!(
            "output cotangent has {} values, expected {}",
            d_outputs.len(),
            rows * spec.output_dim
        )));
    }

    let mut grads = ParamVector::zeros(params.len());
    let mut delta = d_outputs.to_vec();

    // Walk layers back to front; `offsets[l]` is the start of layer l's
    // weights inside the flat vector.
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for layer in &layers {
        offsets.push(off);
        off += layer.fan_in * layer.fan_out + layer.fan_out;
    }

    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let prev = &cache.activations[l];
        let w_off = offsets[l];
        let b_off = w_off + layer.fan_in * layer.fan_out;

        for r in 0..rows {
            let d = &delta[r * layer.fan_out..(r + 1) * layer.fan_out];
            let x = &prev[r * layer.fan_in..(r + 1) * layer.fan_in];
            for (o, &d_o) in d.iter().enumerate() {
                let g_row = &mut grads.values[w_off + o * layer.fan_in..w_off + (o + 1) * layer.fan_in];
                for (gw, xi) in g_row.iter_mut().zip(x) {
                    *gw += d_o * xi;
                }
                grads.values[b_off + o] += d_o;
            }
        }

        // Cotangent of this layer's input.
        let mut d_prev = vec![0.0; rows * layer.fan_in];
        for r in 0..rows {
            let d = &delta[r * layer.fan_out..(r + 1) * layer.fan_out];
            let dp = &mut d_prev[r * layer.fan_in..(r + 1) * layer.fan_in];
            for (o, &d_o) in d.iter().enumerate() {
                let w = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (dpi, wi) in dp.iter_mut().zip(w) {
                    *dpi += d_o * wi;
                }
            }
        }

        if l > 0 && spec.activation == Activation::Tanh {
            // prev holds tanh outputs, so act' = 1 - prev^2.
            for (dp, a) in d_prev.iter_mut().zip(prev) {
                *dp *= 1.0 - a * a;
            }
        }
        delta = d_prev;
    }

    Ok((grads, delta))
}

/// Standard dense forward pass over explicit row vectors.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamVector,
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    for (i, row) in inputs.iter().enumerate() {
        if row.len() != spec.input_dim {
            return Err(Error::Dimension(format!(
                "input row {i} has {} features, expected {}",
                row.len(),
                spec.input_dim
            )));
        }
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    let (out, _) = forward_batch(spec, params, &flat, inputs.len())?;
    Ok(out
        .chunks(spec.output_dim)
        .map(|c| c.to_vec())
        .collect())
}

/// Gradient of a scalar loss with respect to every parameter.
///
/// The closure receives the flat output batch and must return the loss
/// value together with its cotangent `∂loss/∂output` (same length as the
/// outputs). The returned gradient shares the parameter layout.
pub fn gradient<F>(
    spec: &NetworkSpec,
    params: &ParamVector,
    inputs: &[Vec<f64>],
    loss: F,
) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&[f64]) -> (f64, Vec<f64>),
{
    for (i, row) in inputs.iter().enumerate() {
        if row.len() != spec.input_dim {
            return Err(Error::Dimension(format!(
                "input row {i} has {} features, expected {}",
                row.len(),
                spec.input_dim
            )));
        }
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    let (out, cache) = forward_batch(spec, params, &flat, inputs.len())?;
    let (value, d_out) = loss(&out);
    if d_out.len() != out.len() {
        return Err(Error::Dimension(format!(
            "loss cotangent has {} values, outputs have {}",
            d_out.len(),
            out.len()
        )));
    }
    let (grads, _) = backward_batch(spec, params, &cache, &d_out)?;
    Ok((value, grads))
}
