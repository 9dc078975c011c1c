//! Fully connected autoencoder: dense layers, forward pass, MSE loss,
//! backpropagation and Adam training.

mod adam;
mod io;
mod train;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use adam::AdamState;
pub use io::{decode_model, encode_model, load_model, save_model};
pub use train::{backprop, train, train_rows, train_step, train_step_rows, Gradients, TrainConfig};

/// Layer widths of the detector: encoder 256→128→64→32→16, bottleneck 8,
/// mirrored decoder back to 256.
pub const LAYER_WIDTHS: [usize; 11] = [256, 128, 64, 32, 16, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out_dim × in_dim`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.nrows(),
                actual: bias.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::InvalidConfig("layer with zero width".into()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite layer parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Pre-activation `inputs · Wᵀ + b` for a batch (rows are samples).
    pub(crate) fn affine(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let mut z = inputs.dot(&self.weights.t());
        z += &self.bias;
        z
    }

    pub(crate) fn activate(&self, mut z: Array2<f64>) -> Array2<f64> {
        if self.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoderModel {
    layers: Vec<DenseLayer>,
}

impl AutoEncoderModel {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights (drawn at f32 precision), zero biases, ReLU on
    /// every layer except the last, which is linear.
    pub fn with_widths(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = glorot_limit_f32(fan_in, fan_out);
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.gen_range(-limit..limit) as f64
                });
                let activation = if i + 1 == n_layers {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, w1, ..., out]`
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Reconstruction of one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("1 × n view");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Reconstructions of a batch; rows are samples.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let mut acts = self.layers[0].activate(self.layers[0].affine(inputs));
        for layer in &self.layers[1..] {
            acts = layer.activate(layer.affine(acts.view()));
        }
        Ok(acts)
    }

    /// Per-row mean squared reconstruction error.
    pub fn reconstruction_errors(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        let recon = self.forward_batch(inputs)?;
        let n = inputs.ncols() as f64;
        let diff = recon - inputs;
        Ok(diff.mapv(|d| d * d).sum_axis(Axis(1)) / n)
    }

    pub(crate) fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// Rounds every parameter to the nearest f32, the precision of the model file.
    pub fn round_to_f32(&mut self) {
        for layer in &mut self.layers {
            layer.weights.mapv_inplace(|v| v as f32 as f64);
            layer.bias.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

/// Largest f32 strictly below `sqrt(6 / (fan_in + fan_out))`.
fn glorot_limit_f32(fan_in: usize, fan_out: usize) -> f32 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut l = limit as f32;
    while l as f64 >= limit {
        l = f32::from_bits(l.to_bits() - 1);
    }
    l
}

/// The detector architecture with seeded Glorot initialization.
pub fn init_model(seed: u64) -> AutoEncoderModel {
    AutoEncoderModel::with_widths(&LAYER_WIDTHS, seed).expect("fixed widths are valid")
}

/// (1/n)·Σ(x_i − y_i)²
pub fn mse_loss(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let sum: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}
