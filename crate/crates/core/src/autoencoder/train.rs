use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{init_model, Activation, AdamState, AutoEncoderModel};
use crate::dsp::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid training config {self:?}")))
        }
    }
}

/// Loss gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Mean reconstruction MSE over the batch and its exact gradient.
pub fn backprop(model: &AutoEncoderModel, batch: ArrayView2<f64>) -> Result<(f64, Gradients)> {
    model.check_input(batch.ncols())?;
    if batch.nrows() == 0 {
        return Err(Error::EmptyFeatures);
    }
    let layers = model.layers();
    // activations[0] is the input; pre[l] is layer l's pre-activation
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(layers.len() + 1);
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    activations.push(batch.to_owned());
    for layer in layers {
        let z = layer.affine(activations.last().expect("nonempty").view());
        activations.push(layer.activate(z.clone()));
        pre.push(z);
    }
    let output = activations.last().expect("nonempty");
    let diff = output - &batch;
    let count = (batch.nrows() * batch.ncols()) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;

    let mut grad_w = Vec::with_capacity(layers.len());
    let mut grad_b = Vec::with_capacity(layers.len());
    let mut delta = diff * (2.0 / count);
    for (l, layer) in layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            delta.zip_mut_with(&pre[l], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
        }
        grad_w.push(delta.t().dot(&activations[l]));
        grad_b.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            delta = delta.dot(&layer.weights);
        }
    }
    grad_w.reverse();
    grad_b.reverse();
    Ok((
        loss,
        Gradients {
            weights: grad_w,
            biases: grad_b,
        },
    ))
}

/// One Adam step on a batch given as rows. Returns the pre-update loss.
pub fn train_step_rows(
    model: &mut AutoEncoderModel,
    adam: &mut AdamState,
    batch: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (loss, grads) = backprop(model, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            step: adam.step() as usize,
        });
    }
    adam.apply(model, &grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    Ok(loss)
}

pub fn train_step(
    model: &mut AutoEncoderModel,
    adam: &mut AdamState,
    batch: &[FeatureVector],
    cfg: &TrainConfig,
) -> Result<f64> {
    train_step_rows(model, adam, stack(batch, model.input_dim())?.view(), cfg)
}

pub(crate) fn stack(vectors: &[FeatureVector], dim: usize) -> Result<Array2<f64>> {
    if vectors.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let mut out = Array2::zeros((vectors.len(), dim));
    for (mut row, v) in out.outer_iter_mut().zip(vectors) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        row.assign(&ndarray::aview1(v.values()));
    }
    Ok(out)
}

/// Trains the detector on rows of `features` (normal data only).
///
/// Rows are reshuffled every epoch with a generator seeded from `cfg.seed`.
/// The returned model is rounded to f32 precision so that it equals its
/// serialized form; the history holds the mean loss of each epoch.
pub fn train_rows(features: ArrayView2<f64>, cfg: &TrainConfig) -> Result<(AutoEncoderModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = init_model(cfg.seed);
    model.check_input(features.ncols())?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyFeatures);
    }
    let mut adam = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = Array2::zeros((cfg.batch_size.min(n), features.ncols()));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut view = batch.slice_mut(s![..idx.len(), ..]);
            for (mut row, &i) in view.outer_iter_mut().zip(idx) {
                row.assign(&features.row(i));
            }
            let loss = train_step_rows(&mut model, &mut adam, batch.slice(s![..idx.len(), ..]), cfg)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch, step },
                    other => other,
                })?;
            total += loss * idx.len() as f64;
        }
        let mean = total / n as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    model.round_to_f32();
    Ok((model, history))
}

pub fn train(features: &[FeatureVector], cfg: &TrainConfig) -> Result<(AutoEncoderModel, Vec<f64>)> {
    let dim = features.first().map(FeatureVector::len).ok_or(Error::EmptyFeatures)?;
    train_rows(stack(features, dim)?.view(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::DenseLayer;
    use ndarray::Array;

    fn toy_batch(rows: usize, dim: usize, salt: u64) -> Array2<f64> {
        Array2::from_shape_fn((rows, dim), |(i, j)| {
            let h = (i as u64 * 7919 + j as u64 * 104_729 + salt * 31).wrapping_mul(2_654_435_761) % 1000;
            h as f64 / 1000.0
        })
    }

    fn loss_of(model: &AutoEncoderModel, batch: &Array2<f64>) -> f64 {
        backprop(model, batch.view()).unwrap().0
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut model = AutoEncoderModel::with_widths(&[4, 3, 2, 3, 4], 5).unwrap();
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            layer.bias.fill(0.05 * (i as f64 + 1.0));
        }
        let batch = toy_batch(5, 4, 1);
        let (_, grads) = backprop(&model, batch.view()).unwrap();
        let h = 1e-5;
        for l in 0..model.layers().len() {
            for idx in 0..model.layers()[l].weights.len() {
                let (r, c) = (idx / model.layers()[l].in_dim(), idx % model.layers()[l].in_dim());
                let mut plus = model.clone();
                plus.layers_mut()[l].weights[[r, c]] += h;
                let mut minus = model.clone();
                minus.layers_mut()[l].weights[[r, c]] -= h;
                let fd = (loss_of(&plus, &batch) - loss_of(&minus, &batch)) / (2.0 * h);
                let an = grads.weights[l][[r, c]];
                assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) < 1e-4, "w[{l}][{r},{c}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let layer = DenseLayer::new(Array::eye(2), Array1::zeros(2), Activation::Linear).unwrap();
        let mut model = AutoEncoderModel::from_layers(vec![layer]).unwrap();
        let before = model.clone();
        let batch = ndarray::array![[0.5, 0.25]];
        let cfg = TrainConfig::default();
        // shift the targets so the gradient is nonzero
        model.layers_mut()[0].bias[0] = 0.1;
        let start = model.clone();
        let (_, grads) = backprop(&start, batch.view()).unwrap();
        let mut adam = AdamState::new(&model);
        train_step_rows(&mut model, &mut adam, batch.view(), &cfg).unwrap();
        assert_eq!(adam.step(), 1);
        let g = grads.biases[0][0];
        let expected = 0.1 - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
        assert!((model.layers()[0].bias[0] - expected).abs() < 1e-15);
        assert!((model.layers()[0].bias[0] - (0.1 - cfg.learning_rate * g.signum())).abs() < 1e-9);
        // zero-gradient parameter stays put
        assert_eq!(grads.biases[0][1], 0.0);
        assert_eq!(model.layers()[0].bias[1], before.layers()[0].bias[1]);
    }

    #[test]
    fn loss_decreases_on_repeated_vector() {
        let mut model = AutoEncoderModel::with_widths(&[6, 12, 6], 2).unwrap();
        let row: Vec<f64> = (0..6).map(|i| i as f64 / 6.0).collect();
        let batch = Array2::from_shape_fn((8, 6), |(_, j)| row[j]);
        let mut adam = AdamState::new(&model);
        let cfg = TrainConfig::default();
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = train_step_rows(&mut model, &mut adam, batch.view(), &cfg).unwrap();
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let features = toy_batch(10, 256, 3);
        let cfg = TrainConfig {
            epochs: 0,
            seed: 42,
            ..TrainConfig::default()
        };
        let (model, history) = train_rows(features.view(), &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(model, init_model(42));
    }

    #[test]
    fn training_is_deterministic() {
        let features = toy_batch(40, 256, 4);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_rows(features.view(), &cfg).unwrap();
        let b = train_rows(features.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn divergence_is_reported() {
        let model = AutoEncoderModel::with_widths(&[2, 2], 0).unwrap();
        let mut adam = AdamState::new(&model);
        let mut m = model.clone();
        let batch = ndarray::array![[f64::MAX, f64::MAX]];
        assert!(matches!(
            train_step_rows(&mut m, &mut adam, batch.view(), &TrainConfig::default()),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let features = toy_batch(4, 256, 0);
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_rows(features.view(), &cfg).is_err());
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyFeatures)));
    }
}
