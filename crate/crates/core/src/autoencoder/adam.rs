use ndarray::{Array1, Array2, Zip};

use super::train::Gradients;
use super::AutoEncoderModel;

/// First and second moment estimates for every parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    weight_moments: Vec<(Array2<f64>, Array2<f64>)>,
    bias_moments: Vec<(Array1<f64>, Array1<f64>)>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &AutoEncoderModel) -> Self {
        Self {
            weight_moments: model
                .layers()
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weights.raw_dim()),
                        Array2::zeros(l.weights.raw_dim()),
                    )
                })
                .collect(),
            bias_moments: model
                .layers()
                .iter()
                .map(|l| (Array1::zeros(l.bias.len()), Array1::zeros(l.bias.len())))
                .collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `model` in the direction of `grads`.
    pub fn apply(
        &mut self,
        model: &mut AutoEncoderModel,
        grads: &Gradients,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        let update = |param: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *param -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            let (wm, wv) = &mut self.weight_moments[i];
            Zip::from(&mut layer.weights)
                .and(&grads.weights[i])
                .and(wm)
                .and(wv)
                .for_each(update);
            let (bm, bv) = &mut self.bias_moments[i];
            Zip::from(&mut layer.bias)
                .and(&grads.biases[i])
                .and(bm)
                .and(bv)
                .for_each(update);
        }
    }
}
