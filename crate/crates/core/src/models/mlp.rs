//! Fully connected ReLU network with a two-logit softmax output, trained with
//! mini-batch Adam on class-weighted cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    /// Loss weight of Late rows; OnTime rows weigh 1.
    pub late_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![32, 32, 16, 16],
            late_weight: 3.0,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// He-initialized network `inputs -> hidden... -> 2`.
    pub fn init(inputs: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0].max(1) as f64).sqrt()).unwrap();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias, layer by layer.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    /// Pre-activations of every layer; the last entry holds the two logits.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let z = l.forward(&a);
            if k + 1 < self.layers.len() {
                a = z.iter().map(|v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        out
    }

    pub fn proba_row(&self, x: &[f64]) -> f64 {
        let z = self.forward_all(x).pop().unwrap();
        sigmoid(z[1] - z[0])
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.proba_row(r)).collect()
    }

    /// Weighted mean cross-entropy over `rows` and its gradient in
    /// `params_flat` order.
    pub fn loss_and_grad(&self, x: &Matrix, late: &[bool], rows: &[usize], late_weight: f64) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let total_w: f64 = rows.iter().map(|&i| if late[i] { late_weight } else { 1.0 }).sum();
        let mut loss = 0.0;
        for &i in rows {
            let input = x.row(i);
            let w = if late[i] { late_weight } else { 1.0 } / total_w;
            let zs = self.forward_all(input);
            let logits = zs.last().unwrap();
            let d = logits[1] - logits[0];
            let y = late[i] as u8 as f64;
            // -log softmax of the true class.
            loss += w * (softplus(d) - y * d);
            let p = sigmoid(d);
            let mut delta = vec![w * (1.0 - p - (1.0 - y)), w * (p - y)];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let prev: Vec<f64> = if k == 0 {
                    input.to_vec()
                } else {
                    zs[k - 1].iter().map(|v| v.max(0.0)).collect()
                };
                let (gw, gb) = &mut grads[k];
                for o in 0..layer.outputs {
                    gb[o] += delta[o];
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, a) in row.iter_mut().zip(&prev) {
                        *g += delta[o] * a;
                    }
                }
                if k > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (b, wv) in back.iter_mut().zip(row) {
                            *b += delta[o] * wv;
                        }
                    }
                    for (b, z) in back.iter_mut().zip(&zs[k - 1]) {
                        if *z <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        (loss, flat)
    }

    pub fn fit(data: &Dataset, params: &MlpParams, seed: u64) -> Result<Self> {
        if params.batch_size == 0 || !(params.learning_rate > 0.0) || !(params.late_weight > 0.0) {
            return Err(Error::InvalidParameter(
                "mlp needs batch_size >= 1, learning_rate > 0 and late_weight > 0".into(),
            ));
        }
        if params.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidParameter("hidden layer widths must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::init(data.x.cols(), &params.hidden, rand::Rng::random(&mut rng));
        let late: Vec<bool> = data.y.iter().map(|c| c.is_late()).collect();
        let mut theta = net.params_flat();
        let mut m = vec![0.0; theta.len()];
        let mut v = vec![0.0; theta.len()];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let (loss, g) = net.loss_and_grad(&data.x, &late, batch, params.late_weight);
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!("mlp loss {loss} in epoch {epoch}")));
                }
                step += 1;
                let c1 = 1.0 - b1.powi(step);
                let c2 = 1.0 - b2.powi(step);
                for j in 0..theta.len() {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    theta[j] -= params.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                }
                net.set_params_flat(&theta);
            }
        }
        Ok(net)
    }
}
