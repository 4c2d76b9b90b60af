use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_observation, FrozenIndex, Regressor};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: vec![30, 30], learning_rate: 0.01, seed: 0 }
    }
}

/// Fully connected ReLU network with one linear output, trained by Adam.
///
/// All parameters live in one flat vector; layer `l` stores its
/// `out × in` weights row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    index: FrozenIndex,
    sizes: Vec<usize>,
    learning_rate: f64,
    params: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

struct Trace {
    /// Activations per layer, input first.
    activations: Vec<Vec<f64>>,
    /// Pre-activations per non-input layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new(input_names: &[String], config: &MlpConfig) -> Self {
        let index = FrozenIndex::new(input_names);
        let mut sizes = vec![index.dim()];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let sd = (2.0 / n_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, sd).expect("positive sd");
            params.extend((0..n_in * n_out).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        let n = params.len();
        Self {
            index,
            sizes,
            learning_rate: config.learning_rate,
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Number of Adam updates applied.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn ignored_features(&self) -> u64 {
        self.index.ignored
    }

    fn forward(&self, input: Vec<f64>) -> Trace {
        let mut activations = vec![input];
        let mut pre = Vec::new();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let a = &activations[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            let out = if l + 1 < n_layers { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            pre.push(z);
            activations.push(out);
            offset += n_in * n_out + n_out;
        }
        Trace { activations, pre }
    }

    /// ½(ŷ − y)² for a projected input.
    pub fn loss(&self, x: &FeatureVector, y: f64) -> f64 {
        let e = self.predict(x) - y;
        0.5 * e * e
    }

    /// Gradient of ½(ŷ − y)² with respect to the flat parameter vector.
    pub fn loss_gradient(&self, x: &FeatureVector, y: f64) -> Vec<f64> {
        let (input, _) = self.index.project(x);
        let trace = self.forward(input);
        let n_layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let y_hat = trace.activations[n_layers][0];
        let mut delta = vec![y_hat - y];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let a = &trace.activations[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[base + o * n_in + i] = delta[o] * a[i];
                }
                grad[base + n_in * n_out + o] = delta[o];
            }
            if l > 0 {
                let w = &self.params[base..base + n_in * n_out];
                let z = &trace.pre[l - 1];
                delta = (0..n_in)
                    .map(|i| {
                        if z[i] > 0.0 {
                            (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        grad
    }
}

impl Regressor for Mlp {
    fn predict(&self, x: &FeatureVector) -> f64 {
        let (input, _) = self.index.project(x);
        let trace = self.forward(input);
        trace.activations[self.sizes.len() - 1][0]
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)?;
        let grad = self.loss_gradient(x, y);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("network gradient"));
        }
        let (_, unknown) = self.index.project(x);
        self.index.ignored += unknown;
        self.steps += 1;
        let t = self.steps as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for (i, g) in grad.into_iter().enumerate() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            self.params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }
}
