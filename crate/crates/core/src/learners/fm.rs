use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_observation, Regressor};
use crate::error::Result;
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmConfig {
    pub factors: usize,
    pub learning_rate: f64,
    /// Standard deviation of the initial latent entries.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for FmConfig {
    fn default() -> Self {
        Self { factors: 10, learning_rate: 0.1, init_scale: 0.01, seed: 0 }
    }
}

/// Second-order factorization machine over sparse named features.
///
/// A feature's latent vector is drawn from a Gaussian seeded by the model
/// seed and the feature name, so an unseen feature has a well-defined
/// vector before it is ever stored and `predict` stays read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationMachine {
    pub config: FmConfig,
    pub w0: f64,
    pub w: BTreeMap<String, f64>,
    pub v: BTreeMap<String, Vec<f64>>,
}

/// Partial derivatives of the prediction with respect to every parameter
/// touched by one input.
#[derive(Debug, Clone, PartialEq)]
pub struct FmGradient {
    pub w0: f64,
    pub w: BTreeMap<String, f64>,
    pub v: BTreeMap<String, Vec<f64>>,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the seed bytes followed by the name bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl FactorizationMachine {
    pub fn new(config: FmConfig) -> Self {
        assert!(config.factors >= 1, "at least one latent factor");
        Self { config, w0: 0.0, w: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn initial_latent(&self, name: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.config.seed, name));
        let normal = Normal::new(0.0, self.config.init_scale).expect("init scale is positive");
        (0..self.config.factors).map(|_| normal.sample(&mut rng)).collect()
    }

    fn latent(&self, name: &str) -> std::borrow::Cow<'_, [f64]> {
        match self.v.get(name) {
            Some(v) => std::borrow::Cow::Borrowed(v),
            None => std::borrow::Cow::Owned(self.initial_latent(name)),
        }
    }

    fn active(&self, x: &FeatureVector) -> Vec<(String, f64, Vec<f64>)> {
        x.iter()
            .map(|(n, v)| (n.to_string(), v, self.latent(n).into_owned()))
            .collect()
    }

    /// `Σ_j v_jf x_j` for every factor f.
    fn factor_sums(&self, active: &[(String, f64, Vec<f64>)]) -> Vec<f64> {
        let mut sums = vec![0.0; self.config.factors];
        for (_, x, v) in active {
            for (s, vf) in sums.iter_mut().zip(v) {
                *s += vf * x;
            }
        }
        sums
    }

    /// Reference evaluation with an explicit loop over feature pairs.
    pub fn predict_naive(&self, x: &FeatureVector) -> f64 {
        let active = self.active(x);
        let mut y = self.w0;
        for (n, xv, _) in &active {
            y += self.w.get(n).copied().unwrap_or(0.0) * xv;
        }
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let dot: f64 = active[i].2.iter().zip(&active[j].2).map(|(a, b)| a * b).sum();
                y += dot * active[i].1 * active[j].1;
            }
        }
        y
    }

    pub fn gradient(&self, x: &FeatureVector) -> FmGradient {
        let active = self.active(x);
        let sums = self.factor_sums(&active);
        FmGradient {
            w0: 1.0,
            w: active.iter().map(|(n, xv, _)| (n.clone(), *xv)).collect(),
            v: active
                .iter()
                .map(|(n, xv, v)| {
                    let g = sums.iter().zip(v).map(|(s, vf)| xv * (s - vf * xv)).collect();
                    (n.clone(), g)
                })
                .collect(),
        }
    }
}

impl Regressor for FactorizationMachine {
    fn predict(&self, x: &FeatureVector) -> f64 {
        let active = self.active(x);
        let sums = self.factor_sums(&active);
        let mut linear = self.w0;
        let mut squares = vec![0.0; self.config.factors];
        for (n, xv, v) in &active {
            linear += self.w.get(n).copied().unwrap_or(0.0) * xv;
            for (sq, vf) in squares.iter_mut().zip(v) {
                *sq += vf * vf * xv * xv;
            }
        }
        let pairwise: f64 = sums.iter().zip(&squares).map(|(s, sq)| s * s - sq).sum();
        linear + 0.5 * pairwise
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)?;
        let step = self.config.learning_rate * (self.predict(x) - y);
        let grad = self.gradient(x);
        self.w0 -= step * grad.w0;
        for (n, g) in grad.w {
            *self.w.entry(n).or_insert(0.0) -= step * g;
        }
        for (n, g) in grad.v {
            let current = self.latent(&n).into_owned();
            let updated = current.iter().zip(&g).map(|(v, gv)| v - step * gv).collect();
            self.v.insert(n, updated);
        }
        Ok(())
    }
}
