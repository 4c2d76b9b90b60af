use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_observation, Regressor};
use crate::error::Result;
use crate::features::FeatureVector;

/// Linear model `ŷ = b + Σ w_j x_j` trained by plain SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSgd {
    pub weights: BTreeMap<String, f64>,
    pub intercept: f64,
    pub learning_rate: f64,
}

impl LinearSgd {
    pub fn new(learning_rate: f64) -> Self {
        Self { weights: BTreeMap::new(), intercept: 0.0, learning_rate }
    }
}

impl Regressor for LinearSgd {
    fn predict(&self, x: &FeatureVector) -> f64 {
        self.intercept
            + x.iter()
                .map(|(name, v)| self.weights.get(name).copied().unwrap_or(0.0) * v)
                .sum::<f64>()
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)?;
        let g = self.predict(x) - y;
        let step = self.learning_rate * g;
        for (name, v) in x.iter() {
            *self.weights.entry(name.to_string()).or_insert(0.0) -= step * v;
        }
        self.intercept -= step;
        Ok(())
    }
}
