use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_observation, Regressor};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Refinement passes after the ridge solve (iterated Tikhonov). Each pass
/// shrinks the ridge bias in well-determined directions by a factor of
/// about `λ / eigenvalue`; exactly collinear directions stay at zero.
const REFINEMENT_PASSES: usize = 2;

/// Least-squares linear model fit once and frozen afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLinear {
    pub weights: BTreeMap<String, f64>,
    pub intercept: f64,
    pub ridge: f64,
    pub fitted: bool,
}

impl BatchLinear {
    /// Placeholder that predicts 0 until replaced by [`BatchLinear::fit`].
    pub fn unfitted(ridge: f64) -> Self {
        Self { weights: BTreeMap::new(), intercept: 0.0, ridge, fitted: false }
    }

    /// Solves `(XᵀX + λI) w = Xᵀy` over every feature name in the samples
    /// plus an intercept column.
    pub fn fit(samples: &[(FeatureVector, f64)], ridge: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::validation("warm_up", "batch fit needs at least 2 samples"));
        }
        for (x, y) in samples {
            check_observation(x, *y)?;
        }
        let names: Vec<String> = samples
            .iter()
            .flat_map(|(x, _)| x.names().map(str::to_string))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let col: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let d = names.len() + 1;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        let mut row = DVector::<f64>::zeros(d);
        for (x, y) in samples {
            row.fill(0.0);
            for (n, v) in x.iter() {
                row[col[n]] = v;
            }
            row[d - 1] = 1.0;
            gram.ger(1.0, &row, &row, 1.0);
            rhs.axpy(*y, &row, 1.0);
        }
        let regularized = &gram + DMatrix::identity(d, d) * ridge;
        let chol = regularized
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("normal equations with ridge {ridge}")))?;
        let mut w = chol.solve(&rhs);
        for _ in 0..REFINEMENT_PASSES {
            let residual = &rhs - &gram * &w;
            w += chol.solve(&residual);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch fit"));
        }
        Ok(Self {
            weights: names.into_iter().zip(w.iter().copied()).collect(),
            intercept: w[d - 1],
            ridge,
            fitted: true,
        })
    }
}

impl Regressor for BatchLinear {
    fn predict(&self, x: &FeatureVector) -> f64 {
        self.intercept
            + x.iter()
                .map(|(n, v)| self.weights.get(n).copied().unwrap_or(0.0) * v)
                .sum::<f64>()
    }

    /// Frozen: validates the observation and otherwise does nothing.
    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(pairs: &[(&str, f64)], y: f64) -> (FeatureVector, f64) {
        (pairs.iter().map(|(k, v)| (*k, *v)).collect(), y)
    }

    #[test]
    fn exact_line() {
        let s: Vec<_> = (0..10).map(|i| sample(&[("x", i as f64)], 2.0 * i as f64)).collect();
        let m = BatchLinear::fit(&s, DEFAULT_RIDGE).unwrap();
        assert!((m.weights["x"] - 2.0).abs() < 1e-9, "{}", m.weights["x"]);
        assert!(m.intercept.abs() < 1e-9);
    }

    #[test]
    fn duplicate_columns_stay_solvable() {
        let s: Vec<_> = (0..10)
            .map(|i| sample(&[("a", i as f64), ("b", i as f64)], 3.0 * i as f64 + 1.0))
            .collect();
        let m = BatchLinear::fit(&s, DEFAULT_RIDGE).unwrap();
        assert!((m.weights["a"] - m.weights["b"]).abs() < 1e-6);
        assert!((m.weights["a"] + m.weights["b"] - 3.0).abs() < 1e-6);
        assert!((m.predict(&s[4].0) - 13.0).abs() < 1e-6);
    }

    #[test]
    fn learn_is_a_no_op() {
        let s: Vec<_> = (0..5).map(|i| sample(&[("x", i as f64)], i as f64)).collect();
        let mut m = BatchLinear::fit(&s, DEFAULT_RIDGE).unwrap();
        let before = m.clone();
        for (x, _) in &s {
            m.learn(x, 1000.0).unwrap();
        }
        assert_eq!(before, m);
    }

    #[test]
    fn too_few_samples() {
        assert!(BatchLinear::fit(&[sample(&[("x", 1.0)], 1.0)], DEFAULT_RIDGE).is_err());
    }
}
