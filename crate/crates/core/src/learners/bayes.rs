use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_observation, FrozenIndex, Regressor};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_PRECISION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "update", rename_all = "snake_case")]
pub enum BayesUpdate {
    /// Exact conjugate update.
    Standard,
    /// Precision and evidence blended as `γ·old + (1−γ)·new`.
    Drift { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    /// Prior precision: `S_0 = α⁻¹ I`.
    pub alpha: f64,
    /// Noise precision.
    pub beta: f64,
    pub update: BayesUpdate,
    /// Append a constant input of 1.
    pub intercept: bool,
    /// Eigenvalues of the precision are kept at or above this. The smoothed
    /// update shrinks precision geometrically in directions the inputs stop
    /// exciting; without a floor the covariance overflows.
    pub precision_floor: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            update: BayesUpdate::Standard,
            intercept: true,
            precision_floor: DEFAULT_PRECISION_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BayesDiagnostics {
    /// Covariance recomputed from the precision after a failed rank-1 update.
    pub refactorizations: u64,
    /// Updates where the precision floor was applied.
    pub floored: u64,
}

/// Bayesian linear regression with a Gaussian weight prior, updated one
/// observation at a time. Both the precision `P` and the covariance
/// `S = P⁻¹` are kept; `S` follows rank-one Sherman–Morrison updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesLinear {
    config: BayesConfig,
    index: FrozenIndex,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    pub diagnostics: BayesDiagnostics,
}

impl BayesLinear {
    pub fn new(input_names: &[String], config: BayesConfig) -> Self {
        let index = FrozenIndex::new(input_names);
        let d = index.dim() + usize::from(config.intercept);
        Self {
            config,
            index,
            mean: DVector::zeros(d),
            covariance: DMatrix::identity(d, d) / config.alpha,
            precision: DMatrix::identity(d, d) * config.alpha,
            diagnostics: BayesDiagnostics::default(),
        }
    }

    pub fn config(&self) -> &BayesConfig {
        &self.config
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn ignored_features(&self) -> u64 {
        self.index.ignored
    }

    fn input(&self, x: &FeatureVector) -> (DVector<f64>, u64) {
        let (mut v, unknown) = self.index.project(x);
        if self.config.intercept {
            v.push(1.0);
        }
        (DVector::from_vec(v), unknown)
    }

    /// Predictive mean `mᵀx` and variance `1/β + xᵀSx`.
    pub fn predictive(&self, x: &FeatureVector) -> (f64, f64) {
        let (x, _) = self.input(x);
        self.predictive_raw(&x)
    }

    fn predictive_raw(&self, x: &DVector<f64>) -> (f64, f64) {
        let mu = self.mean.dot(x);
        let var = 1.0 / self.config.beta + x.dot(&(&self.covariance * x));
        (mu, var)
    }

    /// One update on an already projected input.
    pub fn update_raw(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        let beta = self.config.beta;
        let (gamma, weight) = match self.config.update {
            BayesUpdate::Standard => (1.0, beta),
            BayesUpdate::Drift { gamma } => (gamma, (1.0 - gamma) * beta),
        };
        if weight == 0.0 || (gamma == 1.0 && x.iter().all(|v| *v == 0.0)) {
            return Ok(());
        }
        let evidence = &self.precision * &self.mean * gamma + x * (weight * y);
        let precision = &self.precision * gamma + x * x.transpose() * weight;
        let covariance = if gamma == 0.0 {
            precision
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular("precision is rank deficient with no smoothing".into()))?
                .inverse()
        } else {
            let a = &self.covariance / gamma;
            let ax = &a * x;
            let denom = 1.0 + weight * x.dot(&ax);
            let mut s = a - &ax * ax.transpose() * (weight / denom);
            s = (&s + s.transpose()) * 0.5;
            if s.diagonal().iter().any(|v| v.is_nan() || *v <= 0.0 || v.is_infinite()) {
                self.diagnostics.refactorizations += 1;
                precision
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Singular("precision lost positive definiteness".into()))?
                    .inverse()
            } else {
                s
            }
        };
        let (precision, covariance) = self.apply_floor(precision, covariance);
        let mean = &covariance * evidence;
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("posterior update"));
        }
        self.precision = precision;
        self.covariance = covariance;
        self.mean = mean;
        Ok(())
    }

    fn apply_floor(&mut self, precision: DMatrix<f64>, covariance: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let floor = self.config.precision_floor;
        if floor <= 0.0 || precision.nrows() == 0 {
            return (precision, covariance);
        }
        // trace(S) bounds 1/λ_min(P) from above, so a small trace rules out
        // any eigenvalue below the floor without a decomposition.
        if covariance.trace() * floor <= 1.0 {
            return (precision, covariance);
        }
        let eig = precision.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|l| *l >= floor) {
            return (precision, covariance);
        }
        self.diagnostics.floored += 1;
        let clamped = eig.eigenvalues.map(|l| l.max(floor));
        let q = &eig.eigenvectors;
        let p = q * DMatrix::from_diagonal(&clamped) * q.transpose();
        let s = q * DMatrix::from_diagonal(&clamped.map(|l| 1.0 / l)) * q.transpose();
        ((&p + p.transpose()) * 0.5, (&s + s.transpose()) * 0.5)
    }
}

impl Regressor for BayesLinear {
    fn predict(&self, x: &FeatureVector) -> f64 {
        self.predictive(x).0
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)?;
        let (v, unknown) = self.input(x);
        self.update_raw(&v, y)?;
        self.index.ignored += unknown;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(update: BayesUpdate) -> BayesLinear {
        BayesLinear::new(
            &["x".to_string()],
            BayesConfig { update, intercept: false, ..BayesConfig::default() },
        )
    }

    fn x(v: f64) -> FeatureVector {
        [("x", v)].into_iter().collect()
    }

    #[test]
    fn one_dimensional_standard_step() {
        let mut b = one_d(BayesUpdate::Standard);
        b.learn(&x(1.0), 1.0).unwrap();
        assert_eq!(b.covariance()[(0, 0)], 0.5);
        assert_eq!(b.mean()[0], 0.5);
    }

    #[test]
    fn zero_input_changes_nothing() {
        let mut b = one_d(BayesUpdate::Standard);
        b.learn(&x(1.0), 3.0).unwrap();
        let before = b.clone();
        b.learn(&x(0.0), 100.0).unwrap();
        assert_eq!(before.mean(), b.mean());
        assert_eq!(before.covariance(), b.covariance());
    }

    #[test]
    fn gamma_one_never_moves() {
        let mut b = one_d(BayesUpdate::Drift { gamma: 1.0 });
        let before = b.clone();
        for i in 0..100 {
            b.learn(&x(i as f64 * 0.1), i as f64).unwrap();
        }
        assert_eq!(before, b);
    }

    #[test]
    fn gamma_zero_memorizes_last_sample() {
        let mut b = one_d(BayesUpdate::Drift { gamma: 0.0 });
        b.learn(&x(1.0), 2.0).unwrap();
        b.learn(&x(1.0), 5.0).unwrap();
        assert_eq!(b.covariance()[(0, 0)], 1.0);
        assert_eq!(b.mean()[0], 5.0);
    }

    #[test]
    fn gamma_zero_with_zero_input_is_singular() {
        let mut b = one_d(BayesUpdate::Drift { gamma: 0.0 });
        assert!(matches!(b.learn(&x(0.0), 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn gamma_half_worked_step() {
        let mut b = one_d(BayesUpdate::Drift { gamma: 0.5 });
        b.learn(&x(1.0), 2.0).unwrap();
        assert_eq!(b.precision()[(0, 0)], 1.0);
        assert_eq!(b.covariance()[(0, 0)], 1.0);
        assert_eq!(b.mean()[0], 1.0);
    }

    #[test]
    fn fresh_predictive() {
        let b = BayesLinear::new(
            &["a".to_string(), "b".to_string()],
            BayesConfig { alpha: 2.0, beta: 4.0, intercept: false, ..BayesConfig::default() },
        );
        let (mu, var) = b.predictive(&[("a", 1.0), ("b", 2.0)].into_iter().collect());
        assert_eq!(mu, 0.0);
        assert!((var - (0.25 + 5.0 / 2.0)).abs() < 1e-15);
        assert_eq!(b.predictive(&FeatureVector::new()).1, 0.25);
    }

    #[test]
    fn variance_shrinks_with_repetition() {
        let mut b = BayesLinear::new(&["a".to_string()], BayesConfig::default());
        let xv = [("a", 0.7)].into_iter().collect();
        let mut last = b.predictive(&xv).1;
        for _ in 0..100 {
            b.learn(&xv, 1.0).unwrap();
            let v = b.predictive(&xv).1;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn floor_keeps_unexcited_directions_bounded() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let mut b = BayesLinear::new(&names, BayesConfig { update: BayesUpdate::Drift { gamma: 0.7 }, ..BayesConfig::default() });
        let xv: FeatureVector = [("a", 1.0)].into_iter().collect();
        for _ in 0..5000 {
            b.learn(&xv, 2.0).unwrap();
        }
        assert!(b.covariance().iter().all(|v| v.is_finite() && v.abs() <= 1.0 / DEFAULT_PRECISION_FLOOR * 1.01));
        assert!(b.diagnostics.floored > 0);
        assert!((b.predict(&xv) - 2.0).abs() < 1e-6);
    }
}
