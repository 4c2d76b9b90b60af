//! Online regressors behind one predict-one / learn-one contract.
//!
//! Every learner minimizes ½ squared error with a constant step size, so
//! the gradient with respect to a weight is `(ŷ − y)·x`.

mod batch;
mod bayes;
mod fm;
mod htree;
mod linear;
mod mlp;

pub use batch::{BatchLinear, DEFAULT_RIDGE};
pub use bayes::{BayesConfig, BayesLinear, BayesUpdate};
pub use fm::{FactorizationMachine, FmConfig};
pub use htree::{HoeffdingTree, HoeffdingTreeConfig};
pub use linear::LinearSgd;
pub use mlp::{Mlp, MlpConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub trait Regressor {
    /// Pure: never changes the model.
    fn predict(&self, x: &FeatureVector) -> f64;

    /// Consumes one observation. Non-finite inputs are rejected and leave
    /// the model untouched.
    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()>;
}

pub(crate) fn check_observation(x: &FeatureVector, y: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("feature vector"));
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("target"));
    }
    Ok(())
}

/// Name → column map fixed at construction, for learners with a fixed input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenIndex {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Feature names seen at predict/learn time that are not in the map.
    #[serde(default)]
    pub ignored: u64,
}

impl FrozenIndex {
    pub fn new(names: &[String]) -> Self {
        let mut index = BTreeMap::new();
        let mut kept = Vec::new();
        for n in names {
            if !index.contains_key(n) {
                index.insert(n.clone(), kept.len());
                kept.push(n.clone());
            }
        }
        Self { names: kept, index, ignored: 0 }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Dense projection plus the number of unknown names dropped.
    pub fn project(&self, x: &FeatureVector) -> (Vec<f64>, u64) {
        let mut out = vec![0.0; self.names.len()];
        let mut unknown = 0;
        for (name, v) in x.iter() {
            match self.index.get(name) {
                Some(&i) => out[i] = v,
                None => unknown += 1,
            }
        }
        (out, unknown)
    }
}

/// Which parts of the featurizer output a learner consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputBlock {
    Dense,
    OneHot,
    DenseAndOneHot,
}

/// Learner selection plus hyperparameters, as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Linear {
        #[serde(default = "default_sgd_lr")]
        learning_rate: f64,
        #[serde(default = "default_linear_inputs")]
        inputs: InputBlock,
    },
    Fm {
        #[serde(default = "default_fm_factors")]
        factors: usize,
        #[serde(default = "default_sgd_lr")]
        learning_rate: f64,
        #[serde(default = "default_fm_init")]
        init_scale: f64,
    },
    Mlp {
        #[serde(default = "default_mlp_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_mlp_lr")]
        learning_rate: f64,
    },
    Htree {
        #[serde(default = "default_grace")]
        grace_period: u64,
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    Bayes {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        beta: f64,
        /// Smoothing; absent means the standard conjugate update.
        #[serde(default)]
        gamma: Option<f64>,
    },
    BatchLinear {
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
}

fn default_sgd_lr() -> f64 {
    0.1
}
fn default_linear_inputs() -> InputBlock {
    InputBlock::Dense
}
fn default_fm_factors() -> usize {
    10
}
fn default_fm_init() -> f64 {
    0.01
}
fn default_mlp_hidden() -> Vec<usize> {
    vec![30, 30]
}
fn default_mlp_lr() -> f64 {
    0.01
}
fn default_grace() -> u64 {
    200
}
fn default_depth() -> usize {
    5
}
fn default_delta() -> f64 {
    1e-5
}
fn default_tau() -> f64 {
    0.05
}
fn default_bins() -> usize {
    16
}
fn one() -> f64 {
    1.0
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl LearnerSpec {
    /// Short names accepted on the command line (`model:<name>`).
    pub fn from_name(name: &str) -> Option<Self> {
        let spec = match name {
            "linear" => LearnerSpec::Linear { learning_rate: 0.1, inputs: default_linear_inputs() },
            "fm" => LearnerSpec::Fm { factors: 10, learning_rate: 0.1, init_scale: 0.01 },
            "mlp" => LearnerSpec::Mlp { hidden: default_mlp_hidden(), learning_rate: 0.01 },
            "htree" => LearnerSpec::Htree {
                grace_period: 200,
                max_depth: 5,
                delta: 1e-5,
                tau: 0.05,
                bins: 16,
            },
            "bayes" => LearnerSpec::Bayes { alpha: 1.0, beta: 1.0, gamma: None },
            "bayes-drift" => LearnerSpec::Bayes { alpha: 1.0, beta: 1.0, gamma: Some(0.7) },
            "batch-linear" => LearnerSpec::BatchLinear { ridge: DEFAULT_RIDGE },
            _ => return None,
        };
        Some(spec)
    }

    pub const NAMES: [&'static str; 7] = ["linear", "fm", "mlp", "htree", "bayes", "bayes-drift", "batch-linear"];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Linear { .. } => "linear",
            LearnerSpec::Fm { .. } => "fm",
            LearnerSpec::Mlp { .. } => "mlp",
            LearnerSpec::Htree { .. } => "htree",
            LearnerSpec::Bayes { gamma: None, .. } => "bayes",
            LearnerSpec::Bayes { gamma: Some(_), .. } => "bayes-drift",
            LearnerSpec::BatchLinear { .. } => "batch-linear",
        }
    }

    pub fn inputs(&self) -> InputBlock {
        match self {
            LearnerSpec::Linear { inputs, .. } => *inputs,
            LearnerSpec::Fm { .. } => InputBlock::OneHot,
            _ => InputBlock::Dense,
        }
    }

    /// Batch learners are fit once on a warm-up set and never updated.
    pub fn is_batch(&self) -> bool {
        matches!(self, LearnerSpec::BatchLinear { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be a positive number, got {v}")))
            }
        };
        match self {
            LearnerSpec::Linear { learning_rate, .. } => positive("learning_rate", *learning_rate),
            LearnerSpec::Fm { factors, learning_rate, init_scale } => {
                if *factors == 0 {
                    return Err(Error::validation("factors", "must be at least 1"));
                }
                positive("learning_rate", *learning_rate)?;
                positive("init_scale", *init_scale)
            }
            LearnerSpec::Mlp { hidden, learning_rate } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::validation("hidden", "layer sizes must be non-empty and positive"));
                }
                positive("learning_rate", *learning_rate)
            }
            LearnerSpec::Htree { grace_period, delta, tau, bins, .. } => {
                if *grace_period == 0 || *bins < 2 {
                    return Err(Error::validation("htree", "grace_period ≥ 1 and bins ≥ 2 required"));
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::validation("delta", "must lie in (0, 1)"));
                }
                if tau.is_nan() || *tau < 0.0 {
                    return Err(Error::validation("tau", "must be ≥ 0"));
                }
                Ok(())
            }
            LearnerSpec::Bayes { alpha, beta, gamma } => {
                positive("alpha", *alpha)?;
                positive("beta", *beta)?;
                match gamma {
                    Some(g) if !(0.0..=1.0).contains(g) => Err(Error::validation("gamma", "must lie in [0, 1]")),
                    _ => Ok(()),
                }
            }
            LearnerSpec::BatchLinear { ridge } => {
                if *ridge >= 0.0 && ridge.is_finite() {
                    Ok(())
                } else {
                    Err(Error::validation("ridge", "must be ≥ 0"))
                }
            }
        }
    }

    /// Builds an untrained online learner. `dense_names` fixes the input
    /// columns of fixed-width learners. Batch specs need [`BatchLinear::fit`].
    pub fn build(&self, dense_names: &[String], seed: u64) -> Result<Learner> {
        self.validate()?;
        Ok(match self {
            LearnerSpec::Linear { learning_rate, .. } => Learner::Linear(LinearSgd::new(*learning_rate)),
            LearnerSpec::Fm { factors, learning_rate, init_scale } => Learner::Fm(FactorizationMachine::new(FmConfig {
                factors: *factors,
                learning_rate: *learning_rate,
                init_scale: *init_scale,
                seed,
            })),
            LearnerSpec::Mlp { hidden, learning_rate } => Learner::Mlp(Mlp::new(
                dense_names,
                &MlpConfig { hidden: hidden.clone(), learning_rate: *learning_rate, seed },
            )),
            LearnerSpec::Htree { grace_period, max_depth, delta, tau, bins } => {
                Learner::Htree(HoeffdingTree::new(HoeffdingTreeConfig {
                    grace_period: *grace_period,
                    max_depth: *max_depth,
                    delta: *delta,
                    tau: *tau,
                    bins: *bins,
                }))
            }
            LearnerSpec::Bayes { alpha, beta, gamma } => {
                let update = gamma.map_or(BayesUpdate::Standard, |g| BayesUpdate::Drift { gamma: g });
                Learner::Bayes(BayesLinear::new(
                    dense_names,
                    BayesConfig { alpha: *alpha, beta: *beta, update, ..BayesConfig::default() },
                ))
            }
            LearnerSpec::BatchLinear { ridge } => Learner::Batch(BatchLinear::unfitted(*ridge)),
        })
    }
}

/// Any of the concrete learners, serializable for state snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Linear(LinearSgd),
    Fm(FactorizationMachine),
    Mlp(Mlp),
    Htree(HoeffdingTree),
    Bayes(BayesLinear),
    Batch(BatchLinear),
}

impl Learner {
    /// Predictive variance, for learners that have one.
    pub fn predictive_variance(&self, x: &FeatureVector) -> Option<f64> {
        match self {
            Learner::Bayes(b) => Some(b.predictive(x).1),
            _ => None,
        }
    }

    /// Count of feature names dropped because they were outside a frozen index.
    pub fn ignored_features(&self) -> u64 {
        match self {
            Learner::Mlp(m) => m.ignored_features(),
            Learner::Bayes(b) => b.ignored_features(),
            _ => 0,
        }
    }
}

impl Regressor for Learner {
    fn predict(&self, x: &FeatureVector) -> f64 {
        match self {
            Learner::Linear(m) => m.predict(x),
            Learner::Fm(m) => m.predict(x),
            Learner::Mlp(m) => m.predict(x),
            Learner::Htree(m) => m.predict(x),
            Learner::Bayes(m) => m.predict(x),
            Learner::Batch(m) => m.predict(x),
        }
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        match self {
            Learner::Linear(m) => m.learn(x, y),
            Learner::Fm(m) => m.learn(x, y),
            Learner::Mlp(m) => m.learn(x, y),
            Learner::Htree(m) => m.learn(x, y),
            Learner::Bayes(m) => m.learn(x, y),
            Learner::Batch(m) => m.learn(x, y),
        }
    }
}
