//! Correction factors applied to a cost model's cardinality estimate.
//!
//! The global factor `c` and the per-join-count factors `c_j` are running
//! means of the raw ratio `y / ŷ`. Learned models instead predict the log
//! ratio `z = ln(y / ŷ)` and the correction multiplies by `exp(ẑ)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RunningMean;
use crate::plan::PlanRecord;

/// True cardinality with empty results counted as one row.
pub fn clamped_rows(actual: u64) -> f64 {
    (actual as f64).max(1.0)
}

fn check_estimate(record: &PlanRecord) -> Result<f64> {
    let est = record.estimated_cardinality;
    if est > 0.0 && est.is_finite() {
        Ok(est)
    } else {
        Err(Error::validation(
            "estimated_cardinality",
            format!("plan `{}` has non-positive estimate {est}", record.plan_id),
        ))
    }
}

/// Learning target `z = ln(max(y, 1) / ŷ)`.
pub fn target_of(record: &PlanRecord) -> Result<f64> {
    let est = check_estimate(record)?;
    Ok((clamped_rows(record.actual_cardinality) / est).ln())
}

/// Raw ratio `max(y, 1) / ŷ`.
pub fn ratio_of(record: &PlanRecord) -> Result<f64> {
    let est = check_estimate(record)?;
    Ok(clamped_rows(record.actual_cardinality) / est)
}

/// Running mean of raw ratios; 1 before any update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalFactor(RunningMean);

impl GlobalFactor {
    pub fn value(&self) -> f64 {
        if self.0.count == 0 {
            1.0
        } else {
            self.0.mean
        }
    }

    pub fn count(&self) -> u64 {
        self.0.count
    }

    pub fn update(&mut self, record: &PlanRecord) -> Result<()> {
        self.0.push(ratio_of(record)?);
        Ok(())
    }
}

/// One running ratio mean per join count, falling back to the global factor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFactors {
    global: GlobalFactor,
    per_join: BTreeMap<usize, GlobalFactor>,
}

impl SegmentedFactors {
    pub fn global(&self) -> &GlobalFactor {
        &self.global
    }

    /// `c_j`, or `c` when no plan with `joins` joins has been seen.
    pub fn value(&self, joins: usize) -> f64 {
        self.per_join
            .get(&joins)
            .map_or_else(|| self.global.value(), GlobalFactor::value)
    }

    pub fn update(&mut self, record: &PlanRecord) -> Result<()> {
        self.global.update(record)?;
        self.per_join.entry(record.n_joins()).or_default().update(record)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    None,
    Global,
    PerJoinCount,
    /// Learned correction by the named learner.
    Model(String),
}

impl Strategy {
    /// File-name friendly form, e.g. `model-fm`.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }

    pub fn model_name(&self) -> Option<&str> {
        match self {
            Strategy::Model(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::None => f.write_str("none"),
            Strategy::Global => f.write_str("global"),
            Strategy::PerJoinCount => f.write_str("per-join"),
            Strategy::Model(n) => write!(f, "model:{n}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "global" => Ok(Strategy::Global),
            "per-join" => Ok(Strategy::PerJoinCount),
            _ => match s.strip_prefix("model:") {
                Some(name) if !name.is_empty() => Ok(Strategy::Model(name.to_string())),
                _ => Err(Error::validation(
                    "strategy",
                    format!("`{s}` is not one of none, global, per-join, model:<name>"),
                )),
            },
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Bounds on a model-predicted factor `exp(ẑ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorClamp {
    pub min: f64,
    pub max: f64,
}

impl Default for FactorClamp {
    fn default() -> Self {
        Self { min: 1e-4, max: 1e4 }
    }
}

impl FactorClamp {
    pub fn validate(&self) -> Result<()> {
        if self.min > 0.0 && self.min <= self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(Error::validation("factor_clamp", "need 0 < min ≤ max < ∞"))
        }
    }

    /// `exp(ẑ)` clamped. A NaN prediction yields NaN.
    pub fn factor(&self, z_hat: f64) -> f64 {
        z_hat.exp().clamp(self.min, self.max)
    }
}

/// `ŷ · factor`, at least one row.
pub fn correct(estimate: f64, factor: f64) -> f64 {
    (estimate * factor).max(1.0)
}
