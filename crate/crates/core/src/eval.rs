//! Prequential evaluation: every record is scored before anything learns from it.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::correction::{correct, target_of, FactorClamp, SegmentedFactors, Strategy};
use crate::error::{Error, Result};
use crate::features::{dense_feature_names, FeatureVector, Featurizer, Features};
use crate::learners::{BatchLinear, InputBlock, Learner, LearnerSpec, Regressor};
use crate::plan::PlanRecord;

/// `max(y'/ŷ', ŷ'/y')` with both sides clamped to at least one row.
pub fn q_error(y: f64, y_hat: f64) -> Result<f64> {
    if !y_hat.is_finite() || y_hat <= 0.0 || y.is_nan() {
        return Err(Error::NonFinite("q-error input"));
    }
    let (a, b) = (y.max(1.0), y_hat.max(1.0));
    Ok((a / b).max(b / a))
}

/// Mean of the trailing `min(t + 1, w)` values at each position.
pub fn rolling_mean(series: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1, "window must be at least 1");
    let mut window = RollingWindow::new(w);
    series.iter().map(|v| window.push(*v)).collect()
}

/// Trailing window whose mean is recomputed from the retained values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingWindow {
    width: usize,
    values: VecDeque<f64>,
}

impl RollingWindow {
    pub fn new(width: usize) -> Self {
        Self { width: width.max(1), values: VecDeque::new() }
    }

    /// Adds a value and returns the current mean.
    pub fn push(&mut self, v: f64) -> f64 {
        if self.values.len() == self.width {
            self.values.pop_front();
        }
        self.values.push_back(v);
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// One line of the per-step report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    pub step: usize,
    pub bucket: usize,
    pub y: u64,
    pub y_hat_raw: f64,
    pub y_hat_corrected: f64,
    pub z: f64,
    /// Predicted log factor; `ln c` for the running-factor strategies.
    pub z_hat: f64,
    pub q_raw: f64,
    pub q_corrected: f64,
    pub q_raw_roll: f64,
    pub q_corrected_roll: f64,
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "step",
    "bucket",
    "y",
    "y_hat_raw",
    "y_hat_corrected",
    "z",
    "z_hat",
    "q_raw",
    "q_corrected",
    "q_raw_roll",
    "q_corrected_roll",
];

pub fn write_report<W: Write>(rows: &[StreamRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(REPORT_COLUMNS)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(r: R) -> Result<Vec<StreamRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(REPORT_COLUMNS) {
        return Err(Error::validation(
            "report",
            format!("expected columns {}", REPORT_COLUMNS.join(",")),
        ));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub prior_weight: f64,
    pub factor_clamp: FactorClamp,
    pub window: usize,
    pub seed: u64,
}

/// Everything one strategy carries from step to step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    strategy: Strategy,
    inputs: InputBlock,
    featurizer: Featurizer,
    factors: SegmentedFactors,
    learner: Option<Learner>,
    clamp: FactorClamp,
    roll_raw: RollingWindow,
    roll_corrected: RollingWindow,
    pub skipped: u64,
}

impl Pipeline {
    /// `spec` is required exactly when the strategy is a model.
    pub fn new(strategy: Strategy, spec: Option<&LearnerSpec>, options: &PipelineOptions) -> Result<Self> {
        options.factor_clamp.validate()?;
        let (learner, inputs) = match (&strategy, spec) {
            (Strategy::Model(_), Some(spec)) => {
                (Some(spec.build(&dense_feature_names(), options.seed)?), spec.inputs())
            }
            (Strategy::Model(name), None) => {
                return Err(Error::Lookup { kind: "learner", name: name.clone() })
            }
            _ => (None, InputBlock::Dense),
        };
        Ok(Self {
            strategy,
            inputs,
            featurizer: Featurizer::new(options.prior_weight),
            factors: SegmentedFactors::default(),
            learner,
            clamp: options.factor_clamp,
            roll_raw: RollingWindow::new(options.window),
            roll_corrected: RollingWindow::new(options.window),
            skipped: 0,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn learner(&self) -> Option<&Learner> {
        self.learner.as_ref()
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn factors(&self) -> &SegmentedFactors {
        &self.factors
    }

    fn inputs_of(&self, features: &Features) -> FeatureVector {
        match self.inputs {
            InputBlock::Dense => features.dense.clone(),
            InputBlock::OneHot => features.one_hot.clone(),
            InputBlock::DenseAndOneHot => features.dense.merged(&features.one_hot),
        }
    }

    /// Fits a batch learner on `warm_up` and freezes all preprocessing.
    ///
    /// Encoders are first fit on the whole warm-up set, then
    /// every warm-up record is featurized with them and the model is solved.
    pub fn warm_up(&mut self, warm_up: &[PlanRecord], ridge: f64) -> Result<()> {
        let mut targets = Vec::with_capacity(warm_up.len());
        for r in warm_up {
            let z = target_of(r)?;
            let f = self.featurizer.featurize(r);
            self.featurizer.update(&f, z)?;
            targets.push(z);
        }
        self.featurizer.freeze();
        let samples: Vec<(FeatureVector, f64)> = warm_up
            .iter()
            .zip(targets)
            .map(|(r, z)| (self.inputs_of(&self.featurizer.featurize(r)), z))
            .collect();
        self.learner = Some(Learner::Batch(BatchLinear::fit(&samples, ridge)?));
        Ok(())
    }

    /// Predict, score, then learn. On error nothing is updated.
    pub fn step(&mut self, step: usize, bucket: usize, record: &PlanRecord) -> Result<StreamRow> {
        let z = target_of(record)?;
        let est = record.estimated_cardinality;
        let y = record.actual_cardinality;

        let features = self.featurizer.featurize(record);
        let x = self.inputs_of(&features);
        let (factor, z_hat) = match (&self.strategy, &self.learner) {
            (Strategy::None, _) => (1.0, 0.0),
            (Strategy::Global, _) => {
                let c = self.factors.global().value();
                (c, c.ln())
            }
            (Strategy::PerJoinCount, _) => {
                let c = self.factors.value(record.n_joins());
                (c, c.ln())
            }
            (Strategy::Model(_), Some(l)) => {
                let z_hat = l.predict(&x);
                if !z_hat.is_finite() {
                    return Err(Error::NonFinite("model prediction"));
                }
                (self.clamp.factor(z_hat), z_hat)
            }
            (Strategy::Model(name), None) => {
                return Err(Error::Lookup { kind: "learner", name: name.clone() })
            }
        };
        let corrected = correct(est, factor);
        let q_raw = q_error(y as f64, est)?;
        let q_corrected = q_error(y as f64, corrected)?;

        if let Some(l) = &mut self.learner {
            l.learn(&x, z)?;
        }
        self.featurizer.update(&features, z)?;
        self.factors.update(record)?;
        Ok(StreamRow {
            step,
            bucket,
            y,
            y_hat_raw: est,
            y_hat_corrected: corrected,
            z,
            z_hat,
            q_raw,
            q_corrected,
            q_raw_roll: self.roll_raw.push(q_raw),
            q_corrected_roll: self.roll_corrected.push(q_corrected),
        })
    }
}

/// Order statistics of a sample, with linearly interpolated quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Quantile of sorted data, interpolating between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Stats {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            p95: quantile(&s, 0.95),
            p99: quantile(&s, 0.99),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: usize,
    pub end: usize,
    pub corrected: Option<Stats>,
    pub raw: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub steps: usize,
    pub skipped: u64,
    pub corrected: Option<Stats>,
    pub raw: Option<Stats>,
    pub segments: Vec<SegmentSummary>,
}

/// Overall statistics plus one segment between consecutive `boundaries`.
pub fn summarize(strategy: &str, rows: &[StreamRow], skipped: u64, boundaries: &[usize]) -> StrategySummary {
    let col = |rows: &[&StreamRow], f: fn(&StreamRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
    let all: Vec<&StreamRow> = rows.iter().collect();
    let end = rows.last().map_or(0, |r| r.step + 1);
    let mut cuts = vec![0];
    cuts.extend(boundaries.iter().copied().filter(|b| *b > 0 && *b < end));
    cuts.push(end);
    cuts.dedup();
    let segments = cuts
        .windows(2)
        .map(|w| {
            let seg: Vec<&StreamRow> = rows.iter().filter(|r| r.step >= w[0] && r.step < w[1]).collect();
            SegmentSummary {
                start: w[0],
                end: w[1],
                corrected: Stats::of(&col(&seg, |r| r.q_corrected)),
                raw: Stats::of(&col(&seg, |r| r.q_raw)),
            }
        })
        .collect();
    StrategySummary {
        strategy: strategy.to_string(),
        steps: rows.len(),
        skipped,
        corrected: Stats::of(&col(&all, |r| r.q_corrected)),
        raw: Stats::of(&col(&all, |r| r.q_raw)),
        segments,
    }
}

/// Evenly spaced subset of at most `max_points` rows (always keeps the last).
pub fn downsample(rows: &[StreamRow], max_points: usize) -> Vec<StreamRow> {
    if max_points == 0 || rows.len() <= max_points {
        return rows.to_vec();
    }
    let stride = rows.len().div_ceil(max_points);
    let mut out: Vec<StreamRow> = rows.iter().step_by(stride).cloned().collect();
    if out.last() != rows.last() {
        if out.len() == max_points {
            out.pop();
        }
        out.push(rows[rows.len() - 1].clone());
    }
    out
}
