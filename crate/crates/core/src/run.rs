//! Run configuration and the benchmark driver.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correction::{FactorClamp, Strategy};
use crate::drift::{cluster_buckets, BucketAssignment, DriftSchedule, TimeScale};
use crate::error::{Error, Result};
use crate::eval::{summarize, write_report, Pipeline, PipelineOptions, StrategySummary, StreamRow};
use crate::features::DEFAULT_PRIOR_WEIGHT;
use crate::learners::LearnerSpec;
use crate::scenario::{read_json, Scenario};
use crate::synth::{generate_database, SynthDatabase};
use crate::workload::{explicit_assignment, generate_workload, QueryTemplate, WorkloadItem};

pub const SNAPSHOT_VERSION: u32 = 1;
/// Mixed into the run seed for the batch warm-up stream.
const WARM_UP_SEED_SALT: u64 = 0x5741_524d_5550;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    /// Give either fractions of the stream or absolute step indices.
    Hard {
        #[serde(default)]
        switch_fracs: Option<Vec<f64>>,
        #[serde(default)]
        switch_points: Option<Vec<usize>>,
    },
    Soft {
        #[serde(default = "default_width")]
        d: f64,
        /// Defaults to `(b + 0.5) / B`.
        #[serde(default)]
        centers: Option<Vec<f64>>,
        #[serde(default)]
        time: TimeScale,
    },
}

fn default_width() -> f64 {
    0.02
}

impl DriftConfig {
    pub fn schedule(&self, n: usize, n_buckets: usize) -> Result<DriftSchedule> {
        let schedule = match self {
            DriftConfig::Hard { switch_fracs: Some(_), switch_points: Some(_) } => {
                return Err(Error::Config("give switch_fracs or switch_points, not both".into()))
            }
            DriftConfig::Hard { switch_fracs: Some(f), .. } => {
                if f.iter().any(|x| !(0.0..1.0).contains(x)) {
                    return Err(Error::Config("switch_fracs must lie in [0, 1)".into()));
                }
                DriftSchedule::Hard { switch_points: f.iter().map(|x| (x * n as f64).round() as usize).collect() }
            }
            DriftConfig::Hard { switch_points, .. } => {
                DriftSchedule::Hard { switch_points: switch_points.clone().unwrap_or_default() }
            }
            DriftConfig::Soft { d, centers, time } => DriftSchedule::Soft {
                centers: centers.clone().unwrap_or_else(|| {
                    (0..n_buckets).map(|b| (b as f64 + 0.5) / n_buckets as f64).collect()
                }),
                width: *d,
                time: *time,
            },
        };
        schedule.validate(n).map_err(|e| Error::Config(e.to_string()))?;
        Ok(schedule)
    }
}

/// Everything needed to reproduce one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of a built-in scenario; alternative to `schema` + `templates`.
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Bucket count when templates carry no explicit bucket.
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    pub strategy: OneOrMany<Strategy>,
    /// Hyperparameters for `model:<name>` strategies, keyed by name.
    #[serde(default)]
    pub learners: BTreeMap<String, LearnerSpec>,
    pub drift: DriftConfig,
    pub n: usize,
    /// Warm-up records for batch learners, drawn from bucket 0.
    #[serde(default)]
    pub warm_up: usize,
    /// Rolling window; defaults to n / 60.
    #[serde(default)]
    pub window: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_prior_weight")]
    pub prior_weight: f64,
    #[serde(default)]
    pub factor_clamp: FactorClamp,
    /// Records a strategy may fail on before the run aborts; defaults to 1% of n.
    #[serde(default)]
    pub max_skipped: Option<u64>,
}

fn default_buckets() -> usize {
    3
}

fn default_prior_weight() -> f64 {
    DEFAULT_PRIOR_WEIGHT
}

impl RunConfig {
    /// Parses a config; relative paths inside are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.schema, &mut cfg.templates, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.strategy.to_vec()
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or(self.n / 60).max(1)
    }

    pub fn max_skipped(&self) -> u64 {
        self.max_skipped.unwrap_or(self.n as u64 / 100)
    }

    /// Learner spec for a model name: explicit entry first, then built-in defaults.
    pub fn learner_spec(&self, name: &str) -> Result<LearnerSpec> {
        self.learners
            .get(name)
            .cloned()
            .or_else(|| LearnerSpec::from_name(name))
            .ok_or_else(|| Error::Config(format!("unknown learner `{name}` (known: {})", LearnerSpec::NAMES.join(", "))))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be > 0".into()));
        }
        if self.window == Some(0) {
            return Err(Error::Config("window must be > 0".into()));
        }
        if self.buckets == 0 {
            return Err(Error::Config("buckets must be > 0".into()));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::Config("prior_weight must be ≥ 0".into()));
        }
        self.factor_clamp.validate().map_err(|e| Error::Config(e.to_string()))?;
        match (&self.scenario, &self.schema, &self.templates) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            _ => return Err(Error::Config("give either `scenario` or both `schema` and `templates`".into())),
        }
        let strategies = self.strategies();
        if strategies.is_empty() {
            return Err(Error::Config("no strategy given".into()));
        }
        for s in &strategies {
            if let Some(name) = s.model_name() {
                let spec = self.learner_spec(name)?;
                spec.validate().map_err(|e| Error::Config(format!("learner `{name}`: {e}")))?;
                if spec.is_batch() && self.warm_up < 2 {
                    return Err(Error::Config(format!("batch learner `{name}` needs warm_up ≥ 2")));
                }
            }
        }
        Ok(())
    }
}

/// Database, templates and the materialized stream shared by all strategies.
pub struct Workload {
    pub db: SynthDatabase,
    pub templates: Vec<QueryTemplate>,
    pub assignment: BucketAssignment,
    pub schedule: DriftSchedule,
    pub items: Vec<WorkloadItem>,
}

impl Workload {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let scenario = match (&config.scenario, &config.schema, &config.templates) {
            (Some(name), _, _) => Scenario::builtin(name, config.seed).map_err(|e| Error::Config(e.to_string()))?,
            (None, Some(s), Some(t)) => Scenario::from_files(s, t)?,
            _ => return Err(Error::Config("no workload source".into())),
        };
        let db = generate_database(&scenario.schema)?;
        let templates = scenario.templates;
        let assignment = match explicit_assignment(&templates) {
            Some(a) => a?,
            None => {
                let sets: Vec<_> = templates.iter().map(|t| t.relations.clone()).collect();
                cluster_buckets(&sets, config.buckets)?
            }
        };
        let schedule = config.drift.schedule(config.n, assignment.n_buckets())?;
        let items = generate_workload(&db, &templates, &assignment, schedule.clone(), config.n, config.seed)?;
        Ok(Self { db, templates, assignment, schedule, items })
    }

    /// Records from bucket 0 only, on a seed stream separate from the main one.
    pub fn warm_up_records(&self, config: &RunConfig) -> Result<Vec<crate::plan::PlanRecord>> {
        let items = generate_workload(
            &self.db,
            &self.templates,
            &self.assignment,
            DriftSchedule::Hard { switch_points: vec![] },
            config.warm_up,
            config.seed ^ WARM_UP_SEED_SALT,
        )?;
        Ok(items.into_iter().map(|i| i.record).collect())
    }
}

/// Resumable state of all pipelines at a step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub version: u32,
    pub n: usize,
    pub seed: u64,
    /// Next step to process.
    pub step: usize,
    pub pipelines: Vec<Pipeline>,
}

/// Drives every configured strategy over the same stream.
pub struct Runner {
    config: RunConfig,
    workload: Workload,
    pipelines: Vec<Pipeline>,
    rows: Vec<Vec<StreamRow>>,
    step: usize,
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let workload = Workload::build(&config)?;
        let options = PipelineOptions {
            prior_weight: config.prior_weight,
            factor_clamp: config.factor_clamp,
            window: config.window(),
            seed: config.seed,
        };
        let mut warm_up = None;
        let mut pipelines = Vec::new();
        for strategy in config.strategies() {
            let spec = strategy.model_name().map(|n| config.learner_spec(n)).transpose()?;
            let mut p = Pipeline::new(strategy, spec.as_ref(), &options)?;
            if let Some(LearnerSpec::BatchLinear { ridge }) = spec {
                if warm_up.is_none() {
                    warm_up = Some(workload.warm_up_records(&config)?);
                }
                p.warm_up(warm_up.as_deref().expect("just filled"), ridge)?;
            }
            pipelines.push(p);
        }
        let rows = vec![Vec::new(); pipelines.len()];
        Ok(Self { config, workload, pipelines, rows, step: 0 })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn pipelines(&self) -> &[Pipeline] {
        &self.pipelines
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Processes steps up to (excluding) `end`. Failing records are logged
    /// and skipped; too many failures abort with the last error.
    pub fn run_until(&mut self, end: usize) -> Result<()> {
        let end = end.min(self.config.n);
        let max_skipped = self.config.max_skipped();
        for item in &self.workload.items[self.step.min(end)..end] {
            for (p, rows) in self.pipelines.iter_mut().zip(&mut self.rows) {
                match p.step(item.step, item.bucket, &item.record) {
                    Ok(row) => rows.push(row),
                    Err(e) => {
                        p.skipped += 1;
                        log::warn!("{}: skipped plan `{}`: {e}", p.strategy(), item.record.plan_id);
                        if p.skipped > max_skipped {
                            return Err(e);
                        }
                    }
                }
            }
        }
        self.step = self.step.max(end);
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.config.n)
    }

    /// Rows produced so far, per strategy in config order.
    pub fn rows(&self) -> &[Vec<StreamRow>] {
        &self.rows
    }

    pub fn summaries(&self) -> Vec<StrategySummary> {
        let bounds = self.workload.schedule.boundaries(self.config.n);
        self.pipelines
            .iter()
            .zip(&self.rows)
            .map(|(p, rows)| summarize(&p.strategy().to_string(), rows, p.skipped, &bounds))
            .collect()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            version: SNAPSHOT_VERSION,
            n: self.config.n,
            seed: self.config.seed,
            step: self.step,
            pipelines: self.pipelines.clone(),
        }
    }

    /// Continues from a snapshot taken under the same config. Rows before the
    /// snapshot step are not reproduced.
    pub fn restore(&mut self, snapshot: StateSnapshot) -> Result<()> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!("unsupported snapshot version {}", snapshot.version)));
        }
        let strategies: Vec<Strategy> = snapshot.pipelines.iter().map(|p| p.strategy().clone()).collect();
        if snapshot.n != self.config.n || snapshot.seed != self.config.seed || strategies != self.config.strategies() {
            return Err(Error::Config("snapshot was taken under a different config".into()));
        }
        self.pipelines = snapshot.pipelines;
        self.rows = vec![Vec::new(); self.pipelines.len()];
        self.step = snapshot.step;
        Ok(())
    }

    /// Writes `<strategy-slug>.csv` per strategy and `summary.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (p, rows) in self.pipelines.iter().zip(&self.rows) {
            let path = dir.join(format!("{}.csv", p.strategy().slug()));
            write_report(rows, BufWriter::new(File::create(&path)?))?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summaries()).expect("summaries serialize");
        std::fs::write(&path, text + "\n")?;
        written.push(path);
        Ok(written)
    }
}

pub fn write_snapshot(snapshot: &StateSnapshot, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer(file, snapshot).map_err(|e| Error::Io(e.into()))
}

pub fn read_snapshot(path: &Path) -> Result<StateSnapshot> {
    read_json(path)
}
