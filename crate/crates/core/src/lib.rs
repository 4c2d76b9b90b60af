//! Streaming learned correction of cardinality estimates under workload drift.
//!
//! A [`plan::PlanRecord`] carries a cost-model estimate and the true
//! cardinality. [`eval::Pipeline`] scores each record with the current
//! correction before learning from it; [`run::Runner`] drives several
//! strategies over one synthetic, drifting workload.

pub mod correction;
pub mod drift;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod learners;
pub mod plan;
pub mod run;
pub mod scenario;
pub mod synth;
pub mod workload;

pub use correction::{FactorClamp, Strategy};
pub use drift::{BucketAssignment, DriftSchedule, TimeScale};
pub use error::{Error, Result};
pub use eval::{q_error, rolling_mean, Pipeline, StreamRow};
pub use features::FeatureVector;
pub use learners::{Learner, LearnerSpec, Regressor};
pub use plan::{PlanRecord, PlanTree};
pub use run::{RunConfig, Runner, StateSnapshot};
pub use synth::{SynthDatabase, SynthSchema};
