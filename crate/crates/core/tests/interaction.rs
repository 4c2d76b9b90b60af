//! A pairwise-equality workload that only a model with interactions can learn.

use driftsel::correction::Strategy;
use driftsel::drift::{BucketAssignment, DriftSchedule};
use driftsel::eval::{Pipeline, PipelineOptions, StreamRow};
use driftsel::plan::Operator;
use driftsel::synth::{
    generate_database, AttributeSpec, Correlation, CorrelationMode, Distribution, RelationSpec, SynthSchema,
};
use driftsel::workload::{generate_workload, LiteralSlot, PredicateTemplate, QueryTemplate, WorkloadItem};
use driftsel::{FactorClamp, LearnerSpec};

/// `a = $v AND b = $w` over a relation where `b` copies `a`: the true count
/// is large exactly when `v = w`, which no per-key statistic reveals.
fn workload(seed: u64) -> Vec<WorkloadItem> {
    let attr = |name: &str| AttributeSpec { name: name.into(), domain: 10, distribution: Distribution::Uniform };
    let db = generate_database(&SynthSchema {
        relations: vec![RelationSpec { name: "r".into(), rows: 1000, attributes: vec![attr("a"), attr("b")] }],
        correlations: vec![Correlation {
            relation: "r".into(),
            attr_a: "a".into(),
            attr_b: "b".into(),
            mode: CorrelationMode::Equal,
        }],
        join_keys: vec![],
        seed,
    })
    .unwrap();
    let pred = |attr: &str, slot: &str| PredicateTemplate {
        relation: "r".into(),
        attribute: attr.into(),
        operator: Operator::Eq,
        literal: LiteralSlot::Slot { slot: slot.into() },
    };
    let templates = vec![QueryTemplate {
        id: "ab".into(),
        relations: ["r".to_string()].into(),
        joins: Default::default(),
        predicates: vec![pred("a", "v"), pred("b", "w")],
        bucket: None,
    }];
    let assignment = BucketAssignment::new(vec![0], 1).unwrap();
    let schedule = DriftSchedule::Hard { switch_points: vec![] };
    generate_workload(&db, &templates, &assignment, schedule, 10_000, seed).unwrap()
}

fn run(learner: &str, items: &[WorkloadItem], seed: u64) -> Vec<StreamRow> {
    let options = PipelineOptions { prior_weight: 5.0, factor_clamp: FactorClamp::default(), window: 1000, seed };
    let spec = LearnerSpec::from_name(learner).unwrap();
    let mut p = Pipeline::new(Strategy::Model(learner.into()), Some(&spec), &options).unwrap();
    items.iter().map(|i| p.step(i.step, i.bucket, &i.record).unwrap()).collect()
}

#[test]
fn fm_beats_linear_on_equal_columns() {
    for seed in [3, 4, 5] {
        let items = workload(seed);
        let fm = run("fm", &items, seed);
        let linear = run("linear", &items, seed);
        let (q_fm, q_lin) = (fm[9_999].q_corrected_roll, linear[9_999].q_corrected_roll);
        println!("seed {seed}: fm {q_fm:.3}, linear {q_lin:.3}");
        assert!(q_fm < q_lin, "seed {seed}: fm {q_fm} vs linear {q_lin}");
    }
}
