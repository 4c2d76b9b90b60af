//! Query templates and the drifting workload stream built from them.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drift::{BucketAssignment, DriftSchedule};
use crate::error::{Error, Result};
use crate::plan::{Join, Literal, Operator, PlanRecord, Predicate};
use crate::synth::{avi_estimate, true_cardinality, SynthDatabase};

/// Literal of a templated predicate: either fixed, or drawn per query.
/// Predicates naming the same slot receive the same drawn value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiteralSlot {
    Slot { slot: String },
    Fixed(Literal),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateTemplate {
    pub relation: String,
    pub attribute: String,
    pub operator: Operator,
    pub literal: LiteralSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryTemplate {
    pub id: String,
    pub relations: BTreeSet<String>,
    #[serde(default)]
    pub joins: BTreeSet<Join>,
    #[serde(default)]
    pub predicates: Vec<PredicateTemplate>,
    /// Explicit bucket; when absent for every template, buckets are clustered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<usize>,
}

impl QueryTemplate {
    /// Checks the template against a database and returns the domain of each slot.
    fn slot_domains(&self, db: &SynthDatabase) -> Result<BTreeMap<String, u32>> {
        let mut slots = BTreeMap::new();
        for rel in &self.relations {
            db.table(rel)?;
        }
        for j in &self.joins {
            for side in [j.left(), j.right()] {
                if !self.relations.contains(&side.relation) {
                    return Err(Error::validation("joins", format!("template `{}` joins unlisted `{}`", self.id, side.relation)));
                }
                db.table(&side.relation)?.column(&side.attribute)?;
            }
        }
        for p in &self.predicates {
            if !self.relations.contains(&p.relation) {
                return Err(Error::validation(
                    "predicates",
                    format!("template `{}` filters unlisted `{}`", self.id, p.relation),
                ));
            }
            let col = db.table(&p.relation)?.column(&p.attribute)?;
            if let LiteralSlot::Slot { slot } = &p.literal {
                slots.entry(slot.clone()).or_insert(col.domain);
            }
        }
        Ok(slots)
    }

    fn instantiate(&self, plan_id: String, values: &BTreeMap<String, u32>) -> PlanRecord {
        PlanRecord {
            plan_id,
            relations: self.relations.clone(),
            joins: self.joins.clone(),
            predicates: self
                .predicates
                .iter()
                .map(|p| Predicate {
                    relation: p.relation.clone(),
                    attribute: p.attribute.clone(),
                    operator: p.operator,
                    literal: match &p.literal {
                        LiteralSlot::Fixed(l) => l.clone(),
                        LiteralSlot::Slot { slot } => Literal::Int(values[slot] as i64),
                    },
                })
                .collect(),
            estimated_cardinality: 1.0,
            actual_cardinality: 0,
            opaque_predicates: Vec::new(),
        }
    }
}

/// Buckets from the templates' explicit `bucket` fields, if every template has one.
pub fn explicit_assignment(templates: &[QueryTemplate]) -> Option<Result<BucketAssignment>> {
    let buckets: Option<Vec<usize>> = templates.iter().map(|t| t.bucket).collect();
    buckets.map(|b| {
        let n = b.iter().max().map_or(0, |m| m + 1);
        BucketAssignment::new(b, n)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadItem {
    pub step: usize,
    pub bucket: usize,
    pub template: usize,
    /// Bucket probabilities at this step (soft drift only).
    pub probabilities: Option<Vec<f64>>,
    pub record: PlanRecord,
}

/// Seeded generator of plan records. Each record carries the AVI estimate as
/// `estimated_cardinality` and the exact count as `actual_cardinality`.
pub struct WorkloadGenerator<'a> {
    db: &'a SynthDatabase,
    templates: &'a [QueryTemplate],
    slot_domains: Vec<BTreeMap<String, u32>>,
    by_bucket: Vec<Vec<usize>>,
    schedule: DriftSchedule,
    n: usize,
    step: usize,
    rng: ChaCha8Rng,
    prefix: String,
}

impl<'a> WorkloadGenerator<'a> {
    pub fn new(
        db: &'a SynthDatabase,
        templates: &'a [QueryTemplate],
        assignment: &BucketAssignment,
        schedule: DriftSchedule,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        schedule.validate(n.max(1))?;
        if assignment.as_slice().len() != templates.len() {
            return Err(Error::validation("buckets", "assignment does not cover the template list"));
        }
        if schedule.n_buckets() > assignment.n_buckets() {
            return Err(Error::validation(
                "drift",
                format!(
                    "schedule uses {} buckets but templates only fill {}",
                    schedule.n_buckets(),
                    assignment.n_buckets()
                ),
            ));
        }
        let slot_domains = templates.iter().map(|t| t.slot_domains(db)).collect::<Result<_>>()?;
        let by_bucket = (0..assignment.n_buckets()).map(|b| assignment.templates_in(b)).collect();
        Ok(Self {
            db,
            templates,
            slot_domains,
            by_bucket,
            schedule,
            n,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            prefix: "w".into(),
        })
    }

    /// Prefix for generated plan ids (`{prefix}{step}:{template id}`).
    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.prefix = prefix.into();
        self
    }

    fn generate(&mut self) -> Result<WorkloadItem> {
        let t = self.step;
        self.step += 1;
        let (bucket, probabilities) = self.schedule.draw(t, self.n, &mut self.rng);
        let members = &self.by_bucket[bucket];
        let template = members[self.rng.random_range(0..members.len())];
        let values: BTreeMap<String, u32> = self.slot_domains[template]
            .iter()
            .map(|(slot, &domain)| (slot.clone(), self.rng.random_range(0..domain)))
            .collect();
        let tpl = &self.templates[template];
        let mut record = tpl.instantiate(format!("{}{t}:{}", self.prefix, tpl.id), &values);
        record.estimated_cardinality = avi_estimate(&record, self.db)?;
        record.actual_cardinality = true_cardinality(&record, self.db)?;
        Ok(WorkloadItem { step: t, bucket, template, probabilities, record })
    }
}

impl Iterator for WorkloadGenerator<'_> {
    type Item = Result<WorkloadItem>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.step < self.n).then(|| self.generate())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.n - self.step;
        (left, Some(left))
    }
}

pub fn generate_workload(
    db: &SynthDatabase,
    templates: &[QueryTemplate],
    assignment: &BucketAssignment,
    schedule: DriftSchedule,
    n: usize,
    seed: u64,
) -> Result<Vec<WorkloadItem>> {
    WorkloadGenerator::new(db, templates, assignment, schedule, n, seed)?.collect()
}
