//! Plan featurization.
//!
//! Three families of features come out of a [`PlanRecord`]:
//!
//! * general counts (joins, relations, predicates, busiest relation), which
//!   say something about plans never seen before;
//! * target-encoded keys: each relation, join, attribute, attribute value,
//!   attribute pair and opaque expression is replaced by the running mean of
//!   the learning target over past plans that contained it, shrunk towards
//!   the global mean by a Bayesian average;
//! * one-hot indicators over a vocabulary that grows as new keys appear.
//!
//! Learners with a fixed input dimension get the general and target-encoded
//! block ([`DENSE_FEATURES`]); sparse learners additionally get the one-hot
//! block.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::PlanRecord;

/// Default Bayesian-average prior weight `m`.
pub const DEFAULT_PRIOR_WEIGHT: f64 = 5.0;

/// Sparse named features. Iteration order is the name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(|v| v.is_finite())
    }

    /// Copy of `self` with `other`'s entries added (other wins on clashes).
    pub fn merged(&self, other: &FeatureVector) -> FeatureVector {
        let mut out = self.clone();
        out.0.extend(other.0.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralFeatures {
    pub n_joins: usize,
    pub n_relations: usize,
    pub n_predicates: usize,
    pub max_predicates_one_relation: usize,
}

pub const GENERAL_FEATURES: [&str; 4] = [
    "gen:n_joins",
    "gen:n_relations",
    "gen:n_predicates",
    "gen:max_predicates_one_relation",
];

impl GeneralFeatures {
    pub fn to_vector(&self) -> FeatureVector {
        let values = [
            self.n_joins,
            self.n_relations,
            self.n_predicates,
            self.max_predicates_one_relation,
        ];
        GENERAL_FEATURES
            .iter()
            .zip(values)
            .map(|(n, v)| (*n, v as f64))
            .collect()
    }
}

/// Opaque expressions count as one predicate each, on their relation if known.
pub fn extract_general(record: &PlanRecord) -> GeneralFeatures {
    let mut per_relation: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &record.predicates {
        *per_relation.entry(p.relation.as_str()).or_default() += 1;
    }
    for o in &record.opaque_predicates {
        if let Some(rel) = &o.relation {
            *per_relation.entry(rel.as_str()).or_default() += 1;
        }
    }
    GeneralFeatures {
        n_joins: record.joins.len(),
        n_relations: record.relations.len(),
        n_predicates: record.predicates.len() + record.opaque_predicates.len(),
        max_predicates_one_relation: per_relation.values().copied().max().unwrap_or(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    Relation,
    Join,
    Attribute,
    AttributeValue,
    AttributePair,
    Opaque,
}

impl KeyKind {
    pub const ALL: [KeyKind; 6] = [
        KeyKind::Relation,
        KeyKind::Join,
        KeyKind::Attribute,
        KeyKind::AttributeValue,
        KeyKind::AttributePair,
        KeyKind::Opaque,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            KeyKind::Relation => "rel",
            KeyKind::Join => "join",
            KeyKind::Attribute => "attr",
            KeyKind::AttributeValue => "attrval",
            KeyKind::AttributePair => "attrpair",
            KeyKind::Opaque => "opaque",
        }
    }
}

/// Namespaced categorical keys of one record, sorted and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingKeySet {
    keys: Vec<(KeyKind, String)>,
}

impl EncodingKeySet {
    pub fn iter(&self) -> impl Iterator<Item = (KeyKind, &str)> + '_ {
        self.keys.iter().map(|(k, s)| (*k, s.as_str()))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.iter().any(|(_, k)| k == key)
    }

    pub fn of_kind(&self, kind: KeyKind) -> impl Iterator<Item = &str> + '_ {
        self.keys
            .iter()
            .filter(move |(k, _)| *k == kind)
            .map(|(_, s)| s.as_str())
    }
}

pub fn extract_keys(record: &PlanRecord) -> EncodingKeySet {
    let mut keys = Vec::new();
    let mut push = |kind: KeyKind, body: String| keys.push((kind, format!("{}:{body}", kind.prefix())));
    for rel in &record.relations {
        push(KeyKind::Relation, rel.clone());
    }
    for j in &record.joins {
        push(KeyKind::Join, j.signature());
    }
    let mut columns: Vec<String> = Vec::new();
    for p in &record.predicates {
        let col = p.column();
        push(KeyKind::Attribute, col.clone());
        push(KeyKind::AttributeValue, format!("{col}{}{}", p.operator, p.literal));
        columns.push(col);
    }
    columns.sort();
    columns.dedup();
    for (i, a) in columns.iter().enumerate() {
        for b in &columns[i + 1..] {
            push(KeyKind::AttributePair, format!("{a},{b}"));
        }
    }
    for o in &record.opaque_predicates {
        match &o.relation {
            Some(rel) => push(KeyKind::Opaque, format!("{rel}:{}", o.expression)),
            None => push(KeyKind::Opaque, o.expression.clone()),
        }
    }
    keys.sort();
    keys.dedup();
    EncodingKeySet { keys }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub count: u64,
    pub mean: f64,
}

impl RunningMean {
    /// `mean += (x - mean) / (count + 1)`
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }
}

/// Streaming per-key means of the learning target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoder {
    prior_weight: f64,
    global: RunningMean,
    stats: BTreeMap<String, RunningMean>,
}

impl Default for TargetEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_PRIOR_WEIGHT)
    }
}

impl TargetEncoder {
    pub fn new(prior_weight: f64) -> Self {
        assert!(prior_weight >= 0.0 && prior_weight.is_finite(), "prior weight must be >= 0");
        Self {
            prior_weight,
            global: RunningMean::default(),
            stats: BTreeMap::new(),
        }
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    /// Running mean of every target seen, 0 before the first one.
    pub fn global_mean(&self) -> f64 {
        self.global.mean
    }

    pub fn global_count(&self) -> u64 {
        self.global.count
    }

    pub fn stats(&self, key: &str) -> RunningMean {
        self.stats.get(key).copied().unwrap_or_default()
    }

    /// Bayesian average `(m·ḡ + n·x̄) / (m + n)`; ḡ for unseen keys.
    pub fn value(&self, key: &str) -> f64 {
        let g = self.global.mean;
        match self.stats.get(key) {
            Some(s) if s.count > 0 => {
                let n = s.count as f64;
                (self.prior_weight * g + n * s.mean) / (self.prior_weight + n)
            }
            _ => g,
        }
    }

    /// One `te:<key>` entry per key.
    pub fn encode(&self, keys: &EncodingKeySet) -> FeatureVector {
        keys.iter()
            .map(|(_, k)| (format!("te:{k}"), self.value(k)))
            .collect()
    }

    /// Fixed-width summary: `te:global` = ḡ, and per key kind the mean
    /// encoded value of the record's keys of that kind minus ḡ (0 when the
    /// record has none).
    pub fn encode_by_kind(&self, keys: &EncodingKeySet) -> FeatureVector {
        let g = self.global.mean;
        let mut out = FeatureVector::new();
        out.insert("te:global", g);
        for kind in KeyKind::ALL {
            let (sum, n) = keys
                .of_kind(kind)
                .fold((0.0, 0usize), |(s, n), k| (s + self.value(k), n + 1));
            let dev = if n == 0 { 0.0 } else { sum / n as f64 - g };
            out.insert(format!("te:{}", kind.prefix()), dev);
        }
        out
    }

    pub fn update(&mut self, keys: &EncodingKeySet, target: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::NonFinite("target encoder update"));
        }
        self.global.push(target);
        for (_, k) in keys.iter() {
            self.stats.entry(k.to_string()).or_default().push(target);
        }
        Ok(())
    }

    pub fn n_keys(&self) -> usize {
        self.stats.len()
    }
}

/// Names of the fixed-width dense block, in input order.
pub const DENSE_FEATURES: [&str; 11] = [
    "gen:n_joins",
    "gen:n_relations",
    "gen:n_predicates",
    "gen:max_predicates_one_relation",
    "te:global",
    "te:rel",
    "te:join",
    "te:attr",
    "te:attrval",
    "te:attrpair",
    "te:opaque",
];

pub fn dense_feature_names() -> Vec<String> {
    DENSE_FEATURES.iter().map(|s| s.to_string()).collect()
}

/// Key kinds that are one-hot encoded.
pub const ONE_HOT_KINDS: [KeyKind; 5] = [
    KeyKind::Relation,
    KeyKind::Join,
    KeyKind::Attribute,
    KeyKind::AttributeValue,
    KeyKind::Opaque,
];

/// Key → stable index. New keys are appended unless the vocabulary is frozen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
    frozen: bool,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Appends the one-hot keys not yet indexed.
    pub fn observe(&mut self, keys: &EncodingKeySet) {
        if self.frozen {
            return;
        }
        for (kind, key) in keys.iter() {
            if ONE_HOT_KINDS.contains(&kind) && !self.index.contains_key(key) {
                let next = self.index.len();
                self.index.insert(key.to_string(), next);
            }
        }
    }

    pub fn feature_name(key: &str) -> String {
        format!("oh:{key}")
    }
}

/// Indicator features for the one-hot key kinds, scaled to unit L2 norm:
/// each of the `k` active keys gets `1/√k`. The feature name depends only
/// on the key, so keys outside the vocabulary still get a column.
pub fn one_hot(keys: &EncodingKeySet) -> FeatureVector {
    let active: Vec<&str> = keys
        .iter()
        .filter(|(kind, _)| ONE_HOT_KINDS.contains(kind))
        .map(|(_, k)| k)
        .collect();
    let v = 1.0 / (active.len().max(1) as f64).sqrt();
    active.into_iter().map(|k| (Vocabulary::feature_name(k), v)).collect()
}

/// Maps raw dense values into the learner input: counts become
/// `ln(1 + count)`, encoded values are kept, and the whole block is divided
/// by `√len` so that a constant-rate gradient step stays bounded when the
/// workload shifts.
pub fn scale_dense(raw: &FeatureVector) -> FeatureVector {
    let k = 1.0 / (raw.len().max(1) as f64).sqrt();
    raw.iter()
        .map(|(name, v)| {
            let v = if name.starts_with("gen:") { v.ln_1p() } else { v };
            (name.to_string(), v * k)
        })
        .collect()
}

/// Everything a learner may consume for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub keys: EncodingKeySet,
    pub general: GeneralFeatures,
    /// Scaled general counts plus target-encoded summary, [`DENSE_FEATURES`].
    pub dense: FeatureVector,
    pub one_hot: FeatureVector,
}

/// Owns the streaming state behind featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub encoder: TargetEncoder,
    pub vocabulary: Vocabulary,
    frozen: bool,
}

impl Featurizer {
    pub fn new(prior_weight: f64) -> Self {
        Self {
            encoder: TargetEncoder::new(prior_weight),
            vocabulary: Vocabulary::default(),
            frozen: false,
        }
    }

    /// Stops all further updates (the batch comparator's frozen preprocessing).
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.vocabulary.freeze();
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Read-only: ground truth of this record plays no part.
    pub fn featurize(&self, record: &PlanRecord) -> Features {
        let keys = extract_keys(record);
        let general = extract_general(record);
        let raw = general.to_vector().merged(&self.encoder.encode_by_kind(&keys));
        let dense = scale_dense(&raw);
        let one_hot = one_hot(&keys);
        Features { keys, general, dense, one_hot }
    }

    pub fn update(&mut self, features: &Features, target: f64) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        self.encoder.update(&features.keys, target)?;
        self.vocabulary.observe(&features.keys);
        Ok(())
    }
}
