//! Plan observations: the records the correction pipeline learns from.
//!
//! A [`PlanRecord`] is a flattened (sub-)plan: the relations it touches, its
//! equi-joins and filter predicates, the estimator's row count and the row
//! count observed at execution. Plan streams are stored as JSON lines, one
//! record per line.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Lt => "<",
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "=" => Operator::Eq,
            "<" => Operator::Lt,
            "<=" => Operator::Le,
            ">" => Operator::Gt,
            ">=" => Operator::Ge,
            _ => return None,
        })
    }

    /// Applies the operator with the column value on the left.
    pub fn holds(self, value: f64, literal: f64) -> bool {
        match self {
            Operator::Eq => value == literal,
            Operator::Lt => value < literal,
            Operator::Le => value <= literal,
            Operator::Gt => value > literal,
            Operator::Ge => value >= literal,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Literal {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Int(v) => Some(*v as f64),
            Literal::Float(v) => Some(*v),
            Literal::Text(_) => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => write!(f, "{v:?}"),
            Literal::Text(s) => write!(f, "'{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub relation: String,
    pub attribute: String,
    pub operator: Operator,
    pub literal: Literal,
}

impl Predicate {
    pub fn new(
        relation: impl Into<String>,
        attribute: impl Into<String>,
        operator: Operator,
        literal: Literal,
    ) -> Self {
        Self {
            relation: relation.into(),
            attribute: attribute.into(),
            operator,
            literal,
        }
    }

    /// `relation.attribute`
    pub fn column(&self) -> String {
        format!("{}.{}", self.relation, self.attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub relation: String,
    pub attribute: String,
}

impl ColumnRef {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.attribute)
    }
}

/// Equi-join between two columns. The smaller column is always stored on the
/// left, so `(a, b)` and `(b, a)` compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "RawJoin")]
pub struct Join {
    left: ColumnRef,
    right: ColumnRef,
}

#[derive(Deserialize)]
struct RawJoin {
    left: ColumnRef,
    right: ColumnRef,
}

impl From<RawJoin> for Join {
    fn from(raw: RawJoin) -> Self {
        Join::new(raw.left, raw.right)
    }
}

impl Join {
    pub fn new(a: ColumnRef, b: ColumnRef) -> Self {
        if a <= b {
            Self { left: a, right: b }
        } else {
            Self { left: b, right: a }
        }
    }

    pub fn left(&self) -> &ColumnRef {
        &self.left
    }

    pub fn right(&self) -> &ColumnRef {
        &self.right
    }

    /// Canonical text form, e.g. `t.x=u.y`.
    pub fn signature(&self) -> String {
        format!("{}={}", self.left, self.right)
    }
}

/// A filter expression we could not type. Kept verbatim so it can still be
/// target encoded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpaquePredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub plan_id: String,
    pub relations: BTreeSet<String>,
    pub joins: BTreeSet<Join>,
    pub predicates: Vec<Predicate>,
    pub estimated_cardinality: f64,
    pub actual_cardinality: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub opaque_predicates: Vec<OpaquePredicate>,
}

impl PlanRecord {
    pub fn validate(&self) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::validation("relations", "at least one relation is required"));
        }
        if self.relations.iter().any(|r| r.is_empty()) {
            return Err(Error::validation("relations", "relation names must be non-empty"));
        }
        if !(self.estimated_cardinality.is_finite() && self.estimated_cardinality > 0.0) {
            return Err(Error::validation(
                "estimated_cardinality",
                format!("must be finite and > 0, got {}", self.estimated_cardinality),
            ));
        }
        for join in &self.joins {
            if join.left == join.right {
                return Err(Error::validation("joins", format!("self-join on {}", join.left)));
            }
            for side in [&join.left, &join.right] {
                if side.attribute.is_empty() {
                    return Err(Error::validation("joins", "empty attribute name"));
                }
                if !self.relations.contains(&side.relation) {
                    return Err(Error::validation(
                        "joins",
                        format!("{} references unknown relation `{}`", join.signature(), side.relation),
                    ));
                }
            }
        }
        for p in &self.predicates {
            if p.attribute.is_empty() {
                return Err(Error::validation("predicates", "empty attribute name"));
            }
            if !self.relations.contains(&p.relation) {
                return Err(Error::validation(
                    "predicates",
                    format!("predicate on unknown relation `{}`", p.relation),
                ));
            }
            if let Literal::Float(v) = p.literal {
                if !v.is_finite() {
                    return Err(Error::validation("predicates", "non-finite literal"));
                }
            }
        }
        for o in &self.opaque_predicates {
            if let Some(rel) = &o.relation {
                if !self.relations.contains(rel) {
                    return Err(Error::validation(
                        "opaque_predicates",
                        format!("expression on unknown relation `{rel}`"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_joins(&self) -> usize {
        self.joins.len()
    }

    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("plan records always serialize")
    }
}

/// Parses one line of a plan stream.
pub fn parse_plan_jsonl(line: &str) -> Result<PlanRecord> {
    let record: PlanRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        offset: byte_offset(line, e.line(), e.column()),
        message: e.to_string(),
    })?;
    record.validate()?;
    Ok(record)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

/// Reads a whole JSON-lines plan stream, skipping blank lines.
pub fn read_plan_stream(text: &str) -> Result<Vec<PlanRecord>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if !trimmed.trim().is_empty() {
            out.push(parse_plan_jsonl(trimmed).map_err(|e| match e {
                Error::Parse { offset: o, message } => Error::Parse {
                    offset: offset + o,
                    message,
                },
                other => other,
            })?);
        }
        offset += line.len();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Scan,
    Filter,
    Join,
}

/// Physical plan tree restricted to the operators that change cardinality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub kind: NodeKind,
    /// Relation identifier for scans.
    pub relation: Option<String>,
    pub estimated_rows: f64,
    pub actual_rows: u64,
    pub predicates: Vec<Predicate>,
    pub joins: Vec<Join>,
    pub opaque: Vec<OpaquePredicate>,
    pub children: Vec<PlanTree>,
}

impl PlanTree {
    pub fn scan(relation: impl Into<String>, estimated_rows: f64, actual_rows: u64) -> Self {
        Self {
            kind: NodeKind::Scan,
            relation: Some(relation.into()),
            estimated_rows,
            actual_rows,
            predicates: Vec::new(),
            joins: Vec::new(),
            opaque: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn join(left: PlanTree, right: PlanTree, estimated_rows: f64, actual_rows: u64) -> Self {
        Self {
            kind: NodeKind::Join,
            relation: None,
            estimated_rows,
            actual_rows,
            predicates: Vec::new(),
            joins: Vec::new(),
            opaque: Vec::new(),
            children: vec![left, right],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PlanTree::node_count).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NodeKind::Scan | NodeKind::Filter if self.children.len() > 1 => {
                return Err(Error::validation("children", "scan/filter nodes take at most one child"))
            }
            NodeKind::Join if self.children.len() != 2 => {
                return Err(Error::validation("children", "join nodes take exactly two children"))
            }
            NodeKind::Scan if self.relation.is_none() => {
                return Err(Error::validation("relation", "scan without relation"))
            }
            _ => {}
        }
        if !(self.estimated_rows.is_finite() && self.estimated_rows > 0.0) {
            return Err(Error::validation("estimated_rows", "must be finite and > 0"));
        }
        self.children.iter().try_for_each(PlanTree::validate)
    }

    fn collect_into(&self, rec: &mut PlanRecord) {
        if let Some(rel) = &self.relation {
            rec.relations.insert(rel.clone());
        }
        rec.joins.extend(self.joins.iter().cloned());
        rec.predicates.extend(self.predicates.iter().cloned());
        rec.opaque_predicates.extend(self.opaque.iter().cloned());
        for child in &self.children {
            child.collect_into(rec);
        }
    }
}

/// One record per node, in pre-order. Record `i` gets id `{prefix}:{i}`.
pub fn enumerate_subplans(tree: &PlanTree, prefix: &str) -> Result<Vec<PlanRecord>> {
    tree.validate()?;
    let mut out = Vec::with_capacity(tree.node_count());
    let mut stack = vec![tree];
    while let Some(node) = stack.pop() {
        let mut rec = PlanRecord {
            plan_id: format!("{prefix}:{}", out.len()),
            relations: BTreeSet::new(),
            joins: BTreeSet::new(),
            predicates: Vec::new(),
            estimated_cardinality: node.estimated_rows,
            actual_cardinality: node.actual_rows,
            opaque_predicates: Vec::new(),
        };
        node.collect_into(&mut rec);
        rec.validate()?;
        out.push(rec);
        stack.extend(node.children.iter().rev());
    }
    Ok(out)
}
