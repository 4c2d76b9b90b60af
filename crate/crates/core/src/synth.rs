//! Synthetic relational data with controllable attribute correlations.
//!
//! Stands in for a real database plus its optimizer: [`avi_estimate`] plays
//! the textbook cost model (per-attribute histograms, independence and join
//! uniformity) and [`true_cardinality`] counts the exact answer.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{Operator, PlanRecord, Predicate};

pub const SNAPSHOT_VERSION: u8 = 1;

/// Default floor for AVI estimates, in rows.
pub const DEFAULT_ESTIMATE_FLOOR: f64 = 1e-9;
/// Default cap on the cross product a nested-loop count may walk.
pub const DEFAULT_MAX_PAIRS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    /// Zipf with exponent `s`; value 0 is the most frequent.
    Zipf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub domain: u32,
    #[serde(default = "uniform")]
    pub distribution: Distribution,
}

fn uniform() -> Distribution {
    Distribution::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub rows: usize,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    Independent,
    /// `attr_b` is a row-wise copy of `attr_a`.
    Equal,
    /// Each row copies `attr_a` with probability p, otherwise keeps its own draw.
    NoisyCopy(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    pub relation: String,
    pub attr_a: String,
    pub attr_b: String,
    pub mode: CorrelationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinKey {
    /// `relation.attribute`
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSchema {
    pub relations: Vec<RelationSpec>,
    #[serde(default)]
    pub correlations: Vec<Correlation>,
    #[serde(default)]
    pub join_keys: Vec<JoinKey>,
    pub seed: u64,
}

impl SynthSchema {
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for rel in &self.relations {
            if rel.name.is_empty() || !names.insert(rel.name.as_str()) {
                return Err(Error::validation("relations", format!("duplicate or empty relation `{}`", rel.name)));
            }
            if rel.rows == 0 {
                return Err(Error::validation("rows", format!("relation `{}` has no rows", rel.name)));
            }
            let mut attrs = BTreeSet::new();
            for a in &rel.attributes {
                if a.name.is_empty() || !attrs.insert(a.name.as_str()) {
                    return Err(Error::validation(
                        "attributes",
                        format!("duplicate or empty attribute `{}.{}`", rel.name, a.name),
                    ));
                }
                if a.domain < 2 {
                    return Err(Error::validation("domain", format!("`{}.{}` needs domain >= 2", rel.name, a.name)));
                }
                if let Distribution::Zipf(s) = a.distribution {
                    if !(s.is_finite() && s > 0.0) {
                        return Err(Error::validation("distribution", "zipf exponent must be > 0"));
                    }
                }
            }
        }
        for c in &self.correlations {
            let a = self.attribute(&c.relation, &c.attr_a)?;
            let b = self.attribute(&c.relation, &c.attr_b)?;
            if c.attr_a == c.attr_b {
                return Err(Error::validation("correlations", "an attribute cannot be correlated with itself"));
            }
            if let CorrelationMode::NoisyCopy(p) = c.mode {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation("correlations", format!("noisy_copy p={p} outside [0, 1]")));
                }
            }
            if c.mode != CorrelationMode::Independent && a.domain != b.domain {
                return Err(Error::validation(
                    "correlations",
                    format!("`{}` and `{}` must share a domain to be copied", c.attr_a, c.attr_b),
                ));
            }
        }
        for k in &self.join_keys {
            for side in [&k.left, &k.right] {
                let (rel, attr) = side
                    .split_once('.')
                    .ok_or_else(|| Error::validation("join_keys", format!("`{side}` is not relation.attribute")))?;
                self.attribute(rel, attr)?;
            }
        }
        Ok(())
    }

    fn attribute(&self, relation: &str, attribute: &str) -> Result<&AttributeSpec> {
        let rel = self
            .relations
            .iter()
            .find(|r| r.name == relation)
            .ok_or_else(|| Error::Lookup { kind: "relation", name: relation.to_string() })?;
        rel.attributes
            .iter()
            .find(|a| a.name == attribute)
            .ok_or_else(|| Error::Lookup { kind: "attribute", name: format!("{relation}.{attribute}") })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub domain: u32,
    pub values: Vec<u32>,
    /// `histogram[v]` = number of rows holding value `v`.
    pub histogram: Vec<u64>,
}

impl Column {
    fn new(name: String, domain: u32, values: Vec<u32>) -> Self {
        let mut histogram = vec![0u64; domain as usize];
        for &v in &values {
            histogram[v as usize] += 1;
        }
        Self { name, domain, values, histogram }
    }

    pub fn distinct(&self) -> usize {
        self.histogram.iter().filter(|&&c| c > 0).count()
    }

    /// Fraction of rows satisfying `value <op> literal`, from the histogram alone.
    pub fn selectivity(&self, op: Operator, literal: f64) -> f64 {
        let rows = self.values.len() as f64;
        let hits: u64 = self
            .histogram
            .iter()
            .enumerate()
            .filter(|(v, _)| op.holds(*v as f64, literal))
            .map(|(_, c)| *c)
            .sum();
        hits as f64 / rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub rows: usize,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.iter().find(|c| c.name == name).ok_or_else(|| Error::Lookup {
            kind: "attribute",
            name: format!("{}.{name}", self.name),
        })
    }
}

/// Column-major integer tables plus their per-attribute histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDatabase {
    pub tables: Vec<Table>,
}

impl SynthDatabase {
    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Lookup { kind: "relation", name: name.to_string() })
    }

    /// Binary snapshot: a version byte followed by little-endian fields.
    ///
    /// ```text
    /// u8  version (= 1)
    /// u32 table count
    /// per table:  u32 name length, name bytes (UTF-8), u64 rows, u32 column count
    /// per column: u32 name length, name bytes, u32 domain, rows x u32 values
    /// ```
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&[SNAPSHOT_VERSION])?;
        w.write_all(&(self.tables.len() as u32).to_le_bytes())?;
        for t in &self.tables {
            write_str(&mut w, &t.name)?;
            w.write_all(&(t.rows as u64).to_le_bytes())?;
            w.write_all(&(t.columns.len() as u32).to_le_bytes())?;
            for c in &t.columns {
                write_str(&mut w, &c.name)?;
                w.write_all(&c.domain.to_le_bytes())?;
                let mut buf = Vec::with_capacity(c.values.len() * 4);
                for v in &c.values {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != SNAPSHOT_VERSION {
            return Err(Error::validation("snapshot", format!("unsupported version {}", version[0])));
        }
        let n_tables = read_u32(&mut r)?;
        let mut tables = Vec::with_capacity(n_tables as usize);
        for _ in 0..n_tables {
            let name = read_str(&mut r)?;
            let rows = read_u64(&mut r)? as usize;
            let n_cols = read_u32(&mut r)?;
            let mut columns = Vec::with_capacity(n_cols as usize);
            for _ in 0..n_cols {
                let cname = read_str(&mut r)?;
                let domain = read_u32(&mut r)?;
                let mut raw = vec![0u8; rows * 4];
                r.read_exact(&mut raw)?;
                let values: Vec<u32> = raw
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                if values.iter().any(|&v| v >= domain) {
                    return Err(Error::validation("snapshot", format!("value outside domain in `{name}.{cname}`")));
                }
                columns.push(Column::new(cname, domain, values));
            }
            tables.push(Table { name, rows, columns });
        }
        Ok(Self { tables })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::validation("snapshot", "name is not UTF-8"))
}

pub fn generate_database(schema: &SynthSchema) -> Result<SynthDatabase> {
    schema.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(schema.seed);
    let mut tables = Vec::with_capacity(schema.relations.len());
    for rel in &schema.relations {
        let mut columns: Vec<Vec<u32>> = rel
            .attributes
            .iter()
            .map(|a| draw_column(&mut rng, a, rel.rows))
            .collect();
        for c in schema.correlations.iter().filter(|c| c.relation == rel.name) {
            let ia = rel.attributes.iter().position(|a| a.name == c.attr_a).expect("validated");
            let ib = rel.attributes.iter().position(|a| a.name == c.attr_b).expect("validated");
            match c.mode {
                CorrelationMode::Independent => {}
                CorrelationMode::Equal => columns[ib] = columns[ia].clone(),
                CorrelationMode::NoisyCopy(p) => {
                    let source = columns[ia].clone();
                    for (dst, src) in columns[ib].iter_mut().zip(source) {
                        if rng.random::<f64>() < p {
                            *dst = src;
                        }
                    }
                }
            }
        }
        let columns = rel
            .attributes
            .iter()
            .zip(columns)
            .map(|(a, values)| Column::new(a.name.clone(), a.domain, values))
            .collect();
        tables.push(Table { name: rel.name.clone(), rows: rel.rows, columns });
    }
    Ok(SynthDatabase { tables })
}

fn draw_column(rng: &mut ChaCha8Rng, attr: &AttributeSpec, rows: usize) -> Vec<u32> {
    match attr.distribution {
        Distribution::Uniform => (0..rows).map(|_| rng.random_range(0..attr.domain)).collect(),
        Distribution::Zipf(s) => {
            let zipf = Zipf::new(attr.domain as f64, s).expect("validated zipf parameters");
            (0..rows)
                .map(|_| (zipf.sample(rng) as u32 - 1).min(attr.domain - 1))
                .collect()
        }
    }
}

fn numeric_literal(p: &Predicate) -> Result<f64> {
    p.literal.as_f64().ok_or_else(|| {
        Error::validation(
            "predicates",
            format!("`{}` compares an integer column with text {}", p.column(), p.literal),
        )
    })
}

/// Cost-model estimate under attribute value independence and join uniformity.
pub fn avi_estimate(record: &PlanRecord, db: &SynthDatabase) -> Result<f64> {
    avi_estimate_with_floor(record, db, DEFAULT_ESTIMATE_FLOOR)
}

pub fn avi_estimate_with_floor(record: &PlanRecord, db: &SynthDatabase, floor: f64) -> Result<f64> {
    let mut estimate = 1.0;
    for rel in &record.relations {
        estimate *= db.table(rel)?.rows as f64;
    }
    for p in &record.predicates {
        let col = db.table(&p.relation)?.column(&p.attribute)?;
        estimate *= col.selectivity(p.operator, numeric_literal(p)?);
    }
    for j in &record.joins {
        let l = db.table(&j.left().relation)?.column(&j.left().attribute)?;
        let r = db.table(&j.right().relation)?.column(&j.right().attribute)?;
        let distinct = l.distinct().max(r.distinct()).max(1);
        estimate /= distinct as f64;
    }
    Ok(estimate.max(floor))
}

/// Exact result size of the conjunctive query described by `record`.
pub fn true_cardinality(record: &PlanRecord, db: &SynthDatabase) -> Result<u64> {
    true_cardinality_bounded(record, db, DEFAULT_MAX_PAIRS)
}

pub fn true_cardinality_bounded(record: &PlanRecord, db: &SynthDatabase, max_pairs: u64) -> Result<u64> {
    let rels: Vec<&str> = record.relations.iter().map(String::as_str).collect();
    let index: HashMap<&str, usize> = rels.iter().enumerate().map(|(i, r)| (*r, i)).collect();

    // Filtered row ids per relation.
    let mut survivors = Vec::with_capacity(rels.len());
    for rel in &rels {
        let table = db.table(rel)?;
        let mut checks = Vec::new();
        for p in record.predicates.iter().filter(|p| p.relation == *rel) {
            checks.push((&table.column(&p.attribute)?.values, p.operator, numeric_literal(p)?));
        }
        let rows: Vec<usize> = (0..table.rows)
            .filter(|&row| checks.iter().all(|(vals, op, lit)| op.holds(vals[row] as f64, *lit)))
            .collect();
        survivors.push(rows);
    }

    let mut edges = Vec::with_capacity(record.joins.len());
    for j in &record.joins {
        let (l, r) = (j.left(), j.right());
        edges.push(Edge {
            a: index[l.relation.as_str()],
            a_col: &db.table(&l.relation)?.column(&l.attribute)?.values,
            b: index[r.relation.as_str()],
            b_col: &db.table(&r.relation)?.column(&r.attribute)?.values,
        });
    }

    let ctx = JoinContext { survivors: &survivors, edges: &edges };
    if ctx.is_forest() {
        ctx.count_forest()
    } else {
        ctx.count_nested_loop(max_pairs)
    }
}

struct Edge<'a> {
    a: usize,
    a_col: &'a [u32],
    b: usize,
    b_col: &'a [u32],
}

struct JoinContext<'a> {
    survivors: &'a [Vec<usize>],
    edges: &'a [Edge<'a>],
}

impl JoinContext<'_> {
    fn n(&self) -> usize {
        self.survivors.len()
    }

    fn is_forest(&self) -> bool {
        // union-find; any edge closing a cycle (including parallel edges) disqualifies
        let mut parent: Vec<usize> = (0..self.n()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }

    fn count_forest(&self) -> Result<u64> {
        let mut visited = vec![false; self.n()];
        let mut total: u128 = 1;
        for root in 0..self.n() {
            if visited[root] {
                continue;
            }
            let per_row = self.subtree_weights(root, None, &mut visited);
            let component: u128 = per_row.iter().sum();
            total = total.saturating_mul(component);
        }
        u64::try_from(total).map_err(|_| Error::Resource("result size overflows u64".into()))
    }

    /// Weight of each surviving row of `rel`: the number of ways it extends
    /// into the subtree hanging below it.
    fn subtree_weights(&self, rel: usize, via: Option<usize>, visited: &mut [bool]) -> Vec<u128> {
        visited[rel] = true;
        let mut weights = vec![1u128; self.survivors[rel].len()];
        for (ei, e) in self.edges.iter().enumerate() {
            if Some(ei) == via || (e.a != rel && e.b != rel) {
                continue;
            }
            let (my_col, child, child_col) = if e.a == rel {
                (e.a_col, e.b, e.b_col)
            } else {
                (e.b_col, e.a, e.a_col)
            };
            let child_weights = self.subtree_weights(child, Some(ei), visited);
            let mut by_key: HashMap<u32, u128> = HashMap::new();
            for (row, w) in self.survivors[child].iter().zip(child_weights) {
                *by_key.entry(child_col[*row]).or_default() += w;
            }
            for (row, w) in self.survivors[rel].iter().zip(weights.iter_mut()) {
                *w = w.saturating_mul(by_key.get(&my_col[*row]).copied().unwrap_or(0));
            }
        }
        weights
    }

    fn count_nested_loop(&self, max_pairs: u64) -> Result<u64> {
        let product = self
            .survivors
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
        if product > max_pairs as u128 {
            return Err(Error::Resource(format!(
                "nested-loop count would visit {product} combinations (limit {max_pairs})"
            )));
        }
        let mut chosen = vec![usize::MAX; self.n()];
        Ok(self.extend(0, &mut chosen))
    }

    fn extend(&self, depth: usize, chosen: &mut Vec<usize>) -> u64 {
        if depth == self.n() {
            return 1;
        }
        let mut count = 0;
        for &row in &self.survivors[depth] {
            chosen[depth] = row;
            let consistent = self.edges.iter().all(|e| {
                let (ra, rb) = (chosen[e.a], chosen[e.b]);
                e.a.max(e.b) != depth || e.a_col[ra] == e.b_col[rb]
            });
            if consistent {
                count += self.extend(depth + 1, chosen);
            }
        }
        chosen[depth] = usize::MAX;
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ColumnRef, Join, Literal};

    fn one_relation(rows: usize, corr: Option<CorrelationMode>) -> SynthSchema {
        SynthSchema {
            relations: vec![RelationSpec {
                name: "t".into(),
                rows,
                attributes: vec![
                    AttributeSpec { name: "a".into(), domain: 10, distribution: Distribution::Uniform },
                    AttributeSpec { name: "b".into(), domain: 10, distribution: Distribution::Uniform },
                ],
            }],
            correlations: corr
                .map(|mode| Correlation { relation: "t".into(), attr_a: "a".into(), attr_b: "b".into(), mode })
                .into_iter()
                .collect(),
            join_keys: vec![],
            seed: 42,
        }
    }

    fn record(rels: &[&str], preds: Vec<Predicate>, joins: Vec<Join>) -> PlanRecord {
        PlanRecord {
            plan_id: "q".into(),
            relations: rels.iter().map(|s| s.to_string()).collect(),
            joins: joins.into_iter().collect(),
            predicates: preds,
            estimated_cardinality: 1.0,
            actual_cardinality: 0,
            opaque_predicates: vec![],
        }
    }

    fn eq(rel: &str, attr: &str, v: i64) -> Predicate {
        Predicate::new(rel, attr, Operator::Eq, Literal::Int(v))
    }

    #[test]
    fn histogram_conserves_rows() {
        let db = generate_database(&one_relation(100, None)).unwrap();
        let a = db.table("t").unwrap().column("a").unwrap();
        assert_eq!(a.histogram.iter().sum::<u64>(), 100);
    }

    #[test]
    fn equal_mode_copies_rows() {
        let db = generate_database(&one_relation(500, Some(CorrelationMode::Equal))).unwrap();
        let t = db.table("t").unwrap();
        assert_eq!(t.column("a").unwrap().values, t.column("b").unwrap().values);
    }

    #[test]
    fn noisy_copy_extremes() {
        let db1 = generate_database(&one_relation(500, Some(CorrelationMode::NoisyCopy(1.0)))).unwrap();
        let t = db1.table("t").unwrap();
        assert_eq!(t.column("a").unwrap().values, t.column("b").unwrap().values);
        let db0 = generate_database(&one_relation(500, Some(CorrelationMode::NoisyCopy(0.0)))).unwrap();
        let t0 = db0.table("t").unwrap();
        let same = t0
            .column("a")
            .unwrap()
            .values
            .iter()
            .zip(&t0.column("b").unwrap().values)
            .filter(|(x, y)| x == y)
            .count();
        assert!(same < 100, "p=0 should leave b independent, {same} matches");
    }

    #[test]
    fn generation_is_deterministic() {
        let s = one_relation(1000, Some(CorrelationMode::NoisyCopy(0.3)));
        assert_eq!(generate_database(&s).unwrap(), generate_database(&s).unwrap());
    }

    #[test]
    fn invalid_schema_is_rejected() {
        let mut s = one_relation(10, None);
        s.relations[0].attributes[0].domain = 1;
        assert!(matches!(generate_database(&s), Err(Error::Validation { .. })));
        let mut s = one_relation(10, Some(CorrelationMode::NoisyCopy(1.5)));
        assert!(generate_database(&s).is_err());
        s.correlations[0].mode = CorrelationMode::Equal;
        s.correlations[0].attr_b = "zz".into();
        assert!(matches!(generate_database(&s), Err(Error::Lookup { .. })));
    }

    fn fixed_db(a: Vec<u32>, b: Vec<u32>) -> SynthDatabase {
        let rows = a.len();
        SynthDatabase {
            tables: vec![Table {
                name: "t".into(),
                rows,
                columns: vec![Column::new("a".into(), 10, a), Column::new("b".into(), 10, b)],
            }],
        }
    }

    #[test]
    fn single_predicate_estimate() {
        // value 3 held by exactly 100 of 1000 rows
        let a: Vec<u32> = (0..1000).map(|i| if i < 100 { 3 } else { 1 + (i % 2) as u32 }).collect();
        let db = fixed_db(a.clone(), a);
        let est = avi_estimate(&record(&["t"], vec![eq("t", "a", 3)], vec![]), &db).unwrap();
        assert!((est - 100.0).abs() < 1e-9);
    }

    #[test]
    fn avi_multiplies_selectivities_regardless_of_correlation() {
        let a: Vec<u32> = (0..1000).map(|i| (i % 10) as u32).collect();
        let db = fixed_db(a.clone(), a);
        let rec = record(&["t"], vec![eq("t", "a", 3), eq("t", "b", 3)], vec![]);
        assert!((avi_estimate(&rec, &db).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(true_cardinality(&rec, &db).unwrap(), 100);
    }

    #[test]
    fn full_scan_and_out_of_domain() {
        let db = generate_database(&one_relation(321, None)).unwrap();
        assert_eq!(true_cardinality(&record(&["t"], vec![], vec![]), &db).unwrap(), 321);
        assert_eq!(true_cardinality(&record(&["t"], vec![eq("t", "a", 99)], vec![]), &db).unwrap(), 0);
        let est = avi_estimate(&record(&["t"], vec![eq("t", "a", 99)], vec![]), &db).unwrap();
        assert_eq!(est, DEFAULT_ESTIMATE_FLOOR);
    }

    #[test]
    fn unknown_names_are_lookup_errors() {
        let db = generate_database(&one_relation(10, None)).unwrap();
        assert!(matches!(
            avi_estimate(&record(&["zz"], vec![], vec![]), &db),
            Err(Error::Lookup { kind: "relation", .. })
        ));
        assert!(matches!(
            true_cardinality(&record(&["t"], vec![eq("t", "zz", 1)], vec![]), &db),
            Err(Error::Lookup { kind: "attribute", .. })
        ));
    }

    fn two_tables() -> SynthDatabase {
        SynthDatabase {
            tables: vec![
                Table { name: "r".into(), rows: 4, columns: vec![Column::new("k".into(), 3, vec![0, 0, 1, 2])] },
                Table { name: "s".into(), rows: 3, columns: vec![Column::new("k".into(), 3, vec![0, 1, 1])] },
            ],
        }
    }

    #[test]
    fn join_counts_and_uniformity_estimate() {
        let db = two_tables();
        let j = Join::new(ColumnRef::new("r", "k"), ColumnRef::new("s", "k"));
        let rec = record(&["r", "s"], vec![], vec![j]);
        // matches: 0 -> 2*1, 1 -> 1*2, 2 -> 1*0
        assert_eq!(true_cardinality(&rec, &db).unwrap(), 4);
        // 4 * 3 / max(3, 2)
        assert!((avi_estimate(&rec, &db).unwrap() - 4.0).abs() < 1e-12);
        // cross product without join predicate
        assert_eq!(true_cardinality(&record(&["r", "s"], vec![], vec![]), &db).unwrap(), 12);
    }

    #[test]
    fn cross_product_respects_bound() {
        let db = two_tables();
        assert_eq!(true_cardinality_bounded(&record(&["r", "s"], vec![], vec![]), &db, 5).unwrap(), 12);
    }

    #[test]
    fn safety_bound_is_enforced_for_cycles() {
        let db = SynthDatabase {
            tables: vec![
                Table { name: "r".into(), rows: 4, columns: vec![Column::new("k".into(), 3, vec![0, 0, 1, 2]), Column::new("m".into(), 3, vec![0, 1, 1, 2])] },
                Table { name: "s".into(), rows: 3, columns: vec![Column::new("k".into(), 3, vec![0, 1, 1]), Column::new("m".into(), 3, vec![1, 1, 2])] },
            ],
        };
        let mut rec = record(&["r", "s"], vec![], vec![]);
        rec.joins.insert(Join::new(ColumnRef::new("r", "k"), ColumnRef::new("s", "k")));
        rec.joins.insert(Join::new(ColumnRef::new("r", "m"), ColumnRef::new("s", "m")));
        assert!(matches!(true_cardinality_bounded(&rec, &db, 11), Err(Error::Resource(_))));
        // pairs with k and m equal: (r1,s0)? r1=(0,1), s0=(0,1) yes; r2=(1,1) with s1=(1,1) yes; r2,s2=(1,2) no
        assert_eq!(true_cardinality_bounded(&rec, &db, 12).unwrap(), 2);
    }

    #[test]
    fn snapshot_round_trip() {
        let db = generate_database(&one_relation(257, Some(CorrelationMode::NoisyCopy(0.5)))).unwrap();
        let mut buf = Vec::new();
        db.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf[0], SNAPSHOT_VERSION);
        assert_eq!(SynthDatabase::read_snapshot(&buf[..]).unwrap(), db);
        buf[0] = 9;
        assert!(SynthDatabase::read_snapshot(&buf[..]).is_err());
    }

    #[test]
    fn zipf_skews_towards_zero() {
        let mut s = one_relation(5000, None);
        s.relations[0].attributes[0].distribution = Distribution::Zipf(1.2);
        let db = generate_database(&s).unwrap();
        let h = &db.table("t").unwrap().column("a").unwrap().histogram;
        assert!(h[0] > h[9] * 5, "{h:?}");
    }
}
