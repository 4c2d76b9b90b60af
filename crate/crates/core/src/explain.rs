//! Import of PostgreSQL `EXPLAIN (ANALYZE, FORMAT JSON)` output.
//!
//! Only operators that change cardinality survive: scans, joins, and unary
//! nodes that carry their own `Filter`. Pass-through nodes (`Hash`, `Sort`,
//! `Materialize`, `Aggregate`, ...) are collapsed into their child.
//! Conditions PostgreSQL prints in a shape we understand become typed
//! [`Predicate`]s or [`Join`]s; anything else is kept verbatim as an
//! [`OpaquePredicate`].

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::plan::{
    enumerate_subplans, ColumnRef, Join, Literal, NodeKind, OpaquePredicate, Operator, PlanRecord, PlanTree,
    Predicate,
};

const JOIN_NODES: &[&str] = &["Hash Join", "Merge Join", "Nested Loop"];
const JOIN_CONDITIONS: &[&str] = &["Hash Cond", "Merge Cond", "Join Filter"];

/// Parses an EXPLAIN document in PostgreSQL's JSON array form `[{"Plan": {...}}]`.
pub fn import_postgres_explain(document: &str) -> Result<PlanTree> {
    let value: Value = serde_json::from_str(document).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let (root, path) = match &value {
        Value::Array(items) => (
            items
                .first()
                .ok_or_else(|| Error::import("/", "empty EXPLAIN array"))?,
            "/0".to_string(),
        ),
        Value::Object(_) => (&value, String::new()),
        _ => return Err(Error::import("/", "expected a JSON array or object")),
    };
    let plan = root
        .get("Plan")
        .ok_or_else(|| Error::import(format!("{path}/Plan"), "missing \"Plan\""))?;
    let converted = convert(plan, &format!("{path}/Plan"))?;
    let mut tree = converted.tree;
    for join in converted.pending {
        tree.opaque.push(OpaquePredicate {
            relation: None,
            expression: join.signature(),
        });
    }
    tree.validate()?;
    Ok(tree)
}

/// Imports a document and flattens every sub-plan into a record with id
/// `{prefix}:{i}`.
pub fn explain_to_records(document: &str, prefix: &str) -> Result<Vec<PlanRecord>> {
    enumerate_subplans(&import_postgres_explain(document)?, prefix)
}

/// [`explain_to_records`] as plan JSONL, one line per record.
pub fn explain_to_jsonl(document: &str, prefix: &str) -> Result<String> {
    let mut out = String::new();
    for rec in explain_to_records(document, prefix)? {
        out.push_str(&rec.to_jsonl());
        out.push('\n');
    }
    Ok(out)
}

struct Converted {
    tree: PlanTree,
    /// Join conditions found below (e.g. in a parameterized index scan) that
    /// belong to an enclosing join node.
    pending: Vec<Join>,
}

fn object<'a>(node: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    node.as_object()
        .ok_or_else(|| Error::import(path, "plan node is not an object"))
}

fn rows(node: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    let v = node.get(key).ok_or_else(|| {
        let msg = if key == "Actual Rows" {
            "missing \"Actual Rows\" (was the plan produced with ANALYZE?)".to_string()
        } else {
            format!("missing \"{key}\"")
        };
        Error::import(format!("{path}/{key}"), msg)
    })?;
    v.as_f64()
        .filter(|r| r.is_finite() && *r >= 0.0)
        .ok_or_else(|| Error::import(format!("{path}/{key}"), "not a non-negative number"))
}

fn convert(value: &Value, path: &str) -> Result<Converted> {
    let node = object(value, path)?;
    let node_type = node
        .get("Node Type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::import(format!("{path}/Node Type"), "missing \"Node Type\""))?;
    let estimated = rows(node, "Plan Rows", path)?;
    let actual = rows(node, "Actual Rows", path)?.round() as u64;
    let children: Vec<&Value> = match node.get("Plans") {
        Some(Value::Array(items)) => items.iter().collect(),
        Some(_) => return Err(Error::import(format!("{path}/Plans"), "not an array")),
        None => Vec::new(),
    };

    if let Some(relation_name) = node.get("Relation Name").and_then(Value::as_str) {
        let alias = node
            .get("Alias")
            .and_then(Value::as_str)
            .unwrap_or(relation_name)
            .to_string();
        let mut tree = PlanTree::scan(alias.clone(), estimated, actual);
        let mut pending = Vec::new();
        for key in ["Index Cond", "Recheck Cond", "Filter"] {
            if key == "Recheck Cond" && node.contains_key("Index Cond") {
                continue;
            }
            if let Some(expr) = node.get(key).and_then(Value::as_str) {
                for cond in parse_condition(expr, Some(&alias)) {
                    match cond {
                        Condition::Predicate(p) => tree.predicates.push(p),
                        Condition::Join(j) => pending.push(j),
                        Condition::Opaque(text) => tree.opaque.push(OpaquePredicate {
                            relation: Some(alias.clone()),
                            expression: text,
                        }),
                    }
                }
            }
        }
        return Ok(Converted { tree, pending });
    }

    if JOIN_NODES.contains(&node_type) {
        if children.len() != 2 {
            return Err(Error::import(
                format!("{path}/Plans"),
                format!("{node_type} must have two inputs"),
            ));
        }
        let left = convert(children[0], &format!("{path}/Plans/0"))?;
        let right = convert(children[1], &format!("{path}/Plans/1"))?;
        let mut tree = PlanTree::join(left.tree, right.tree, estimated, actual);
        let mut relations = Vec::new();
        collect_relations(&tree, &mut relations);
        let mut pending = Vec::new();
        for j in left.pending.into_iter().chain(right.pending) {
            if relations.contains(&j.left().relation) && relations.contains(&j.right().relation) {
                tree.joins.push(j);
            } else {
                pending.push(j);
            }
        }
        for key in JOIN_CONDITIONS {
            if let Some(expr) = node.get(*key).and_then(Value::as_str) {
                for cond in parse_condition(expr, None) {
                    match cond {
                        Condition::Join(j) => tree.joins.push(j),
                        Condition::Predicate(p) if relations.contains(&p.relation) => {
                            tree.predicates.push(p)
                        }
                        Condition::Predicate(_) => tree.opaque.push(OpaquePredicate {
                            relation: None,
                            expression: expr.to_string(),
                        }),
                        Condition::Opaque(text) => tree.opaque.push(OpaquePredicate {
                            relation: None,
                            expression: text,
                        }),
                    }
                }
            }
        }
        tree.joins.sort();
        tree.joins.dedup();
        return Ok(Converted { tree, pending });
    }

    match children.len() {
        0 => Err(Error::import(
            path,
            format!("unsupported leaf operator \"{node_type}\""),
        )),
        1 => {
            let child = convert(children[0], &format!("{path}/Plans/0"))?;
            let Some(expr) = node.get("Filter").and_then(Value::as_str) else {
                return Ok(child);
            };
            let mut relations = Vec::new();
            collect_relations(&child.tree, &mut relations);
            let default_rel = (relations.len() == 1).then(|| relations[0].clone());
            let mut tree = PlanTree {
                kind: NodeKind::Filter,
                relation: None,
                estimated_rows: estimated,
                actual_rows: actual,
                predicates: Vec::new(),
                joins: Vec::new(),
                opaque: Vec::new(),
                children: vec![child.tree],
            };
            for cond in parse_condition(expr, default_rel.as_deref()) {
                match cond {
                    Condition::Predicate(p) if relations.contains(&p.relation) => tree.predicates.push(p),
                    Condition::Join(j)
                        if relations.contains(&j.left().relation)
                            && relations.contains(&j.right().relation) =>
                    {
                        tree.joins.push(j)
                    }
                    Condition::Opaque(text) => tree.opaque.push(OpaquePredicate {
                        relation: default_rel.clone(),
                        expression: text,
                    }),
                    _ => tree.opaque.push(OpaquePredicate {
                        relation: None,
                        expression: expr.to_string(),
                    }),
                }
            }
            Ok(Converted {
                tree,
                pending: child.pending,
            })
        }
        _ => Err(Error::import(
            path,
            format!("unsupported multi-input operator \"{node_type}\""),
        )),
    }
}

fn collect_relations(tree: &PlanTree, out: &mut Vec<String>) {
    if let Some(r) = &tree.relation {
        out.push(r.clone());
    }
    for c in &tree.children {
        collect_relations(c, out);
    }
}

#[derive(Debug, PartialEq)]
enum Condition {
    Predicate(Predicate),
    Join(Join),
    Opaque(String),
}

#[derive(Debug, PartialEq)]
enum Operand {
    Column(ColumnRef),
    Literal(Literal),
}

/// Splits a PostgreSQL-deparsed boolean expression into typed conjuncts.
fn parse_condition(expr: &str, default_relation: Option<&str>) -> Vec<Condition> {
    let body = strip_parens(expr.trim());
    if split_top_level(body, " OR ").len() > 1 {
        return vec![Condition::Opaque(body.to_string())];
    }
    split_top_level(body, " AND ")
        .into_iter()
        .map(|conj| {
            let conj = strip_parens(conj.trim());
            parse_comparison(conj, default_relation)
                .unwrap_or_else(|| Condition::Opaque(conj.to_string()))
        })
        .collect()
}

fn parse_comparison(text: &str, default_relation: Option<&str>) -> Option<Condition> {
    let (pos, op_text) = find_operator(text)?;
    let op = Operator::from_symbol(op_text)?;
    let lhs = parse_operand(&text[..pos], default_relation)?;
    let rhs = parse_operand(&text[pos + op_text.len()..], default_relation)?;
    match (lhs, rhs) {
        (Operand::Column(a), Operand::Column(b)) if op == Operator::Eq => {
            (a != b).then(|| Condition::Join(Join::new(a, b)))
        }
        (Operand::Column(c), Operand::Literal(lit)) => Some(Condition::Predicate(Predicate {
            relation: c.relation,
            attribute: c.attribute,
            operator: op,
            literal: lit,
        })),
        (Operand::Literal(lit), Operand::Column(c)) => Some(Condition::Predicate(Predicate {
            relation: c.relation,
            attribute: c.attribute,
            operator: flip(op),
            literal: lit,
        })),
        _ => None,
    }
}

fn flip(op: Operator) -> Operator {
    match op {
        Operator::Eq => Operator::Eq,
        Operator::Lt => Operator::Gt,
        Operator::Le => Operator::Ge,
        Operator::Gt => Operator::Lt,
        Operator::Ge => Operator::Le,
    }
}

/// Position of the single top-level comparison operator, if there is exactly one.
fn find_operator(text: &str) -> Option<(usize, &'static str)> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut found = None;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_quote {
            if c == b'\'' {
                in_quote = false;
            }
            i += 1;
            continue;
        }
        match c {
            b'\'' => in_quote = true,
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'<' | b'>' | b'=' | b'!' | b'~' if depth == 0 => {
                let two = text.get(i..i + 2).unwrap_or("");
                let op: &'static str = match two {
                    "<=" => "<=",
                    ">=" => ">=",
                    "<>" | "!=" | "!~" | "~~" | "~*" => return None,
                    _ => match c {
                        b'<' => "<",
                        b'>' => ">",
                        b'=' => "=",
                        _ => return None,
                    },
                };
                if found.is_some() {
                    return None;
                }
                found = Some((i, op));
                i += op.len();
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    found
}

fn parse_operand(text: &str, default_relation: Option<&str>) -> Option<Operand> {
    let mut t = strip_parens(text.trim());
    if let Some(pos) = find_cast(t) {
        t = strip_parens(t[..pos].trim());
    }
    if t.len() >= 2 && t.starts_with('\'') && t.ends_with('\'') {
        return Some(Operand::Literal(Literal::Text(t[1..t.len() - 1].replace("''", "'"))));
    }
    if let Ok(v) = t.parse::<i64>() {
        return Some(Operand::Literal(Literal::Int(v)));
    }
    if t.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-') {
        if let Ok(v) = t.parse::<f64>() {
            return v.is_finite().then_some(Operand::Literal(Literal::Float(v)));
        }
    }
    let is_ident = |s: &str| {
        !s.is_empty()
            && s.chars().all(|c| c.is_alphanumeric() || c == '_')
            && !s.chars().next().unwrap().is_ascii_digit()
    };
    match t.split_once('.') {
        Some((rel, attr)) if is_ident(rel) && is_ident(attr) => {
            Some(Operand::Column(ColumnRef::new(rel, attr)))
        }
        None if is_ident(t) && !matches!(t, "NULL" | "true" | "false") => {
            default_relation.map(|rel| Operand::Column(ColumnRef::new(rel, t)))
        }
        _ => None,
    }
}

/// Byte position of a top-level `::` type cast.
fn find_cast(text: &str) -> Option<usize> {
    let mut depth = 0i32;
    let mut in_quote = false;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'\'' => in_quote = !in_quote,
            b'(' if !in_quote => depth += 1,
            b')' if !in_quote => depth -= 1,
            b':' if !in_quote && depth == 0 && bytes.get(i + 1) == Some(&b':') => return Some(i),
            _ => {}
        }
    }
    None
}

/// Removes parentheses that wrap the entire string.
fn strip_parens(mut s: &str) -> &str {
    loop {
        let t = s.trim();
        if !(t.starts_with('(') && t.ends_with(')')) || !wraps_all(t) {
            return t;
        }
        s = &t[1..t.len() - 1];
    }
}

fn wraps_all(t: &str) -> bool {
    let mut depth = 0i32;
    let mut in_quote = false;
    for (i, c) in t.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '(' if !in_quote => depth += 1,
            ')' if !in_quote => {
                depth -= 1;
                if depth == 0 && i != t.len() - 1 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn split_top_level<'a>(text: &'a str, sep: &str) -> Vec<&'a str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\'' => in_quote = !in_quote,
            b'(' if !in_quote => depth += 1,
            b')' if !in_quote => depth -= 1,
            _ if !in_quote && depth == 0 && text[i..].starts_with(sep) => {
                parts.push(&text[start..i]);
                i += sep.len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(&text[start..]);
    parts
}
