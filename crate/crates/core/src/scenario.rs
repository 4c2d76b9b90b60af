//! Database schema plus query templates that together define a workload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthSchema;
use crate::workload::QueryTemplate;

/// Three buckets over disjoint relations: loosely correlated filters and a
/// key/foreign-key join; fully copied columns; zipf-skewed join keys.
const THREE_BUCKET: &str = include_str!("scenarios/three_bucket.json");

pub const BUILTIN: [&str; 1] = ["three-bucket"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: SynthSchema,
    pub templates: Vec<QueryTemplate>,
}

impl Scenario {
    /// A built-in scenario; its database seed is replaced by `seed`.
    pub fn builtin(name: &str, seed: u64) -> Result<Self> {
        let text = match name {
            "three-bucket" => THREE_BUCKET,
            _ => return Err(Error::Lookup { kind: "scenario", name: name.to_string() }),
        };
        let mut s: Scenario = serde_json::from_str(text).expect("built-in scenario parses");
        s.schema.seed = seed;
        Ok(s)
    }

    pub fn from_files(schema: &Path, templates: &Path) -> Result<Self> {
        let schema: SynthSchema = read_json(schema)?;
        let templates: Vec<QueryTemplate> = read_json(templates)?;
        Ok(Self { schema, templates })
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::cluster_buckets;
    use crate::workload::explicit_assignment;

    #[test]
    fn builtin_is_valid() {
        let s = Scenario::builtin("three-bucket", 3).unwrap();
        s.schema.validate().unwrap();
        assert_eq!(s.schema.seed, 3);
        let explicit = explicit_assignment(&s.templates).unwrap().unwrap();
        assert_eq!(explicit.n_buckets(), 3);
        let sets: Vec<_> = s.templates.iter().map(|t| t.relations.clone()).collect();
        assert_eq!(cluster_buckets(&sets, 3).unwrap(), explicit);
    }

    #[test]
    fn unknown_builtin() {
        assert!(Scenario::builtin("four-bucket", 0).is_err());
    }
}
