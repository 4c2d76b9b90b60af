//! Workload drift: which bucket of query templates feeds each stream step.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Template index → bucket id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    buckets: Vec<usize>,
    n_buckets: usize,
}

impl BucketAssignment {
    pub fn new(buckets: Vec<usize>, n_buckets: usize) -> Result<Self> {
        if n_buckets == 0 {
            return Err(Error::validation("buckets", "need at least one bucket"));
        }
        let mut used = vec![false; n_buckets];
        for &b in &buckets {
            if b >= n_buckets {
                return Err(Error::validation("buckets", format!("bucket {b} out of range 0..{n_buckets}")));
            }
            used[b] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::validation("buckets", format!("bucket {empty} has no templates")));
        }
        Ok(Self { buckets, n_buckets })
    }

    pub fn bucket_of(&self, template: usize) -> usize {
        self.buckets[template]
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    pub fn templates_in(&self, bucket: usize) -> Vec<usize> {
        (0..self.buckets.len()).filter(|&i| self.buckets[i] == bucket).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.buckets
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Greedy agglomerative grouping of templates by the Jaccard similarity of
/// their relation sets. A cluster's relation set is the union of its
/// members'. Buckets are numbered by the first template they contain.
pub fn cluster_buckets(relation_sets: &[BTreeSet<String>], n_buckets: usize) -> Result<BucketAssignment> {
    if n_buckets == 0 || relation_sets.len() < n_buckets {
        return Err(Error::validation(
            "buckets",
            format!("cannot split {} templates into {n_buckets} buckets", relation_sets.len()),
        ));
    }
    // (members, relation union)
    let mut clusters: Vec<(Vec<usize>, BTreeSet<String>)> = relation_sets
        .iter()
        .enumerate()
        .map(|(i, s)| (vec![i], s.clone()))
        .collect();
    while clusters.len() > n_buckets {
        let mut best = (f64::NEG_INFINITY, 0, 1);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let sim = jaccard(&clusters[i].1, &clusters[j].1);
                if sim > best.0 {
                    best = (sim, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let (members, rels) = clusters.remove(j);
        clusters[i].0.extend(members);
        clusters[i].1.extend(rels);
    }
    clusters.sort_by_key(|(members, _)| *members.iter().min().expect("non-empty cluster"));
    let mut buckets = vec![0; relation_sets.len()];
    for (b, (members, _)) in clusters.iter().enumerate() {
        for &m in members {
            buckets[m] = b;
        }
    }
    BucketAssignment::new(buckets, n_buckets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// Step divided by stream length, so centers and width live in [0, 1].
    #[default]
    Normalized,
    /// Raw step indices, as in the original experiment (centers in steps).
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DriftSchedule {
    Hard {
        switch_points: Vec<usize>,
    },
    Soft {
        centers: Vec<f64>,
        width: f64,
        #[serde(default)]
        time: TimeScale,
    },
}

impl DriftSchedule {
    /// Centers spread uniformly: bucket b sits at (b + 0.5) / B.
    pub fn soft_uniform(n_buckets: usize, width: f64) -> Self {
        DriftSchedule::Soft {
            centers: (0..n_buckets).map(|b| (b as f64 + 0.5) / n_buckets as f64).collect(),
            width,
            time: TimeScale::Normalized,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            DriftSchedule::Hard { switch_points } => {
                if switch_points.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::validation("drift", "switch points must be strictly increasing"));
                }
                if switch_points.last().is_some_and(|&s| s >= n) {
                    return Err(Error::validation("drift", "switch points must be < n"));
                }
            }
            DriftSchedule::Soft { centers, width, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::validation("drift", "soft drift width d must be > 0"));
                }
                if centers.is_empty() || centers.iter().any(|c| !c.is_finite()) {
                    return Err(Error::validation("drift", "soft drift needs finite centers"));
                }
                let distinct: BTreeSet<u64> = centers.iter().map(|c| c.to_bits()).collect();
                if distinct.len() != centers.len() {
                    return Err(Error::validation("drift", "soft drift centers must be distinct"));
                }
            }
        }
        Ok(())
    }

    pub fn n_buckets(&self) -> usize {
        match self {
            DriftSchedule::Hard { switch_points } => switch_points.len() + 1,
            DriftSchedule::Soft { centers, .. } => centers.len(),
        }
    }

    /// Steps at which the regime changes: switch points for hard drift,
    /// midpoints between consecutive centers for soft drift.
    pub fn boundaries(&self, n: usize) -> Vec<usize> {
        match self {
            DriftSchedule::Hard { switch_points } => switch_points.clone(),
            DriftSchedule::Soft { centers, time, .. } => {
                let mut c = centers.clone();
                c.sort_by(f64::total_cmp);
                c.windows(2)
                    .map(|w| {
                        let mid = (w[0] + w[1]) / 2.0;
                        match time {
                            TimeScale::Normalized => (mid * n as f64).round() as usize,
                            TimeScale::Raw => mid.round() as usize,
                        }
                    })
                    .filter(|&s| s > 0 && s < n)
                    .collect()
            }
        }
    }

    /// Draws the bucket for step `t`. For soft drift the probability vector is
    /// returned alongside.
    pub fn draw<R: Rng + ?Sized>(&self, t: usize, n: usize, rng: &mut R) -> (usize, Option<Vec<f64>>) {
        match self {
            DriftSchedule::Hard { switch_points } => (hard_bucket(t, switch_points), None),
            DriftSchedule::Soft { .. } => {
                let probs = soft_bucket_probs(t, n, self);
                (sample_bucket(&probs, rng), Some(probs))
            }
        }
    }
}

/// Number of switch points at or before `t`: a step exactly on a switch
/// point already belongs to the new bucket.
pub fn hard_bucket(t: usize, switch_points: &[usize]) -> usize {
    switch_points.partition_point(|&s| s <= t)
}

/// Softmax over negative squared distances to the bucket centers, computed
/// with the max logit subtracted. Hard schedules give a one-hot vector.
pub fn soft_bucket_probs(t: usize, n: usize, schedule: &DriftSchedule) -> Vec<f64> {
    match schedule {
        DriftSchedule::Hard { switch_points } => {
            let mut p = vec![0.0; switch_points.len() + 1];
            p[hard_bucket(t, switch_points)] = 1.0;
            p
        }
        DriftSchedule::Soft { centers, width, time } => {
            let tau = match time {
                TimeScale::Normalized => t as f64 / n.max(1) as f64,
                TimeScale::Raw => t as f64,
            };
            softmax_distance(tau, centers, *width)
        }
    }
}

pub fn softmax_distance(tau: f64, centers: &[f64], width: f64) -> Vec<f64> {
    let logits: Vec<f64> = centers.iter().map(|c| -(tau - c).powi(2) / width).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Categorical draw by inverse CDF.
pub fn sample_bucket<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
