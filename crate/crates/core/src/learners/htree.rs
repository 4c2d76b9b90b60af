use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_observation, Regressor};
use crate::error::Result;
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTreeConfig {
    /// Samples a leaf must see between split attempts.
    pub grace_period: u64,
    pub max_depth: usize,
    /// Split confidence.
    pub delta: f64,
    /// Tie-break threshold on the Hoeffding bound.
    pub tau: f64,
    /// Equal-width bins per feature and leaf.
    pub bins: usize,
}

impl Default for HoeffdingTreeConfig {
    fn default() -> Self {
        Self { grace_period: 200, max_depth: 5, delta: 1e-5, tau: 0.05, bins: 16 }
    }
}

/// Count, sum and sum of squares of targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, y: f64) {
        self.n += 1.0;
        self.sum += y;
        self.sum_sq += y * y;
    }

    pub fn add(&self, other: &Moments) -> Moments {
        Moments { n: self.n + other.n, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    pub fn mean(&self) -> f64 {
        if self.n > 0.0 {
            self.sum / self.n
        } else {
            0.0
        }
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.n > 0.0 {
            (self.sum_sq / self.n - self.mean().powi(2)).max(0.0)
        } else {
            0.0
        }
    }
}

/// Equal-width histogram of targets over one feature's observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedFeature {
    pub lo: f64,
    pub width: f64,
    pub bins: Vec<Moments>,
}

impl BinnedFeature {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Self {
        let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 0.0 };
        Self { lo, width, bins: vec![Moments::default(); n_bins] }
    }

    fn bin_of(&self, x: f64) -> usize {
        if self.width == 0.0 {
            return 0;
        }
        let b = ((x - self.lo) / self.width).floor();
        (b.max(0.0) as usize).min(self.bins.len() - 1)
    }

    pub fn push(&mut self, x: f64, y: f64) {
        let b = self.bin_of(x);
        self.bins[b].push(y);
    }

    /// Best split among the inner bin edges: (variance reduction, threshold).
    pub fn best_split(&self) -> Option<(f64, f64)> {
        if self.width == 0.0 {
            return None;
        }
        let total = self.bins.iter().fold(Moments::default(), |acc, m| acc.add(m));
        let mut left = Moments::default();
        let mut best: Option<(f64, f64)> = None;
        for i in 1..self.bins.len() {
            left = left.add(&self.bins[i - 1]);
            let right = Moments { n: total.n - left.n, sum: total.sum - left.sum, sum_sq: total.sum_sq - left.sum_sq };
            if left.n == 0.0 || right.n == 0.0 {
                continue;
            }
            let vr = total.variance() - (left.n * left.variance() + right.n * right.variance()) / total.n;
            if best.is_none_or(|(b, _)| vr > b) {
                best = Some((vr, self.lo + i as f64 * self.width));
            }
        }
        best
    }

    /// Target moments on each side of `threshold` (left: x < threshold).
    fn sides(&self, threshold: f64) -> (Moments, Moments) {
        let mut l = Moments::default();
        let mut r = Moments::default();
        for (i, m) in self.bins.iter().enumerate() {
            if self.lo + (i as f64 + 0.5) * self.width < threshold {
                l = l.add(m);
            } else {
                r = r.add(m);
            }
        }
        (l, r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub depth: usize,
    pub stats: Moments,
    /// Samples routed here since the leaf was created.
    pub routed: u64,
    /// Samples routed here since creation or the last split attempt.
    pub since_attempt: u64,
    /// Samples held until the first attempt fixes the bin ranges.
    buffer: Vec<(FeatureVector, f64)>,
    histograms: Option<BTreeMap<String, BinnedFeature>>,
}

impl Leaf {
    fn new(depth: usize, stats: Moments) -> Self {
        Self { depth, stats, routed: 0, since_attempt: 0, buffer: Vec::new(), histograms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(Leaf),
    Split { feature: String, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub depth: usize,
    pub feature: String,
    pub threshold: f64,
    /// Samples routed to the leaf before it split.
    pub leaf_samples: u64,
    pub merit: f64,
    pub bound: f64,
}

/// Incremental regression tree that splits a leaf once the Hoeffding bound
/// says the best candidate split is reliably better than the runner-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTree {
    config: HoeffdingTreeConfig,
    nodes: Vec<Node>,
    overall: Moments,
    /// Smallest and largest target seen.
    y_range: Option<(f64, f64)>,
    splits: Vec<SplitEvent>,
}

impl HoeffdingTree {
    pub fn new(config: HoeffdingTreeConfig) -> Self {
        Self {
            config,
            nodes: vec![Node::Leaf(Leaf::new(0, Moments::default()))],
            overall: Moments::default(),
            y_range: None,
            splits: Vec::new(),
        }
    }

    pub fn config(&self) -> &HoeffdingTreeConfig {
        &self.config
    }

    fn leaf_index(&self, x: &FeatureVector) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split { feature, threshold, left, right } => {
                    let v = x.get(feature).unwrap_or(0.0);
                    i = if v < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(l) => Some(l.depth),
                Node::Split { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn splits(&self) -> &[SplitEvent] {
        &self.splits
    }

    /// Feature and threshold of the root split, if the root has split.
    pub fn root_split(&self) -> Option<(&str, f64)> {
        match &self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, *threshold)),
            Node::Leaf(_) => None,
        }
    }

    fn range(&self) -> f64 {
        self.y_range.map_or(0.0, |(lo, hi)| hi - lo)
    }

    /// ε = sqrt(R² ln(1/δ) / 2n)
    pub fn hoeffding_bound(range: f64, delta: f64, n: f64) -> f64 {
        (range * range * (1.0 / delta).ln() / (2.0 * n)).sqrt()
    }

    fn attempt_split(&mut self, idx: usize) {
        let bins = self.config.bins;
        let range = self.range();
        let Node::Leaf(leaf) = &mut self.nodes[idx] else { unreachable!() };
        leaf.since_attempt = 0;
        if leaf.histograms.is_none() {
            let mut bounds: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            for (x, _) in &leaf.buffer {
                for (name, v) in x.iter() {
                    let e = bounds.entry(name.to_string()).or_insert((v, v));
                    e.0 = e.0.min(v);
                    e.1 = e.1.max(v);
                }
            }
            let mut hist: BTreeMap<String, BinnedFeature> =
                bounds.into_iter().map(|(n, (lo, hi))| (n, BinnedFeature::new(lo, hi, bins))).collect();
            for (x, y) in leaf.buffer.drain(..) {
                for (name, h) in hist.iter_mut() {
                    h.push(x.get(name).unwrap_or(0.0), y);
                }
            }
            leaf.histograms = Some(hist);
        }
        if leaf.depth >= self.config.max_depth {
            return;
        }
        let hist = leaf.histograms.as_ref().expect("built above");
        let mut candidates: Vec<(f64, f64, &str)> = hist
            .iter()
            .filter_map(|(name, h)| h.best_split().map(|(m, t)| (m, t, name.as_str())))
            .collect();
        // Highest merit first; name order breaks exact ties.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.2.cmp(b.2)));
        let Some(&(best, threshold, feature)) = candidates.first() else { return };
        let second = candidates.get(1).map_or(0.0, |c| c.0);
        let n = leaf.routed as f64;
        let eps = Self::hoeffding_bound(range, self.config.delta, n);
        if !(best > 0.0 && (best - second > eps || eps < self.config.tau)) {
            return;
        }
        let feature = feature.to_string();
        let (l_stats, r_stats) = hist[&feature].sides(threshold);
        let depth = leaf.depth;
        let event = SplitEvent {
            depth,
            feature: feature.clone(),
            threshold,
            leaf_samples: leaf.routed,
            merit: best,
            bound: eps,
        };
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(Leaf::new(depth + 1, l_stats)));
        self.nodes.push(Node::Leaf(Leaf::new(depth + 1, r_stats)));
        self.nodes[idx] = Node::Split { feature, threshold, left, right: left + 1 };
        self.splits.push(event);
    }
}

impl Regressor for HoeffdingTree {
    fn predict(&self, x: &FeatureVector) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) if l.stats.n > 0.0 => l.stats.mean(),
            _ => self.overall.mean(),
        }
    }

    fn learn(&mut self, x: &FeatureVector, y: f64) -> Result<()> {
        check_observation(x, y)?;
        self.overall.push(y);
        self.y_range = Some(self.y_range.map_or((y, y), |(lo, hi)| (lo.min(y), hi.max(y))));
        let idx = self.leaf_index(x);
        let grace = self.config.grace_period;
        let Node::Leaf(leaf) = &mut self.nodes[idx] else { unreachable!() };
        leaf.stats.push(y);
        leaf.routed += 1;
        leaf.since_attempt += 1;
        match &mut leaf.histograms {
            Some(hist) => {
                for (name, h) in hist.iter_mut() {
                    h.push(x.get(name).unwrap_or(0.0), y);
                }
            }
            None => leaf.buffer.push((x.clone(), y)),
        }
        if leaf.since_attempt >= grace {
            self.attempt_split(idx);
        }
        Ok(())
    }
}
