//! Core data types shared by every other module.
//!
//! Metric index order is fixed by `PairDataset::metric_names`; every vector
//! here (terms, labels, weights, thresholds) is aligned to it.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ranked candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    /// Score from the primary objective alone; the ranking score at `W = 0`.
    pub base_score: f64,
    /// Ranking-formula term per secondary metric.
    pub terms: Vec<f64>,
    /// Item-level value of each secondary metric, in `[0, 1]`.
    pub labels: Vec<f64>,
}

impl Item {
    pub fn new(item_id: impl Into<String>, base_score: f64, terms: Vec<f64>, labels: Vec<f64>) -> Self {
        Item {
            item_id: item_id.into(),
            base_score,
            terms,
            labels,
        }
    }
}

/// One logged randomized trial: two candidates shown side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPair {
    pub pair_id: String,
    pub item_a: Item,
    pub item_b: Item,
}

/// All logged pairs for one treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub treatment_id: String,
    pub metric_names: Vec<String>,
    pub pairs: Vec<RandomPair>,
}

impl PairDataset {
    pub fn new(treatment_id: impl Into<String>, metric_names: Vec<String>, pairs: Vec<RandomPair>) -> Self {
        PairDataset {
            treatment_id: treatment_id.into(),
            metric_names,
            pairs,
        }
    }

    pub fn n_metrics(&self) -> usize {
        self.metric_names.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Hyperparameters `W`, one weight per secondary metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        WeightVector(weights)
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.0[index] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }

    /// Squared L2 norm, summed in index order.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        WeightVector(v)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, w| acc + w * w)
}

/// Grid values closer to zero than this fraction of a step are snapped to exactly 0.
const ZERO_SNAP: f64 = 1e-9;
/// Largest number of values one axis of a grid may hold.
pub const MAX_AXIS_POINTS: usize = 1_000_000;

/// Arithmetic sequence `min, min + step, ...` of candidate values for one weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Weight index this grid belongs to.
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(index: usize, min: f64, max: f64, step: f64) -> Self {
        GridSpec { index, min, max, step }
    }

    fn check(&self) -> Result<usize> {
        let GridSpec { index, min, max, step } = *self;
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(Error::Config(format!("grid for weight {index} has non-finite bounds")));
        }
        if min > max {
            return Err(Error::Config(format!("grid for weight {index}: min {min} > max {max}")));
        }
        if step <= 0.0 {
            return Err(Error::Config(format!(
                "grid for weight {index}: step {step} must be > 0"
            )));
        }
        let span = (max - min) / step;
        if span + 1.0 > MAX_AXIS_POINTS as f64 {
            return Err(Error::Config(format!(
                "grid for weight {index} has more than {MAX_AXIS_POINTS} points"
            )));
        }
        Ok((span + ZERO_SNAP).floor() as usize + 1)
    }

    /// The values `min + j * step` for `j = 0, 1, ...` while not past `max`.
    pub fn values(&self) -> Result<Vec<f64>> {
        let count = self.check()?;
        Ok((0..count)
            .map(|j| {
                let v = self.min + j as f64 * self.step;
                if v.abs() <= self.step * ZERO_SNAP {
                    0.0
                } else {
                    v
                }
            })
            .collect())
    }
}

/// Thresholds, objective partition, and candidate grids for a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailConfig {
    /// Minimum acceptable estimate per metric.
    pub thresholds: Vec<f64>,
    /// Disjoint groups of metric indices, searched in order. Indices not in
    /// any group keep weight 0.
    pub partition: Vec<Vec<usize>>,
    pub grids: Vec<GridSpec>,
    /// Passes over the partition. Anything above 1 is experimental.
    #[serde(default = "default_passes")]
    pub passes: usize,
}

fn default_passes() -> usize {
    1
}

impl GuardrailConfig {
    pub fn new(thresholds: Vec<f64>, partition: Vec<Vec<usize>>, grids: Vec<GridSpec>) -> Self {
        GuardrailConfig {
            thresholds,
            partition,
            grids,
            passes: 1,
        }
    }

    pub fn n_metrics(&self) -> usize {
        self.thresholds.len()
    }

    pub fn grid_for(&self, index: usize) -> Option<&GridSpec> {
        self.grids.iter().find(|g| g.index == index)
    }

    /// Union of all groups, ascending.
    pub fn grouped_indices(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.partition.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// Checks every config invariant against a metric count of `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.thresholds.len() != n {
            return Err(Error::Shape {
                expected: n,
                found: self.thresholds.len(),
            });
        }
        if let Some(i) = self.thresholds.iter().position(|t| !t.is_finite()) {
            return Err(Error::Config(format!("threshold {i} is not finite")));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be at least 1".into()));
        }
        let mut seen_grid = BTreeSet::new();
        for g in &self.grids {
            if g.index >= n {
                return Err(Error::Config(format!(
                    "grid index {} out of range for {n} metrics",
                    g.index
                )));
            }
            if !seen_grid.insert(g.index) {
                return Err(Error::Config(format!("duplicate grid for weight {}", g.index)));
            }
            if !g.values()?.contains(&0.0) {
                return Err(Error::Config(format!("grid for weight {} does not contain 0", g.index)));
            }
        }
        let mut seen = BTreeSet::new();
        for (j, group) in self.partition.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Config(format!("group {j} is empty")));
            }
            for &i in group {
                if i >= n {
                    return Err(Error::Config(format!("group {j} names metric {i}, only {n} exist")));
                }
                if !seen.insert(i) {
                    return Err(Error::Config(format!("metric {i} appears in more than one group")));
                }
                if self.grid_for(i).is_none() {
                    return Err(Error::Config(format!("metric {i} in group {j} has no grid spec")));
                }
            }
        }
        Ok(())
    }
}

/// One broken invariant found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub pair_id: Option<String>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pair_id {
            Some(id) => write!(f, "pair {id}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Data(self.violations))
        }
    }
}

/// Checks every item, pair, and dataset invariant. Never fails; violations are data.
pub fn validate_dataset(dataset: &PairDataset) -> ValidationReport {
    let mut violations = Vec::new();
    let n = dataset.n_metrics();
    if dataset.pairs.is_empty() {
        violations.push(Violation {
            pair_id: None,
            field: "pairs".into(),
            message: "dataset has no pairs".into(),
        });
    }
    let mut names = BTreeSet::new();
    for name in &dataset.metric_names {
        if !names.insert(name) {
            violations.push(Violation {
                pair_id: None,
                field: "metric_names".into(),
                message: format!("duplicate metric name {name:?}"),
            });
        }
    }
    for pair in &dataset.pairs {
        let mut push = |field: String, message: String| {
            violations.push(Violation {
                pair_id: Some(pair.pair_id.clone()),
                field,
                message,
            });
        };
        if pair.item_a.item_id == pair.item_b.item_id {
            push(
                "item_b.item_id".into(),
                format!("both items have id {:?}", pair.item_a.item_id),
            );
        }
        for (side, item) in [("item_a", &pair.item_a), ("item_b", &pair.item_b)] {
            if !item.base_score.is_finite() {
                push(format!("{side}.base_score"), "non-finite value".into());
            }
            if item.terms.len() != n {
                push(
                    format!("{side}.terms"),
                    format!("length {} but dataset has {n} metrics", item.terms.len()),
                );
            }
            if item.labels.len() != n {
                push(
                    format!("{side}.labels"),
                    format!("length {} but dataset has {n} metrics", item.labels.len()),
                );
            }
            for (i, t) in item.terms.iter().enumerate() {
                if !t.is_finite() {
                    push(format!("{side}.terms[{i}]"), "non-finite value".into());
                }
            }
            for (i, s) in item.labels.iter().enumerate() {
                if !s.is_finite() {
                    push(format!("{side}.labels[{i}]"), "non-finite value".into());
                } else if !(0.0..=1.0).contains(s) {
                    push(format!("{side}.labels[{i}]"), format!("label out of [0,1]: {s}"));
                }
            }
        }
    }
    ValidationReport { violations }
}
