//! Grouped grid search for the minimum-norm weight vector that meets every
//! guardrail, plus an exhaustive joint search used as its oracle.
//!
//! Starting from `W = 0`, each group of the partition is searched in turn.
//! Every point of the group's grid is scored with the other weights held at
//! their current values. A point is valid when `Ŝᵢ ≥ εᵢ` for every metric in
//! the group, and the valid point with the smallest squared norm is written
//! back into `W`. Equal norms resolve to the lexicographically smallest
//! sub-vector.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{norm_sq, GuardrailConfig, PairDataset, WeightVector};
use crate::error::{Error, Result};
use crate::estimator::{estimate_metrics, MetricEstimate};

/// Default cap on the number of points any single search may enumerate.
pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Sub-vector over the group's indices, ascending index order.
    pub weights: Vec<f64>,
    /// `Ŝᵢ − εᵢ` for each metric of the group.
    pub margins: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics {
    /// Metric indices of the group, ascending.
    pub group: Vec<usize>,
    pub pass: usize,
    pub candidates: Vec<Candidate>,
    /// `None` when no candidate was valid.
    pub chosen: Option<Vec<f64>>,
    /// Per metric, the largest margin reached anywhere on the grid.
    pub best_margins: Vec<f64>,
}

impl GroupDiagnostics {
    pub fn valid_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.valid).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub weights: WeightVector,
    pub per_group: Vec<GroupDiagnostics>,
    /// Estimates at the final weights.
    pub achieved: MetricEstimate,
    /// True iff every group was feasible and every grouped guardrail still
    /// holds at the final weights.
    pub feasible: bool,
    /// Grouped metrics below their threshold at the final weights. Non-empty
    /// only when a later group undid an earlier group's guardrail.
    pub violations: Vec<usize>,
}

fn sorted_group(group: &[usize]) -> Vec<usize> {
    let mut g = group.to_vec();
    g.sort_unstable();
    g.dedup();
    g
}

/// Candidate sub-vectors for `group`: the Cartesian product of each member's
/// grid, lowest index most significant, values ascending.
pub fn grid_points(config: &GuardrailConfig, group: &[usize]) -> Result<Vec<Vec<f64>>> {
    let group = sorted_group(group);
    let axes = group
        .iter()
        .map(|&i| {
            config
                .grid_for(i)
                .ok_or_else(|| Error::Config(format!("metric {i} has no grid spec")))?
                .values()
        })
        .collect::<Result<Vec<_>>>()?;
    let size = axes.iter().map(|a| a.len() as u128).product::<u128>();
    if size > DEFAULT_GRID_CAP {
        return Err(Error::GridTooLarge {
            size,
            cap: DEFAULT_GRID_CAP,
        });
    }
    let mut points: Vec<Vec<f64>> = vec![Vec::with_capacity(group.len())];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Ok(points)
}

/// Total order used to pick among valid points: squared norm, then
/// lexicographic.
fn better(a: &[f64], a_norm: f64, b: &[f64], b_norm: f64) -> bool {
    match a_norm.total_cmp(&b_norm) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(Ordering::Less),
    }
}

fn evaluate_group(
    dataset: &PairDataset,
    current: &WeightVector,
    group: &[usize],
    config: &GuardrailConfig,
    pass: usize,
) -> Result<GroupDiagnostics> {
    let group = sorted_group(group);
    let points = grid_points(config, &group)?;
    let candidates = points
        .into_par_iter()
        .map(|weights| {
            let mut temp = current.clone();
            for (&i, &v) in group.iter().zip(&weights) {
                temp.set(i, v);
            }
            let est = estimate_metrics(dataset, &temp)?;
            let margins: Vec<f64> = group.iter().map(|&i| est.values[i] - config.thresholds[i]).collect();
            let valid = margins.iter().all(|&m| m >= 0.0);
            Ok(Candidate {
                weights,
                margins,
                valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut chosen: Option<(&[f64], f64)> = None;
    for c in candidates.iter().filter(|c| c.valid) {
        let norm = norm_sq(&c.weights);
        if chosen.is_none_or(|(w, n)| better(&c.weights, norm, w, n)) {
            chosen = Some((&c.weights, norm));
        }
    }
    let best_margins = (0..group.len())
        .map(|k| {
            candidates
                .iter()
                .map(|c| c.margins[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let chosen = chosen.map(|(w, _)| w.to_vec());
    Ok(GroupDiagnostics {
        group,
        pass,
        candidates,
        chosen,
        best_margins,
    })
}

fn check(dataset: &PairDataset, config: &GuardrailConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(format!(
            "dataset {} has no pairs",
            dataset.treatment_id
        )));
    }
    config.validate(dataset.n_metrics())
}

/// Searches one group's grid with every other weight held at `current`.
///
/// Returns [`Error::Infeasible`] if no grid point meets the group's guardrails.
pub fn select_group_weights(
    dataset: &PairDataset,
    current: &WeightVector,
    group: &[usize],
    config: &GuardrailConfig,
) -> Result<GroupDiagnostics> {
    check(dataset, config)?;
    if current.len() != dataset.n_metrics() {
        return Err(Error::Shape {
            expected: dataset.n_metrics(),
            found: current.len(),
        });
    }
    let diag = evaluate_group(dataset, current, group, config, 0)?;
    if diag.chosen.is_none() {
        return Err(Error::Infeasible {
            group: diag.group,
            best_margins: diag.best_margins,
        });
    }
    Ok(diag)
}

fn violations(config: &GuardrailConfig, achieved: &MetricEstimate) -> Vec<usize> {
    config
        .grouped_indices()
        .into_iter()
        .filter(|&i| achieved.values[i] < config.thresholds[i])
        .collect()
}

/// Grouped weight selection over the whole partition.
///
/// An infeasible group keeps weight 0, the run is marked infeasible, and the
/// remaining groups are still searched so the diagnostics are complete.
pub fn act_select(dataset: &PairDataset, config: &GuardrailConfig) -> Result<SelectionResult> {
    check(dataset, config)?;
    let mut w = WeightVector::zeros(dataset.n_metrics());
    let mut per_group = Vec::new();
    let mut any_infeasible = false;
    for pass in 0..config.passes {
        any_infeasible = false;
        for group in &config.partition {
            let diag = evaluate_group(dataset, &w, group, config, pass)?;
            match &diag.chosen {
                Some(sub) => {
                    for (&i, &v) in diag.group.iter().zip(sub) {
                        w.set(i, v);
                    }
                }
                None => {
                    any_infeasible = true;
                    for &i in &diag.group {
                        w.set(i, 0.0);
                    }
                }
            }
            per_group.push(diag);
        }
    }
    let achieved = estimate_metrics(dataset, &w)?;
    let violations = violations(config, &achieved);
    let feasible = !any_infeasible && violations.is_empty();
    Ok(SelectionResult {
        weights: w,
        per_group,
        achieved,
        feasible,
        violations,
    })
}

/// Exhaustive search over the joint grid of every grouped weight.
///
/// Refuses grids larger than `cap` points.
pub fn joint_brute_force(dataset: &PairDataset, config: &GuardrailConfig, cap: u128) -> Result<SelectionResult> {
    check(dataset, config)?;
    let indices = config.grouped_indices();
    let axes = indices
        .iter()
        .map(|&i| config.grid_for(i).expect("validated").values())
        .collect::<Result<Vec<_>>>()?;
    let size = axes.iter().map(|a| a.len() as u128).product::<u128>();
    if size > cap {
        return Err(Error::GridTooLarge { size, cap });
    }

    let n = dataset.n_metrics();
    let mut odometer = vec![0usize; axes.len()];
    let mut candidates = Vec::with_capacity(size as usize);
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let sub: Vec<f64> = odometer.iter().zip(&axes).map(|(&k, axis)| axis[k]).collect();
        let mut w = WeightVector::zeros(n);
        for (&i, &v) in indices.iter().zip(&sub) {
            w.set(i, v);
        }
        let est = estimate_metrics(dataset, &w)?;
        let margins: Vec<f64> = indices.iter().map(|&i| est.values[i] - config.thresholds[i]).collect();
        let valid = margins.iter().all(|&m| m >= 0.0);
        if valid {
            let norm = norm_sq(&sub);
            if best.as_ref().is_none_or(|(b, bn)| better(&sub, norm, b, *bn)) {
                best = Some((sub.clone(), norm));
            }
        }
        candidates.push(Candidate {
            weights: sub,
            margins,
            valid,
        });

        // Advance the odometer; the last axis turns fastest.
        let mut k = axes.len();
        let exhausted = loop {
            if k == 0 {
                break true;
            }
            k -= 1;
            odometer[k] += 1;
            if odometer[k] < axes[k].len() {
                break false;
            }
            odometer[k] = 0;
        };
        if exhausted {
            break;
        }
    }

    let best_margins: Vec<f64> = (0..indices.len())
        .map(|k| {
            candidates
                .iter()
                .map(|c| c.margins[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let Some((sub, _)) = best else {
        return Err(Error::Infeasible {
            group: indices,
            best_margins,
        });
    };
    let mut w = WeightVector::zeros(n);
    for (&i, &v) in indices.iter().zip(&sub) {
        w.set(i, v);
    }
    let achieved = estimate_metrics(dataset, &w)?;
    let diag = GroupDiagnostics {
        group: indices,
        pass: 0,
        candidates,
        chosen: Some(sub),
        best_margins,
    };
    Ok(SelectionResult {
        weights: w,
        per_group: vec![diag],
        achieved,
        feasible: true,
        violations: Vec::new(),
    })
}
