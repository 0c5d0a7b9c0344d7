//! Offline pairwise estimator.
//!
//! For each logged pair the item with the strictly higher score under `W` wins;
//! equal scores go to item B. The estimate for metric `i` is the mean of the
//! winners' item-level labels `sᵢ`:
//!
//! ```text
//! Ŝᵢ(W) = mean over pairs of ( s_{i,A}·[r_A > r_B] + s_{i,B}·[r_B ≥ r_A] )
//! ```
//!
//! Sums go through [`LabelSum`], so the result is bit-identical under any
//! permutation of the pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{PairDataset, RandomPair, WeightVector};
use crate::error::{Error, Result};
use crate::ranking::score_unchecked;
use crate::stats::{percentile_interval, rng, LabelSum};

/// Minimum bootstrap resamples accepted by [`estimate_with_ci`].
pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
}

/// Per-metric percentile intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub level: f64,
    pub bounds: Vec<(f64, f64)>,
}

impl ConfidenceIntervals {
    pub fn half_width(&self, metric: usize) -> f64 {
        let (lo, hi) = self.bounds[metric];
        (hi - lo) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    /// `Ŝᵢ(W)` per metric.
    pub values: Vec<f64>,
    pub pair_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceIntervals>,
}

/// Which side of `pair` wins under `w`. Ties go to B.
pub fn pair_winner(pair: &RandomPair, w: &WeightVector) -> Result<Winner> {
    for item in [&pair.item_a, &pair.item_b] {
        if item.terms.len() != w.len() {
            return Err(Error::Shape {
                expected: item.terms.len(),
                found: w.len(),
            });
        }
    }
    Ok(winner_unchecked(pair, w.as_slice()))
}

#[inline]
pub(crate) fn winner_unchecked(pair: &RandomPair, w: &[f64]) -> Winner {
    if score_unchecked(&pair.item_a, w) > score_unchecked(&pair.item_b, w) {
        Winner::A
    } else {
        Winner::B
    }
}

#[inline]
fn winner_labels<'a>(pair: &'a RandomPair, w: &[f64]) -> &'a [f64] {
    match winner_unchecked(pair, w) {
        Winner::A => &pair.item_a.labels,
        Winner::B => &pair.item_b.labels,
    }
}

fn check_inputs(dataset: &PairDataset, w: &WeightVector) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(format!(
            "dataset {} has no pairs",
            dataset.treatment_id
        )));
    }
    if w.len() != dataset.n_metrics() {
        return Err(Error::Shape {
            expected: dataset.n_metrics(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `Ŝ(W)` over every pair of a validated dataset.
pub fn estimate_metrics(dataset: &PairDataset, w: &WeightVector) -> Result<MetricEstimate> {
    check_inputs(dataset, w)?;
    let n = dataset.n_metrics();
    let mut sums = vec![LabelSum::default(); n];
    for pair in &dataset.pairs {
        for (acc, &s) in sums.iter_mut().zip(winner_labels(pair, w.as_slice())) {
            acc.add(s);
        }
    }
    Ok(MetricEstimate {
        values: sums.iter().map(LabelSum::mean).collect(),
        pair_count: dataset.len(),
        ci: None,
    })
}

/// [`estimate_metrics`] plus percentile-bootstrap intervals over pairs.
///
/// Intervals are widened to include the point estimate when the percentile
/// interval would exclude it.
pub fn estimate_with_ci(
    dataset: &PairDataset,
    w: &WeightVector,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<MetricEstimate> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Parameter(format!("confidence {confidence} not in (0, 1)")));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::Parameter(format!(
            "need at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    let mut estimate = estimate_metrics(dataset, w)?;
    let winners: Vec<&[f64]> = dataset.pairs.iter().map(|p| winner_labels(p, w.as_slice())).collect();
    let m = winners.len();
    let n = dataset.n_metrics();

    let mut rng = rng(seed);
    let mut replicates = vec![Vec::with_capacity(resamples); n];
    let mut sums = vec![0.0; n];
    for _ in 0..resamples {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for _ in 0..m {
            let labels = winners[rng.random_range(0..m)];
            for (s, &v) in sums.iter_mut().zip(labels) {
                *s += v;
            }
        }
        for (rep, s) in replicates.iter_mut().zip(&sums) {
            rep.push(s / m as f64);
        }
    }
    let bounds = replicates
        .into_iter()
        .zip(&estimate.values)
        .map(|(rep, &point)| {
            let (lo, hi) = percentile_interval(rep, confidence);
            (lo.min(point), hi.max(point))
        })
        .collect();
    estimate.ci = Some(ConfidenceIntervals {
        level: confidence,
        bounds,
    });
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Item;

    fn pair(id: usize, base_a: f64, base_b: f64, labels_a: Vec<f64>, labels_b: Vec<f64>) -> RandomPair {
        let n = labels_a.len();
        RandomPair {
            pair_id: format!("p{id}"),
            item_a: Item::new(format!("a{id}"), base_a, vec![0.0; n], labels_a),
            item_b: Item::new(format!("b{id}"), base_b, vec![0.0; n], labels_b),
        }
    }

    fn dataset(pairs: Vec<RandomPair>) -> PairDataset {
        let n = pairs[0].item_a.labels.len();
        PairDataset::new("t", (0..n).map(|i| format!("s{i}")).collect(), pairs)
    }

    #[test]
    fn winner_examples() {
        let w = WeightVector::zeros(1);
        assert_eq!(
            pair_winner(&pair(0, 2.0, 1.0, vec![0.0], vec![0.0]), &w).unwrap(),
            Winner::A
        );
        assert_eq!(
            pair_winner(&pair(0, 1.0, 1.0, vec![0.0], vec![0.0]), &w).unwrap(),
            Winner::B
        );

        // base_A > base_B, but B's term overturns it: A = 1 + 0.5·0 = 1.0, B = 0.8 + 0.5·1 = 1.3.
        let mut p = pair(0, 1.0, 0.8, vec![0.0], vec![0.0]);
        p.item_b.terms = vec![1.0];
        assert_eq!(pair_winner(&p, &WeightVector::zeros(1)).unwrap(), Winner::A);
        assert_eq!(pair_winner(&p, &WeightVector::new(vec![0.5])).unwrap(), Winner::B);

        assert!(matches!(
            pair_winner(&p, &WeightVector::zeros(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn estimate_examples() {
        let ds = dataset(vec![pair(0, 1.0, 0.0, vec![1.0, 0.0], vec![0.0, 1.0])]);
        assert_eq!(
            estimate_metrics(&ds, &WeightVector::zeros(2)).unwrap().values,
            vec![1.0, 0.0]
        );

        let ds = dataset(vec![
            pair(0, 1.0, 0.0, vec![1.0], vec![0.0]),
            pair(1, 0.0, 1.0, vec![1.0], vec![0.0]),
        ]);
        assert_eq!(
            estimate_metrics(&ds, &WeightVector::zeros(1)).unwrap().values,
            vec![0.5]
        );

        // All ties: the mean of B's labels.
        let ds = dataset(vec![
            pair(0, 0.0, 0.0, vec![1.0], vec![0.25]),
            pair(1, 0.0, 0.0, vec![1.0], vec![0.75]),
            pair(2, 0.0, 0.0, vec![1.0], vec![0.5]),
        ]);
        assert_eq!(
            estimate_metrics(&ds, &WeightVector::zeros(1)).unwrap().values,
            vec![0.5]
        );

        let empty = PairDataset::new("t", vec!["s0".into()], vec![]);
        assert!(matches!(
            estimate_metrics(&empty, &WeightVector::zeros(1)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ci_zero_variance_and_determinism() {
        let pairs = (0..50).map(|i| pair(i, 1.0, 0.0, vec![1.0], vec![0.0])).collect();
        let ds = dataset(pairs);
        let w = WeightVector::zeros(1);
        let est = estimate_with_ci(&ds, &w, 0.95, 200, 7).unwrap();
        assert_eq!(est.ci.unwrap().bounds, vec![(1.0, 1.0)]);

        let pairs = (0..200)
            .map(|i| pair(i, 1.0, 0.0, vec![(i % 3 == 0) as u8 as f64], vec![0.0]))
            .collect();
        let ds = dataset(pairs);
        let a = estimate_with_ci(&ds, &w, 0.9, 300, 11).unwrap();
        let b = estimate_with_ci(&ds, &w, 0.9, 300, 11).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = a.ci.unwrap().bounds[0];
        assert!(lo <= a.values[0] && a.values[0] <= hi);
    }

    #[test]
    fn ci_width_matches_normal_approximation() {
        // 1000 winners, half labelled 1: normal-theory 95% width is 2·1.96·√(0.25/1000) ≈ 0.0620.
        let pairs = (0..1000)
            .map(|i| pair(i, 1.0, 0.0, vec![(i % 2) as f64], vec![0.0]))
            .collect();
        let ds = dataset(pairs);
        let est = estimate_with_ci(&ds, &WeightVector::zeros(1), 0.95, 1000, 3).unwrap();
        let (lo, hi) = est.ci.unwrap().bounds[0];
        let expected = 2.0 * 1.96 * (0.25f64 / 1000.0).sqrt();
        let width = hi - lo;
        assert!(
            (width - expected).abs() <= 0.3 * expected,
            "width {width} vs {expected}"
        );
    }

    #[test]
    fn ci_parameter_errors() {
        let ds = dataset(vec![pair(0, 1.0, 0.0, vec![1.0], vec![0.0])]);
        let w = WeightVector::zeros(1);
        for c in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(estimate_with_ci(&ds, &w, c, 100, 0), Err(Error::Parameter(_))));
        }
        assert!(matches!(
            estimate_with_ci(&ds, &w, 0.95, 99, 0),
            Err(Error::Parameter(_))
        ));
    }
}
