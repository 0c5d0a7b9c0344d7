//! Synthetic recommender platform.
//!
//! Items carry a latent quality `q ~ N(0, 1)`, a base score, one term per
//! secondary metric, and one Bernoulli label per metric. Labels are drawn once
//! at generation time and stay fixed, so an item's label is a property of the
//! item rather than of an impression.
//!
//! Label probabilities go through a logistic link:
//!
//! ```text
//! p_i = sigmoid(intercept_i + label_coef_i·z_i + Σ cross_k·z_k + quality_coef_i·q)
//! ```
//!
//! where `z_k` is metric `k`'s standardized term.
//!
//! Logging ([`log_random_pairs`]) and online simulation
//! ([`simulate_online_metric`]) draw pairs with the same sampler, so for equal
//! seeds and counts they replay the exact same trials.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Item, PairDataset, RandomPair, WeightVector};
use crate::error::{Error, Result};
use crate::estimator::Winner;
use crate::ranking::score_unchecked;
use crate::stats::{rng, sha256_hex, LabelSum};

/// Contribution of another metric's standardized term to a label's logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCoef {
    pub from: usize,
    pub coef: f64,
}

/// Generative model for one secondary metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub name: String,
    #[serde(default)]
    pub term_mean: f64,
    #[serde(default = "one")]
    pub term_spread: f64,
    /// Logit intercept; `sigmoid(intercept)` is the label rate at an average item.
    #[serde(default)]
    pub intercept: f64,
    /// Logit slope on this metric's own standardized term.
    #[serde(default)]
    pub label_coef: f64,
    #[serde(default)]
    pub quality_coef: f64,
    #[serde(default)]
    pub cross_coefs: Vec<CrossCoef>,
}

fn one() -> f64 {
    1.0
}

impl MetricModel {
    pub fn new(name: impl Into<String>, intercept: f64, label_coef: f64) -> Self {
        MetricModel {
            name: name.into(),
            term_mean: 0.0,
            term_spread: 1.0,
            intercept,
            label_coef,
            quality_coef: 0.0,
            cross_coefs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseScoreModel {
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub spread: f64,
    #[serde(default)]
    pub quality_coef: f64,
}

impl Default for BaseScoreModel {
    fn default() -> Self {
        BaseScoreModel {
            mean: 0.0,
            spread: 1.0,
            quality_coef: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCorpusConfig {
    pub item_count: usize,
    pub metrics: Vec<MetricModel>,
    #[serde(default)]
    pub base: BaseScoreModel,
    #[serde(default)]
    pub seed: u64,
}

impl SimCorpusConfig {
    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// A generated item pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    /// Used as the treatment id of datasets logged from this corpus.
    pub name: String,
    pub metric_names: Vec<String>,
    pub config_sha256: String,
    pub items: Vec<Item>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn n_metrics(&self) -> usize {
        self.metric_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Simulated online metric levels `S̃ᵢ(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineOutcome {
    pub values: Vec<f64>,
    pub impressions: usize,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Samples a corpus from `config`. Deterministic in `config.seed`.
pub fn generate_corpus(config: &SimCorpusConfig) -> Result<Corpus> {
    let n = config.metrics.len();
    if config.item_count < 2 {
        return Err(Error::Parameter(format!(
            "item_count must be at least 2, got {}",
            config.item_count
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("at least one metric model is required".into()));
    }
    for m in &config.metrics {
        let numbers = [m.term_mean, m.term_spread, m.intercept, m.label_coef, m.quality_coef];
        if numbers.iter().any(|x| !x.is_finite()) || m.term_spread < 0.0 {
            return Err(Error::Parameter(format!(
                "metric model {:?} has invalid parameters",
                m.name
            )));
        }
        if let Some(c) = m.cross_coefs.iter().find(|c| c.from >= n || !c.coef.is_finite()) {
            return Err(Error::Parameter(format!(
                "metric model {:?}: bad cross coefficient from {}",
                m.name, c.from
            )));
        }
    }
    let b = &config.base;
    if ![b.mean, b.spread, b.quality_coef].iter().all(|x| x.is_finite()) || b.spread < 0.0 {
        return Err(Error::Parameter("base score model has invalid parameters".into()));
    }

    let mut warnings = Vec::new();
    let all_flat = b.spread == 0.0 && b.quality_coef == 0.0 && config.metrics.iter().all(|m| m.term_spread == 0.0);
    if all_flat {
        warnings.push("every spread is zero: all items share the same scores".to_string());
    }

    let mut rng = rng(config.seed);
    let width = (config.item_count - 1).to_string().len();
    let mut z = vec![0.0; n];
    let items = (0..config.item_count)
        .map(|k| {
            let q: f64 = rng.sample(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let base_score = b.mean + b.quality_coef * q + b.spread * noise;
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let terms = config
                .metrics
                .iter()
                .zip(&z)
                .map(|(m, zi)| m.term_mean + m.term_spread * zi)
                .collect();
            let labels = config
                .metrics
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let cross: f64 = m.cross_coefs.iter().map(|c| c.coef * z[c.from]).sum();
                    let p = sigmoid(m.intercept + m.label_coef * z[i] + cross + m.quality_coef * q);
                    let u: f64 = rng.random();
                    if u < p {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            Item::new(format!("i{k:0width$}"), base_score, terms, labels)
        })
        .collect();

    Ok(Corpus {
        name: "prod".into(),
        metric_names: config.metrics.iter().map(|m| m.name.clone()).collect(),
        config_sha256: config.sha256(),
        items,
        warnings,
    })
}

/// Two distinct indices, uniformly over ordered pairs, so A/B assignment is
/// itself random.
#[inline]
fn draw_pair(rng: &mut ChaCha8Rng, k: usize) -> (usize, usize) {
    let a = rng.random_range(0..k);
    let mut b = rng.random_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn check_corpus(corpus: &Corpus) -> Result<()> {
    if corpus.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "corpus {} has fewer than 2 items",
            corpus.name
        )));
    }
    Ok(())
}

/// Logs `m` randomized pairs from `corpus`.
pub fn log_random_pairs(corpus: &Corpus, m: usize, seed: u64) -> Result<PairDataset> {
    check_corpus(corpus)?;
    if m == 0 {
        return Err(Error::EmptyInput("pair count must be at least 1".into()));
    }
    let mut rng = rng(seed);
    let width = (m - 1).to_string().len();
    let pairs = (0..m)
        .map(|j| {
            let (a, b) = draw_pair(&mut rng, corpus.len());
            RandomPair {
                pair_id: format!("p{j:0width$}"),
                item_a: corpus.items[a].clone(),
                item_b: corpus.items[b].clone(),
            }
        })
        .collect();
    Ok(PairDataset::new(
        corpus.name.clone(),
        corpus.metric_names.clone(),
        pairs,
    ))
}

/// Index of the winning item for each of `impressions` fresh random pairs.
pub(crate) fn online_winners(corpus: &Corpus, w: &WeightVector, impressions: usize, seed: u64) -> Result<Vec<usize>> {
    check_corpus(corpus)?;
    if impressions == 0 {
        return Err(Error::EmptyInput("impressions must be at least 1".into()));
    }
    if w.len() != corpus.n_metrics() {
        return Err(Error::Shape {
            expected: corpus.n_metrics(),
            found: w.len(),
        });
    }
    let mut rng = rng(seed);
    let scores: Vec<f64> = corpus
        .items
        .iter()
        .map(|it| score_unchecked(it, w.as_slice()))
        .collect();
    Ok((0..impressions)
        .map(|_| {
            let (a, b) = draw_pair(&mut rng, corpus.len());
            match if scores[a] > scores[b] { Winner::A } else { Winner::B } {
                Winner::A => a,
                Winner::B => b,
            }
        })
        .collect())
}

pub(crate) fn mean_labels(corpus: &Corpus, winners: &[usize]) -> Vec<f64> {
    let mut sums = vec![LabelSum::default(); corpus.n_metrics()];
    for &k in winners {
        for (acc, &s) in sums.iter_mut().zip(&corpus.items[k].labels) {
            acc.add(s);
        }
    }
    sums.iter().map(LabelSum::mean).collect()
}

/// Shows the winner of `impressions` fresh random pairs under `w` and averages
/// the winners' labels.
pub fn simulate_online_metric(
    corpus: &Corpus,
    w: &WeightVector,
    impressions: usize,
    seed: u64,
) -> Result<OnlineOutcome> {
    let winners = online_winners(corpus, w, impressions, seed)?;
    Ok(OnlineOutcome {
        values: mean_labels(corpus, &winners),
        impressions,
        seed,
    })
}

/// A copy of `corpus` whose base scores are pushed down for items with a high
/// label on `metric_index`, so ranking by base score alone loses metric
/// `metric_index`.
///
/// Each item's shift is `magnitude · (sᵢ − mean sᵢ) · u` with a per-item
/// `u ~ U(0.5, 1.5)` drawn from `seed`.
pub fn make_decrease_variant(corpus: &Corpus, metric_index: usize, magnitude: f64, seed: u64) -> Result<Corpus> {
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::Parameter(format!(
            "magnitude must be positive and finite, got {magnitude}"
        )));
    }
    if metric_index >= corpus.n_metrics() {
        return Err(Error::Parameter(format!(
            "metric index {metric_index} out of range for {} metrics",
            corpus.n_metrics()
        )));
    }
    check_corpus(corpus)?;
    let mean = corpus.items.iter().map(|it| it.labels[metric_index]).sum::<f64>() / corpus.len() as f64;
    let mut rng = rng(seed);
    let items = corpus
        .items
        .iter()
        .map(|it| {
            let u: f64 = rng.random_range(0.5..1.5);
            let mut it = it.clone();
            it.base_score -= magnitude * (it.labels[metric_index] - mean) * u;
            it
        })
        .collect();
    let provenance = format!("{}:decrease:{metric_index}:{magnitude:e}:{seed}", corpus.config_sha256);
    Ok(Corpus {
        name: format!("{}_decrease", corpus.name),
        metric_names: corpus.metric_names.clone(),
        config_sha256: sha256_hex(provenance.as_bytes()),
        items,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate_metrics;

    fn config(items: usize, seed: u64) -> SimCorpusConfig {
        SimCorpusConfig {
            item_count: items,
            metrics: vec![
                MetricModel::new("likes", -0.5, 1.5),
                MetricModel::new("shorts", -1.0, 0.0),
            ],
            base: BaseScoreModel::default(),
            seed,
        }
    }

    fn pearson_naive(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn corpus_is_deterministic_and_binary() {
        let a = generate_corpus(&config(1000, 5)).unwrap();
        let b = generate_corpus(&config(1000, 5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.items.len(), 1000);
        assert!(a.items.iter().flat_map(|it| &it.labels).all(|&s| s == 0.0 || s == 1.0));
        assert_ne!(a, generate_corpus(&config(1000, 6)).unwrap());
    }

    #[test]
    fn zero_label_coef_means_uncorrelated_term() {
        let c = generate_corpus(&config(10_000, 9)).unwrap();
        let col = |f: fn(&Item) -> f64| c.items.iter().map(f).collect::<Vec<_>>();
        let r0 = pearson_naive(&col(|it| it.terms[0]), &col(|it| it.labels[0]));
        let r1 = pearson_naive(&col(|it| it.terms[1]), &col(|it| it.labels[1]));
        assert!(r0 > 0.2, "metric 0 should track its term, r = {r0}");
        assert!(r1.abs() < 0.05, "metric 1 has no label coefficient, r = {r1}");
    }

    #[test]
    fn corpus_parameter_errors() {
        assert!(matches!(generate_corpus(&config(1, 0)), Err(Error::Parameter(_))));
        let mut flat = config(4, 0);
        flat.base.spread = 0.0;
        flat.metrics.iter_mut().for_each(|m| m.term_spread = 0.0);
        let c = generate_corpus(&flat).unwrap();
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn pair_logging_contract() {
        let c = generate_corpus(&config(10, 1)).unwrap();
        let ds = log_random_pairs(&c, 5, 3).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.pairs.iter().all(|p| p.item_a.item_id != p.item_b.item_id));
        assert_eq!(ds, log_random_pairs(&c, 5, 3).unwrap());
        assert!(matches!(log_random_pairs(&c, 0, 3), Err(Error::EmptyInput(_))));

        let mut tiny = c.clone();
        tiny.items.truncate(1);
        assert!(matches!(log_random_pairs(&tiny, 5, 3), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn unordered_pairs_are_uniform() {
        // 100k pairs over 10 items: each of the 45 unordered pairs has
        // p = 1/45 and binomial σ = √(N p (1 - p)).
        let c = generate_corpus(&config(10, 1)).unwrap();
        let n = 100_000usize;
        let ds = log_random_pairs(&c, n, 17).unwrap();
        let idx = |id: &str| c.items.iter().position(|it| it.item_id == id).unwrap();
        let mut counts = [[0u32; 10]; 10];
        let mut a_first = 0u32;
        for p in &ds.pairs {
            let (a, b) = (idx(&p.item_a.item_id), idx(&p.item_b.item_id));
            if a < b {
                a_first += 1;
            }
            counts[a.min(b)][a.max(b)] += 1;
        }
        let p = 1.0 / 45.0;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for (i, row) in counts.iter().enumerate() {
            for &cnt in &row[i + 1..] {
                let dev = cnt as f64 - expected;
                assert!(dev.abs() < 3.0 * sigma, "count {cnt} vs {expected}");
                chi2 += dev * dev / expected;
            }
        }
        // 44 degrees of freedom; the 0.999 quantile is about 78.7.
        assert!(chi2 < 78.7, "chi-square {chi2}");
        // A/B order is randomized.
        let half = n as f64 / 2.0;
        assert!((a_first as f64 - half).abs() < 4.0 * (n as f64 * 0.25).sqrt());
    }

    #[test]
    fn online_metric_examples() {
        let mut c = generate_corpus(&config(50, 2)).unwrap();
        c.items.iter_mut().for_each(|it| it.labels[0] = 1.0);
        let out = simulate_online_metric(&c, &WeightVector::new(vec![0.3, -0.2]), 1000, 4).unwrap();
        assert_eq!(out.values[0], 1.0);

        let mut flat = generate_corpus(&config(50, 2)).unwrap();
        flat.items.iter_mut().for_each(|it| it.terms = vec![0.5, 0.5]);
        let a = simulate_online_metric(&flat, &WeightVector::zeros(2), 2000, 8).unwrap();
        let b = simulate_online_metric(&flat, &WeightVector::new(vec![3.0, -1.0]), 2000, 8).unwrap();
        assert_eq!(a.values, b.values);

        assert!(matches!(
            simulate_online_metric(&c, &WeightVector::zeros(2), 0, 1),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn shared_seed_replays_logged_pairs() {
        let c = generate_corpus(&config(200, 3)).unwrap();
        let w = WeightVector::new(vec![0.7, 0.1]);
        let ds = log_random_pairs(&c, 5000, 21).unwrap();
        let offline = estimate_metrics(&ds, &w).unwrap().values;
        let online = simulate_online_metric(&c, &w, 5000, 21).unwrap().values;
        assert_eq!(offline, online);
    }

    #[test]
    fn logged_estimate_tracks_online_metric() {
        let c = generate_corpus(&config(2000, 4)).unwrap();
        let w = WeightVector::new(vec![0.5, 0.0]);
        let ds = log_random_pairs(&c, 50_000, 1).unwrap();
        let offline = estimate_metrics(&ds, &w).unwrap().values;
        let online = simulate_online_metric(&c, &w, 50_000, 2).unwrap().values;
        for (a, b) in offline.iter().zip(&online) {
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn decrease_variant_lowers_target_metric() {
        let c = generate_corpus(&config(2000, 4)).unwrap();
        let zero = WeightVector::zeros(2);
        let base = simulate_online_metric(&c, &zero, 50_000, 9).unwrap().values;
        let mild = make_decrease_variant(&c, 0, 0.5, 1).unwrap();
        let strong = make_decrease_variant(&c, 0, 2.0, 1).unwrap();
        let mild_v = simulate_online_metric(&mild, &zero, 50_000, 9).unwrap().values;
        let strong_v = simulate_online_metric(&strong, &zero, 50_000, 9).unwrap().values;
        assert!(mild_v[0] < base[0]);
        assert!(strong_v[0] < mild_v[0]);
        let gap = base[0] - strong_v[0];
        assert!((strong_v[1] - base[1]).abs() < gap / 3.0);
        // input untouched
        assert_eq!(c, generate_corpus(&config(2000, 4)).unwrap());

        assert!(matches!(make_decrease_variant(&c, 0, 0.0, 1), Err(Error::Parameter(_))));
        assert!(matches!(make_decrease_variant(&c, 2, 1.0, 1), Err(Error::Parameter(_))));
    }
}
