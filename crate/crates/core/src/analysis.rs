//! Validation studies run on the simulator.
//!
//! * [`correlation_study`]: does the offline estimate move with the simulated
//!   online metric across many weight vectors?
//! * [`path_independence_check`]: does the group order change the selected
//!   weights?
//! * [`guardrail_experiment`]: a 2×2 of {prod, decrease variant} × {fixed
//!   weight, selected weight}, measured as relative change against prod with
//!   the fixed weight.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{GridSpec, GuardrailConfig, PairDataset, WeightVector};
use crate::error::{Error, Result};
use crate::estimator::estimate_metrics;
use crate::selector::act_select;
use crate::simulator::{
    log_random_pairs, make_decrease_variant, mean_labels, online_winners, simulate_online_metric, Corpus,
};
use crate::stats::{derive_seed, percentile_interval, rng};

/// Sample Pearson correlation.
///
/// Undefined (an error) when either input is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pearson input".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input vector".into()));
    }
    // sqrt(a·a) == a exactly, so identical inputs give exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Seeds for the two sides of a correlation study. Equal seeds with equal
/// sample counts replay the same trials on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudySeeds {
    pub offline: u64,
    pub online: u64,
}

impl StudySeeds {
    pub fn from_seed(seed: u64) -> Self {
        StudySeeds {
            offline: derive_seed(seed, "correlate/offline"),
            online: derive_seed(seed, "correlate/online"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub variant_id: String,
    pub weights: WeightVector,
    pub offline: f64,
    pub online: f64,
    pub offline_delta: f64,
    pub online_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric: usize,
    pub metric_name: String,
    pub pair_count: usize,
    pub impressions: usize,
    pub seeds: StudySeeds,
    pub baseline_offline: f64,
    pub baseline_online: f64,
    pub rows: Vec<CorrelationRow>,
    pub pearson_r: f64,
    pub sample_count: usize,
}

impl CorrelationReport {
    /// One row per variant; offline delta on the x axis, online delta on the y axis.
    pub fn to_csv(&self, metric_names: &[String]) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variant_id".to_string()];
        header.extend(metric_names.iter().map(|m| format!("w_{m}")));
        header.extend(["offline", "online", "offline_delta", "online_delta"].map(String::from));
        wtr.write_record(&header).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec = vec![row.variant_id.clone()];
            rec.extend(row.weights.as_slice().iter().map(f64::to_string));
            rec.extend([row.offline, row.online, row.offline_delta, row.online_delta].map(|v| v.to_string()));
            wtr.write_record(&rec).map_err(csv_error)?;
        }
        finish_csv(wtr)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parameter(format!("csv: {e}"))
}

fn finish_csv(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr.into_inner().map_err(|e| Error::Parameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Default variant set: a geometric sweep of each weight on both signs plus
/// random joint vectors in `[-max_weight, max_weight]ⁿ`.
pub fn default_variants(
    n_metrics: usize,
    max_weight: f64,
    sweep_points: usize,
    random_count: usize,
    seed: u64,
) -> Vec<WeightVector> {
    let mut out = Vec::new();
    for i in 0..n_metrics {
        for k in 0..sweep_points {
            let mag = max_weight * 0.5f64.powi((sweep_points - 1 - k) as i32);
            for sign in [1.0, -1.0] {
                let mut w = WeightVector::zeros(n_metrics);
                w.set(i, sign * mag);
                out.push(w);
            }
        }
    }
    let mut rng = rng(seed);
    for _ in 0..random_count {
        out.push(WeightVector::new(
            (0..n_metrics)
                .map(|_| rng.random_range(-max_weight..=max_weight))
                .collect(),
        ));
    }
    out
}

/// Offline `Ŝ` from one logged dataset against simulated online `S̃` for each
/// variant, both as deltas from `W = 0`.
///
/// Every variant's online side uses the same seed, so variants share their
/// random pairs and differ only in which item wins.
pub fn correlation_study(
    corpus: &Corpus,
    variants: &[WeightVector],
    metric: usize,
    pair_count: usize,
    impressions: usize,
    seeds: StudySeeds,
) -> Result<CorrelationReport> {
    if variants.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 variants, got {}",
            variants.len()
        )));
    }
    if metric >= corpus.n_metrics() {
        return Err(Error::Parameter(format!("metric {metric} out of range")));
    }
    let dataset = log_random_pairs(corpus, pair_count, seeds.offline)?;
    let zero = WeightVector::zeros(corpus.n_metrics());
    let baseline_offline = estimate_metrics(&dataset, &zero)?.values[metric];
    let baseline_online = simulate_online_metric(corpus, &zero, impressions, seeds.online)?.values[metric];

    let rows = variants
        .iter()
        .enumerate()
        .map(|(v, w)| {
            let offline = estimate_metrics(&dataset, w)?.values[metric];
            let online = simulate_online_metric(corpus, w, impressions, seeds.online)?.values[metric];
            Ok(CorrelationRow {
                variant_id: format!("v{v:03}"),
                weights: w.clone(),
                offline,
                online,
                offline_delta: offline - baseline_offline,
                online_delta: online - baseline_online,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.offline_delta).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.online_delta).collect();
    let pearson_r = pearson(&xs, &ys)?;
    Ok(CorrelationReport {
        metric,
        metric_name: corpus.metric_names[metric].clone(),
        pair_count,
        impressions,
        seeds,
        baseline_offline,
        baseline_online,
        sample_count: rows.len(),
        rows,
        pearson_r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathIndependenceReport {
    pub orderings: Vec<Vec<Vec<usize>>>,
    pub weights: Vec<WeightVector>,
    pub feasible: Vec<bool>,
    /// True iff every ordering selected bit-identical weights.
    pub identical: bool,
}

fn canonical(partition: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = partition
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.sort_unstable();
            g
        })
        .collect();
    groups.sort();
    groups
}

/// Runs selection once per group ordering and compares the results bit for bit.
pub fn path_independence_check(
    dataset: &PairDataset,
    config: &GuardrailConfig,
    orderings: &[Vec<Vec<usize>>],
) -> Result<PathIndependenceReport> {
    if orderings.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 orderings, got {}",
            orderings.len()
        )));
    }
    let reference = canonical(&config.partition);
    let mut weights = Vec::with_capacity(orderings.len());
    let mut feasible = Vec::with_capacity(orderings.len());
    for (k, ordering) in orderings.iter().enumerate() {
        if canonical(ordering) != reference {
            return Err(Error::Parameter(format!(
                "ordering {k} is not a permutation of the configured partition"
            )));
        }
        let mut cfg = config.clone();
        cfg.partition = ordering.clone();
        let r = act_select(dataset, &cfg)?;
        weights.push(r.weights);
        feasible.push(r.feasible);
    }
    let bits = |w: &WeightVector| w.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let identical = weights.windows(2).all(|p| bits(&p[0]) == bits(&p[1]));
    Ok(PathIndependenceReport {
        orderings: orderings.to_vec(),
        weights,
        feasible,
        identical,
    })
}

/// The configured partition and its reverse.
pub fn forward_and_reversed(config: &GuardrailConfig) -> Vec<Vec<Vec<usize>>> {
    let fwd = config.partition.clone();
    let mut rev = fwd.clone();
    rev.reverse();
    vec![fwd, rev]
}

/// How the decrease variant is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseConfig {
    pub metric_index: usize,
    pub magnitude: f64,
}

/// Where guardrail thresholds come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Explicit {
        values: Vec<f64>,
    },
    /// `εᵢ = (1 − tolerance) · Ŝᵢ` of prod pairs at the fixed weight.
    Baseline {
        tolerance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActArmConfig {
    pub thresholds: ThresholdRule,
    pub partition: Vec<Vec<usize>>,
    pub grids: Vec<GridSpec>,
    #[serde(default = "one_pass")]
    pub passes: usize,
}

fn one_pass() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSimConfig {
    pub pair_count: usize,
    pub impressions: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    pub seed: u64,
}

fn default_resamples() -> usize {
    200
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Prod,
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    Fixed,
    Act,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Prod => "prod",
            ModelVariant::Decrease => "decrease",
        })
    }
}

impl fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMethod::Fixed => "fixed",
            WeightMethod::Act => "act",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRow {
    pub variant: ModelVariant,
    pub method: WeightMethod,
    pub weights: WeightVector,
    /// False only for selection arms whose search found no valid point.
    pub feasible: bool,
    /// `Ŝ` at `weights` on this arm's own logged pairs.
    pub offline: Vec<f64>,
    pub online: Vec<f64>,
    /// Relative change of `online` against prod/fixed, per metric.
    pub deltas: Vec<f64>,
    pub delta_ci: Vec<(f64, f64)>,
}

impl ArmRow {
    pub fn half_width(&self, metric: usize) -> f64 {
        let (lo, hi) = self.delta_ci[metric];
        (hi - lo) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailExperimentReport {
    pub metric_names: Vec<String>,
    pub thresholds: Vec<f64>,
    /// Each threshold as a relative change from prod/fixed's offline estimate.
    pub guardrail_deltas: Vec<f64>,
    pub confidence: f64,
    pub arms: Vec<ArmRow>,
}

impl GuardrailExperimentReport {
    pub fn arm(&self, variant: ModelVariant, method: WeightMethod) -> &ArmRow {
        self.arms
            .iter()
            .find(|a| a.variant == variant && a.method == method)
            .expect("all four arms are present")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["variant", "method", "feasible"].map(String::from).to_vec();
        header.extend(self.metric_names.iter().map(|m| format!("w_{m}")));
        for m in &self.metric_names {
            header.extend([
                format!("online_{m}"),
                format!("delta_{m}"),
                format!("ci_low_{m}"),
                format!("ci_high_{m}"),
            ]);
        }
        wtr.write_record(&header).map_err(csv_error)?;
        for arm in &self.arms {
            let mut rec = vec![
                arm.variant.to_string(),
                arm.method.to_string(),
                arm.feasible.to_string(),
            ];
            rec.extend(arm.weights.as_slice().iter().map(f64::to_string));
            for i in 0..self.metric_names.len() {
                let (lo, hi) = arm.delta_ci[i];
                rec.extend([arm.online[i], arm.deltas[i], lo, hi].map(|v| v.to_string()));
            }
            wtr.write_record(&rec).map_err(csv_error)?;
        }
        finish_csv(wtr)
    }
}

/// Paired bootstrap of `mean(arm)/mean(base) − 1`, resampling impressions.
fn relative_delta_ci(
    corpus_arm: &Corpus,
    arm: &[usize],
    corpus_base: &Corpus,
    base: &[usize],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let n = corpus_arm.n_metrics();
    let k = arm.len();
    let mut rng = rng(seed);
    let mut reps = vec![Vec::with_capacity(resamples); n];
    let mut sums_arm = vec![0.0; n];
    let mut sums_base = vec![0.0; n];
    for _ in 0..resamples {
        sums_arm.iter_mut().for_each(|s| *s = 0.0);
        sums_base.iter_mut().for_each(|s| *s = 0.0);
        for _ in 0..k {
            let j = rng.random_range(0..k);
            for (s, &v) in sums_arm.iter_mut().zip(&corpus_arm.items[arm[j]].labels) {
                *s += v;
            }
            for (s, &v) in sums_base.iter_mut().zip(&corpus_base.items[base[j]].labels) {
                *s += v;
            }
        }
        for i in 0..n {
            reps[i].push(sums_arm[i] / sums_base[i] - 1.0);
        }
    }
    reps.into_iter().map(|r| percentile_interval(r, confidence)).collect()
}

/// Builds and measures the four arms.
///
/// Selection arms run on pairs logged from their own corpus. All four arms
/// are simulated online with the same seed, and intervals come from a paired
/// bootstrap over impressions.
pub fn guardrail_experiment(
    corpus: &Corpus,
    decrease: &DecreaseConfig,
    fixed_weight: &WeightVector,
    act: &ActArmConfig,
    sim: &ExperimentSimConfig,
) -> Result<GuardrailExperimentReport> {
    let n = corpus.n_metrics();
    if fixed_weight.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: fixed_weight.len(),
        });
    }
    if !(sim.confidence > 0.0 && sim.confidence < 1.0) {
        return Err(Error::Parameter(format!("confidence {} not in (0, 1)", sim.confidence)));
    }
    if sim.resamples < crate::estimator::MIN_RESAMPLES {
        return Err(Error::Parameter(format!(
            "need at least {} resamples",
            crate::estimator::MIN_RESAMPLES
        )));
    }
    let variant_corpus = make_decrease_variant(
        corpus,
        decrease.metric_index,
        decrease.magnitude,
        derive_seed(sim.seed, "experiment/decrease"),
    )?;
    let corpora = [(ModelVariant::Prod, corpus), (ModelVariant::Decrease, &variant_corpus)];
    let datasets = corpora
        .iter()
        .map(|(v, c)| {
            log_random_pairs(
                c,
                sim.pair_count,
                derive_seed(sim.seed, &format!("experiment/pairs/{v}")),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let prod_fixed_offline = estimate_metrics(&datasets[0], fixed_weight)?.values;
    let thresholds = match &act.thresholds {
        ThresholdRule::Explicit { values } => values.clone(),
        ThresholdRule::Baseline { tolerance } => prod_fixed_offline.iter().map(|s| (1.0 - tolerance) * s).collect(),
    };
    let guardrail_deltas = thresholds
        .iter()
        .zip(&prod_fixed_offline)
        .map(|(t, s)| t / s - 1.0)
        .collect();
    let config = GuardrailConfig {
        thresholds: thresholds.clone(),
        partition: act.partition.clone(),
        grids: act.grids.clone(),
        passes: act.passes,
    };
    config.validate(n)?;

    let online_seed = derive_seed(sim.seed, "experiment/online");
    let base_winners = online_winners(corpus, fixed_weight, sim.impressions, online_seed)?;
    let base_online = mean_labels(corpus, &base_winners);

    let mut arms = Vec::with_capacity(4);
    for ((variant, arm_corpus), dataset) in corpora.iter().zip(&datasets) {
        for method in [WeightMethod::Fixed, WeightMethod::Act] {
            let (weights, feasible) = match method {
                WeightMethod::Fixed => (fixed_weight.clone(), true),
                WeightMethod::Act => {
                    let r = act_select(dataset, &config)?;
                    (r.weights, r.feasible)
                }
            };
            let offline = estimate_metrics(dataset, &weights)?.values;
            let winners = online_winners(arm_corpus, &weights, sim.impressions, online_seed)?;
            let online = mean_labels(arm_corpus, &winners);
            let deltas = online.iter().zip(&base_online).map(|(a, b)| a / b - 1.0).collect();
            let ci_seed = derive_seed(sim.seed, &format!("experiment/ci/{variant}/{method}"));
            let delta_ci = relative_delta_ci(
                arm_corpus,
                &winners,
                corpus,
                &base_winners,
                sim.resamples,
                sim.confidence,
                ci_seed,
            );
            arms.push(ArmRow {
                variant: *variant,
                method,
                weights,
                feasible,
                offline,
                online,
                deltas,
                delta_ci,
            });
        }
    }
    Ok(GuardrailExperimentReport {
        metric_names: corpus.metric_names.clone(),
        thresholds,
        guardrail_deltas,
        confidence: sim.confidence,
        arms,
    })
}
