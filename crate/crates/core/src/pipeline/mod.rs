//! Ingestion, per-treatment selection and export, and the subcommand drivers
//! behind the `act` binary.
//!
//! A pipeline run is one idempotent tick. Scheduling it (daily or otherwise)
//! is left to whatever runs the binary.

pub mod config;
pub mod records;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlation_study, default_variants, guardrail_experiment, CorrelationReport, ExperimentSimConfig,
    GuardrailExperimentReport, StudySeeds,
};
use crate::domain::{validate_dataset, GuardrailConfig, PairDataset, WeightVector};
use crate::error::{Error, Result};
use crate::ranking::{export_formula, Provenance};
use crate::selector::{act_select, joint_brute_force, SelectionResult};
use crate::simulator::{generate_corpus, log_random_pairs, make_decrease_variant};
use crate::stats::{derive_seed, sha256_hex};

use self::config::{CorrelateConfig, ExperimentConfig, RunConfig, SimulateConfig};
use self::records::{corpus_to_string, dataset_to_string, parse_dataset, read_to_string, write_file};

/// Reads, parses, and validates a dataset file.
pub fn ingest_dataset(path: &Path) -> Result<PairDataset> {
    let text = read_to_string(path)?;
    let (_, dataset) = parse_dataset(&text)?;
    validate_dataset(&dataset).into_result()?;
    Ok(dataset)
}

pub fn guardrails_sha256(config: &GuardrailConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentStatus {
    Feasible,
    Infeasible,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRecord {
    pub treatment_id: String,
    pub status: TreatmentStatus,
    pub dataset: PathBuf,
    pub dataset_sha256: Option<String>,
    pub guardrails_sha256: String,
    pub weights: Option<WeightVector>,
    /// File name of the exported formula, relative to the output directory.
    pub export: Option<String>,
    pub selection_report: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Worst outcome of a run, mapped to a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Success,
    /// At least one treatment was infeasible; every feasible one was exported.
    Partial,
    Error,
}

impl RunOutcome {
    pub fn exit_code(self) -> i32 {
        match self {
            RunOutcome::Success => 0,
            RunOutcome::Partial => 2,
            RunOutcome::Error => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub outcome: RunOutcome,
    pub treatments: Vec<TreatmentRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// How a single treatment's weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Grouped,
    /// Exhaustive joint search, refusing grids above the cap.
    BruteForce {
        cap: u128,
    },
}

/// Ingests one dataset, selects weights, and writes the selection report and
/// (when feasible) the formula export into `out_dir`.
pub fn process_treatment(
    treatment_id: &str,
    dataset_path: &Path,
    guardrails: &GuardrailConfig,
    out_dir: &Path,
    method: SearchMethod,
    now: DateTime<Utc>,
) -> (TreatmentRecord, Option<SelectionResult>) {
    let mut record = TreatmentRecord {
        treatment_id: treatment_id.to_string(),
        status: TreatmentStatus::Error,
        dataset: dataset_path.to_path_buf(),
        dataset_sha256: None,
        guardrails_sha256: guardrails_sha256(guardrails),
        weights: None,
        export: None,
        selection_report: None,
        violations: Vec::new(),
        message: None,
    };
    let outcome = (|| -> Result<SelectionResult> {
        let bytes = std::fs::read(dataset_path).map_err(|e| Error::io(dataset_path, e))?;
        record.dataset_sha256 = Some(sha256_hex(&bytes));
        let dataset = ingest_dataset(dataset_path)?;
        let result = match method {
            SearchMethod::Grouped => act_select(&dataset, guardrails)?,
            SearchMethod::BruteForce { cap } => joint_brute_force(&dataset, guardrails, cap)?,
        };
        let report_name = format!("{treatment_id}.selection.json");
        write_file(&out_dir.join(&report_name), &to_pretty_json(&result))?;
        record.selection_report = Some(report_name);
        record.weights = Some(result.weights.clone());
        record.violations = result.violations.clone();
        if result.feasible {
            let provenance = Provenance {
                dataset_sha256: record.dataset_sha256.clone().unwrap_or_default(),
                config_sha256: record.guardrails_sha256.clone(),
            };
            let export = export_formula(&result.weights, treatment_id, &dataset.metric_names, provenance, now)?;
            let export_name = format!("{treatment_id}.formula.json");
            write_file(&out_dir.join(&export_name), &export.render())?;
            record.export = Some(export_name);
        }
        Ok(result)
    })();
    match outcome {
        Ok(result) => {
            record.status = if result.feasible {
                TreatmentStatus::Feasible
            } else {
                TreatmentStatus::Infeasible
            };
            if !result.feasible {
                let groups: Vec<_> = result
                    .per_group
                    .iter()
                    .filter(|g| g.chosen.is_none())
                    .map(|g| &g.group)
                    .collect();
                record.message = Some(format!(
                    "infeasible groups {groups:?}, violated metrics {:?}",
                    result.violations
                ));
            }
            (record, Some(result))
        }
        Err(Error::Infeasible { group, best_margins }) => {
            record.status = TreatmentStatus::Infeasible;
            record.message = Some(format!(
                "no valid grid point for group {group:?}; best margins {best_margins:?}"
            ));
            (record, None)
        }
        Err(e) => {
            record.message = Some(e.to_string());
            (record, None)
        }
    }
}

/// One pipeline tick over every configured treatment.
///
/// Relative dataset paths resolve against `config_dir`. Writes per-treatment
/// artifacts and `manifest.json` into `out_dir`. Treatments run concurrently;
/// the manifest lists them in config order.
pub fn run_pipeline(
    config: &RunConfig,
    config_dir: &Path,
    out_dir: &Path,
    clock: &(dyn Fn() -> DateTime<Utc> + Sync),
) -> Result<Manifest> {
    config.validate()?;
    let started_at = clock();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let treatments: Vec<TreatmentRecord> = config
        .treatments
        .par_iter()
        .map(|t| {
            let path = config_dir.join(&t.dataset);
            let (mut record, _) = process_treatment(
                &t.treatment_id,
                &path,
                config.guardrails_for(t),
                out_dir,
                SearchMethod::Grouped,
                clock(),
            );
            record.dataset = t.dataset.clone();
            record
        })
        .collect();
    let outcome = treatments
        .iter()
        .map(|t| match t.status {
            TreatmentStatus::Feasible => RunOutcome::Success,
            TreatmentStatus::Infeasible => RunOutcome::Partial,
            TreatmentStatus::Error => RunOutcome::Error,
        })
        .max()
        .unwrap_or(RunOutcome::Success);
    let manifest = Manifest {
        seed: config.seed,
        config_sha256: sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes()),
        started_at,
        finished_at: clock(),
        outcome,
        treatments,
    };
    write_file(&out_dir.join(MANIFEST_FILE), &to_pretty_json(&manifest))?;
    Ok(manifest)
}

/// Files written by [`run_simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub corpus_sha256: String,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

/// Generates the corpus (and optional decrease variant) and logs pairs from
/// each. Every seed is derived from `config.seed`.
pub fn run_simulate(config: &SimulateConfig, out_dir: &Path) -> Result<SimulateSummary> {
    let mut corpus_cfg = config.corpus.clone();
    corpus_cfg.seed = derive_seed(config.seed, "simulate/corpus");
    let corpus = generate_corpus(&corpus_cfg)?;
    let mut corpora = vec![corpus];
    if let Some(d) = &config.decrease {
        corpora.push(make_decrease_variant(
            &corpora[0],
            d.metric_index,
            d.magnitude,
            derive_seed(config.seed, "simulate/decrease"),
        )?);
    }
    let mut files = Vec::new();
    for c in &corpora {
        let corpus_file = format!("{}.corpus.jsonl", c.name);
        write_file(&out_dir.join(&corpus_file), &corpus_to_string(c))?;
        let ds = log_random_pairs(
            c,
            config.pair_count,
            derive_seed(config.seed, &format!("simulate/pairs/{}", c.name)),
        )?;
        let pairs_file = format!("{}.pairs.jsonl", c.name);
        write_file(&out_dir.join(&pairs_file), &dataset_to_string(&ds, &c.config_sha256))?;
        files.push(corpus_file);
        files.push(pairs_file);
    }
    let summary = SimulateSummary {
        seed: config.seed,
        corpus_sha256: corpora[0].config_sha256.clone(),
        files,
        warnings: corpora[0].warnings.clone(),
    };
    write_file(&out_dir.join("simulate.json"), &to_pretty_json(&summary))?;
    Ok(summary)
}

pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<GuardrailExperimentReport> {
    let mut corpus_cfg = config.corpus.clone();
    corpus_cfg.seed = derive_seed(config.seed, "experiment/corpus");
    let corpus = generate_corpus(&corpus_cfg)?;
    let sim = ExperimentSimConfig {
        pair_count: config.pair_count,
        impressions: config.impressions,
        resamples: config.resamples,
        confidence: config.confidence,
        seed: config.seed,
    };
    let fixed = WeightVector::new(config.fixed_weight.clone());
    let report = guardrail_experiment(&corpus, &config.decrease, &fixed, &config.act, &sim)?;
    if let Some(dir) = out_dir {
        write_file(&dir.join("experiment.json"), &to_pretty_json(&report))?;
        write_file(&dir.join("experiment.csv"), &report.to_csv()?)?;
    }
    Ok(report)
}

pub fn run_correlate(config: &CorrelateConfig, out_dir: Option<&Path>) -> Result<CorrelationReport> {
    let mut corpus_cfg = config.corpus.clone();
    corpus_cfg.seed = derive_seed(config.seed, "correlate/corpus");
    let corpus = generate_corpus(&corpus_cfg)?;
    let variants: Vec<WeightVector> = match (&config.variants, &config.sweep) {
        (Some(v), _) => v.iter().cloned().map(WeightVector::new).collect(),
        (None, Some(s)) => default_variants(
            corpus.n_metrics(),
            s.max_weight,
            s.sweep_points,
            s.random_count,
            derive_seed(config.seed, "correlate/variants"),
        ),
        (None, None) => return Err(Error::Config("correlate needs either `variants` or `sweep`".into())),
    };
    let report = correlation_study(
        &corpus,
        &variants,
        config.metric,
        config.pair_count,
        config.impressions,
        StudySeeds::from_seed(config.seed),
    )?;
    if let Some(dir) = out_dir {
        write_file(&dir.join("correlation.json"), &to_pretty_json(&report))?;
        write_file(&dir.join("correlation.csv"), &report.to_csv(&corpus.metric_names)?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridSpec;
    use crate::simulator::{BaseScoreModel, MetricModel, SimCorpusConfig};
    use chrono::TimeZone;

    fn fixed_clock() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap()
    }

    fn write_sim(dir: &Path) -> SimulateSummary {
        let cfg = SimulateConfig {
            seed: 5,
            pair_count: 3000,
            corpus: SimCorpusConfig {
                item_count: 300,
                metrics: vec![
                    MetricModel::new("likes", -0.5, 1.5),
                    MetricModel::new("shorts", -1.0, 1.0),
                ],
                base: BaseScoreModel::default(),
                seed: 0,
            },
            decrease: Some(crate::analysis::DecreaseConfig {
                metric_index: 0,
                magnitude: 2.0,
            }),
        };
        run_simulate(&cfg, dir).unwrap()
    }

    fn guardrails(eps: [f64; 2]) -> GuardrailConfig {
        GuardrailConfig::new(
            eps.to_vec(),
            vec![vec![0], vec![1]],
            vec![GridSpec::new(0, 0.0, 3.0, 0.1), GridSpec::new(1, 0.0, 3.0, 0.1)],
        )
    }

    #[test]
    fn ingest_round_trips_simulated_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write_sim(dir.path());
        let ds = ingest_dataset(&dir.path().join("prod.pairs.jsonl")).unwrap();
        assert_eq!(ds.len(), 3000);
        let text = read_to_string(&dir.path().join("prod.pairs.jsonl")).unwrap();
        assert_eq!(
            dataset_to_string(&ds, parse_dataset(&text).unwrap().0.config_sha256.as_str()),
            text
        );

        assert!(matches!(
            ingest_dataset(&dir.path().join("missing.jsonl")),
            Err(Error::Io { .. })
        ));
        write_file(&dir.path().join("empty.jsonl"), "").unwrap();
        assert!(matches!(
            ingest_dataset(&dir.path().join("empty.jsonl")),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ingest_rejects_invalid_data() {
        let dir = tempfile::tempdir().unwrap();
        write_sim(dir.path());
        let path = dir.path().join("prod.pairs.jsonl");
        let text = read_to_string(&path).unwrap();
        let mut ds = parse_dataset(&text).unwrap().1;
        ds.pairs[7].item_b.labels[1] = 2.0;
        write_file(&path, &dataset_to_string(&ds, "")).unwrap();
        match ingest_dataset(&path) {
            Err(Error::Data(v)) => assert_eq!(v[0].pair_id.as_deref(), Some(ds.pairs[7].pair_id.as_str())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pipeline_exports_feasible_and_flags_infeasible() {
        let dir = tempfile::tempdir().unwrap();
        write_sim(dir.path());
        let prod = ingest_dataset(&dir.path().join("prod.pairs.jsonl")).unwrap();
        let base = crate::estimator::estimate_metrics(&prod, &WeightVector::zeros(2))
            .unwrap()
            .values;

        let mut cfg = RunConfig {
            seed: 1,
            output_dir: None,
            guardrails: Some(guardrails([base[0], base[1]])),
            treatments: vec![
                config::TreatmentSpec {
                    treatment_id: "prod".into(),
                    dataset: "prod.pairs.jsonl".into(),
                    guardrails: None,
                },
                config::TreatmentSpec {
                    treatment_id: "exp".into(),
                    dataset: "prod_decrease.pairs.jsonl".into(),
                    guardrails: None,
                },
            ],
        };
        let out = dir.path().join("out");
        let m = run_pipeline(&cfg, dir.path(), &out, &fixed_clock).unwrap();
        assert_eq!(m.outcome, RunOutcome::Success);
        assert!(out.join("prod.formula.json").exists());
        assert!(out.join("exp.formula.json").exists());
        assert!(out.join(MANIFEST_FILE).exists());
        assert_eq!(m.treatments[0].weights.as_ref().unwrap().as_slice(), &[0.0, 0.0]);

        cfg.treatments[1].guardrails = Some(guardrails([0.999, 0.0]));
        let out2 = dir.path().join("out2");
        let m = run_pipeline(&cfg, dir.path(), &out2, &fixed_clock).unwrap();
        assert_eq!(m.outcome, RunOutcome::Partial);
        assert_eq!(m.outcome.exit_code(), 2);
        assert_eq!(m.treatments[1].status, TreatmentStatus::Infeasible);
        assert!(out2.join("prod.formula.json").exists());
        assert!(!out2.join("exp.formula.json").exists());

        cfg.treatments[1].dataset = "nope.jsonl".into();
        let m = run_pipeline(&cfg, dir.path(), &dir.path().join("out3"), &fixed_clock).unwrap();
        assert_eq!(m.outcome, RunOutcome::Error);
        assert_eq!(m.treatments[1].status, TreatmentStatus::Error);
        assert_eq!(m.treatments[0].status, TreatmentStatus::Feasible);
    }
}
