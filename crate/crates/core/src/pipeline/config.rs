//! TOML configuration documents for each CLI subcommand.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{ActArmConfig, DecreaseConfig};
use crate::domain::GuardrailConfig;
use crate::error::{Error, Result};
use crate::simulator::SimCorpusConfig;

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = super::records::read_to_string(path)?;
    parse_toml(&text, &path.display().to_string())
}

pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => format!("{origin} line {}", text[..span.start].matches('\n').count() + 1),
            None => origin.to_string(),
        };
        Error::parse(location, e.message())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSpec {
    pub treatment_id: String,
    /// Relative paths resolve against the config file's directory.
    pub dataset: PathBuf,
    /// Overrides the shared guardrails for this treatment.
    #[serde(default)]
    pub guardrails: Option<GuardrailConfig>,
}

/// One recurring tick: select and export a formula for every treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub guardrails: Option<GuardrailConfig>,
    pub treatments: Vec<TreatmentSpec>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.treatments.is_empty() {
            return Err(Error::Config("no treatments configured".into()));
        }
        let mut ids = BTreeSet::new();
        for t in &self.treatments {
            if !ids.insert(&t.treatment_id) {
                return Err(Error::Config(format!("duplicate treatment_id {:?}", t.treatment_id)));
            }
            if t.treatment_id.is_empty() || t.treatment_id.contains(['/', '\\']) {
                return Err(Error::Config(format!(
                    "treatment_id {:?} is not a valid file stem",
                    t.treatment_id
                )));
            }
            if t.guardrails.is_none() && self.guardrails.is_none() {
                return Err(Error::Config(format!(
                    "treatment {:?} has no guardrails",
                    t.treatment_id
                )));
            }
        }
        Ok(())
    }

    pub fn guardrails_for<'a>(&'a self, t: &'a TreatmentSpec) -> &'a GuardrailConfig {
        t.guardrails
            .as_ref()
            .or(self.guardrails.as_ref())
            .expect("checked by validate")
    }
}

/// `simulate`: generate a corpus and log pairs from it, optionally also from a
/// decrease variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(default)]
    pub seed: u64,
    pub pair_count: usize,
    pub corpus: SimCorpusConfig,
    #[serde(default)]
    pub decrease: Option<DecreaseConfig>,
}

/// `experiment`: the 2×2 guardrail enforcement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub corpus: SimCorpusConfig,
    pub decrease: DecreaseConfig,
    pub fixed_weight: Vec<f64>,
    pub act: ActArmConfig,
    pub pair_count: usize,
    pub impressions: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_resamples() -> usize {
    200
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub max_weight: f64,
    #[serde(default = "default_sweep_points")]
    pub sweep_points: usize,
    #[serde(default = "default_random_count")]
    pub random_count: usize,
}

fn default_sweep_points() -> usize {
    5
}

fn default_random_count() -> usize {
    20
}

/// `correlate`: offline–online correlation over many weight vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelateConfig {
    #[serde(default)]
    pub seed: u64,
    pub corpus: SimCorpusConfig,
    #[serde(default)]
    pub metric: usize,
    pub pair_count: usize,
    pub impressions: usize,
    /// Explicit variants; when absent, `sweep` generates them.
    #[serde(default)]
    pub variants: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}
