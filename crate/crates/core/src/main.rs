use std::path::{Path, PathBuf};
use std::process::ExitCode;

use act::domain::{validate_dataset, GuardrailConfig};
use act::pipeline::config::{load_toml, CorrelateConfig, ExperimentConfig, RunConfig, SimulateConfig};
use act::pipeline::records::{parse_dataset, read_to_string};
use act::pipeline::{self, SearchMethod, TreatmentRecord, TreatmentStatus};
use act::selector::DEFAULT_GRID_CAP;
use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "act", version, about = "Guardrail-constrained ranking weight selection")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    JsonLines,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated corpus and log random pairs from it.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select weights for one dataset with the grouped search.
    Select {
        #[arg(long)]
        dataset: PathBuf,
        /// Guardrail config (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "treatment")]
        treatment_id: String,
    },
    /// Like `select`, but exhaustive over the joint grid.
    Oracle {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "treatment")]
        treatment_id: String,
        #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
        cap: u128,
    },
    /// Select and export a formula for every configured treatment.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the guardrail enforcement experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the offline-online correlation study.
    Correlate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a dataset file and list every violation.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn emit<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) {
    match format {
        Format::Text => println!("{}", text()),
        Format::JsonLines => println!("{}", serde_json::to_string(value).expect("serializable")),
    }
}

fn treatment_line(t: &TreatmentRecord) -> String {
    let mut line = format!("{}: {:?}", t.treatment_id, t.status);
    if let Some(w) = &t.weights {
        line.push_str(&format!(" weights={w}"));
    }
    if let Some(e) = &t.export {
        line.push_str(&format!(" export={e}"));
    }
    if let Some(m) = &t.message {
        line.push_str(&format!(" ({m})"));
    }
    line
}

fn single(
    cli_format: Format,
    id: &str,
    dataset: &Path,
    config: &Path,
    out: &Path,
    method: SearchMethod,
) -> act::Result<u8> {
    let guardrails: GuardrailConfig = load_toml(config)?;
    let (record, _) = pipeline::process_treatment(id, dataset, &guardrails, out, method, Utc::now());
    emit(cli_format, &record, || treatment_line(&record));
    Ok(match record.status {
        TreatmentStatus::Feasible => 0,
        TreatmentStatus::Infeasible => 2,
        TreatmentStatus::Error => 3,
    })
}

fn run(cli: Cli) -> act::Result<u8> {
    let format = cli.format;
    match cli.command {
        Command::Simulate { config, out } => {
            let mut cfg: SimulateConfig = load_toml(&config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let summary = pipeline::run_simulate(&cfg, &out)?;
            emit(format, &summary, || {
                format!("wrote {} into {}", summary.files.join(", "), out.display())
            });
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Select {
            dataset,
            config,
            out,
            treatment_id,
        } => single(format, &treatment_id, &dataset, &config, &out, SearchMethod::Grouped),
        Command::Oracle {
            dataset,
            config,
            out,
            treatment_id,
            cap,
        } => single(
            format,
            &treatment_id,
            &dataset,
            &config,
            &out,
            SearchMethod::BruteForce { cap },
        ),
        Command::Pipeline { config, out } => {
            let mut cfg: RunConfig = load_toml(&config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let base = config.parent().unwrap_or(Path::new("."));
            let out = out
                .or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)))
                .ok_or_else(|| act::Error::Config("no --out given and no output_dir in config".into()))?;
            let manifest = pipeline::run_pipeline(&cfg, base, &out, &Utc::now)?;
            match format {
                Format::Text => {
                    for t in &manifest.treatments {
                        println!("{}", treatment_line(t));
                    }
                }
                Format::JsonLines => {
                    for t in &manifest.treatments {
                        emit(format, t, String::new);
                    }
                }
            }
            Ok(manifest.outcome.exit_code() as u8)
        }
        Command::Experiment { config, out } => {
            let mut cfg: ExperimentConfig = load_toml(&config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let report = pipeline::run_experiment(&cfg, out.as_deref())?;
            match format {
                Format::Text => print!("{}", report.to_csv()?),
                Format::JsonLines => {
                    for arm in &report.arms {
                        emit(format, arm, String::new);
                    }
                }
            }
            Ok(0)
        }
        Command::Correlate { config, out } => {
            let mut cfg: CorrelateConfig = load_toml(&config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let report = pipeline::run_correlate(&cfg, out.as_deref())?;
            emit(format, &report, || {
                format!(
                    "{}: pearson_r = {:.4} over {} variants",
                    report.metric_name, report.pearson_r, report.sample_count
                )
            });
            Ok(0)
        }
        Command::Validate { dataset } => {
            let (_, ds) = parse_dataset(&read_to_string(&dataset)?)?;
            let report = validate_dataset(&ds);
            for v in &report.violations {
                emit(format, v, || v.to_string());
            }
            if report.is_ok() {
                if format == Format::Text {
                    println!("ok: {} pairs, {} metrics", ds.len(), ds.n_metrics());
                }
                Ok(0)
            } else {
                Ok(3)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
