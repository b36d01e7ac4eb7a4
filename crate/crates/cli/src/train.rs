use std::path::{Path, PathBuf};

use leadsynth::forest::TrainingSummary;
use leadsynth::preprocess::preprocess_record;
use leadsynth::synth::all_pairs;
use leadsynth::{LagModel, LeadId, Library, Record};
use serde::Serialize;

use crate::config::{ConfigArgs, PipelineConfig};
use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::{parse_lead, OutArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Synchronous 12-lead record; its first `train-window-s` seconds are used.
    pub record: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Lead that will be recorded later.
    #[arg(long, value_parser = parse_lead)]
    pub current_lead: LeadId,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn model_file_name(missing: LeadId, current: LeadId) -> String {
    format!("model_{missing}_from_{current}.txt")
}

/// Preprocesses a historic record and builds the beat library from its
/// training window. A record shorter than the window cannot be trained on.
pub fn build_library(record: &Record, cfg: &PipelineConfig) -> Result<Library, CliError> {
    let tol = 0.5 / record.fs();
    if record.duration() + tol < cfg.train_window_s {
        return Err(CliError::Training(format!(
            "insufficient beats: record {} is {:.3} s long, the training window is {} s",
            record.header().name,
            record.duration(),
            cfg.train_window_s
        )));
    }
    let processed = preprocess_record(record, &cfg.preprocess).map_err(|e| CliError::Input(e.to_string()))?;
    Library::build(&processed, cfg.train_window_s, &cfg.matching).map_err(|e| CliError::Training(e.to_string()))
}

#[derive(Serialize)]
struct ModelEntry<'a> {
    missing: LeadId,
    current: LeadId,
    file: String,
    #[serde(flatten)]
    summary: &'a TrainingSummary,
}

#[derive(Serialize)]
struct Summary<'a> {
    record: &'a str,
    current: LeadId,
    fs: f64,
    train_window_s: f64,
    reference_lead: LeadId,
    library_beats: usize,
    config: &'a PipelineConfig,
    models: Vec<ModelEntry<'a>>,
}

pub fn write_models(dir: &Path, models: &[&LagModel]) -> Result<(), CliError> {
    for m in models {
        io::write_text(&dir.join(model_file_name(m.missing, m.current)), &m.to_text())?;
    }
    Ok(())
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    cfg.forest
        .validate(leadsynth::features::FEATURE_COUNT)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let record = io::load_record(&args.record, args.format)?;
    let current = args.current_lead;
    if !record.has_lead(current) {
        return Err(CliError::Input(format!(
            "lead {current} is not in {}",
            args.record.display()
        )));
    }
    let mut library = build_library(&record, &cfg)?;
    let pairs: Vec<(LeadId, LeadId)> = all_pairs(&library.leads())
        .into_iter()
        .filter(|&(_, j)| j == current)
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Training(
            "the record has no other standard lead to model".into(),
        ));
    }
    let failures: Vec<String> = library
        .train_models(&pairs, &cfg.forest)
        .into_iter()
        .filter_map(|((i, j), r)| r.err().map(|e| format!("{i} from {j}: {e}")))
        .collect();
    if !failures.is_empty() {
        return Err(CliError::Training(failures.join("; ")));
    }

    io::ensure_dir(&args.out.out)?;
    let models: Vec<&LagModel> = pairs.iter().filter_map(|&(i, j)| library.model(i, j)).collect();
    write_models(&args.out.out, &models)?;
    let summary = Summary {
        record: &record.header().name,
        current,
        fs: library.fs,
        train_window_s: cfg.train_window_s,
        reference_lead: library.reference,
        library_beats: library.beat_count(),
        config: &cfg,
        models: models
            .iter()
            .map(|m| ModelEntry {
                missing: m.missing,
                current: m.current,
                file: model_file_name(m.missing, m.current),
                summary: &m.summary,
            })
            .collect(),
    };
    io::write_json(&args.out.out.join("training_summary.json"), &summary)?;
    io::write_text(&args.out.out.join("config.toml"), &cfg.to_text())?;
    for m in &models {
        let rmse = m
            .summary
            .oob_rmse_ms
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2} ms"));
        say!("{} from {}: N={} OOB RMSE {rmse}", m.missing, m.current, m.summary.n);
    }
    Ok(())
}
