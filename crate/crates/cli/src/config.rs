//! Pipeline configuration: a TOML-style key/value file with section headers,
//! `--set section.key=value` overrides, then the dedicated flags.

use std::path::Path;

use leadsynth::forest::ForestConfig;
use leadsynth::metrics::ProtocolConfig;
use leadsynth::preprocess::PreprocessConfig;
use leadsynth::synth::{MatchConfig, SynthesisConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub train_window_s: f64,
    pub eval_window_s: Option<f64>,
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
    pub forest: ForestConfig,
    pub synthesis: SynthesisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_window_s: 60.0,
            eval_window_s: None,
            preprocess: PreprocessConfig::default(),
            matching: MatchConfig::default(),
            forest: ForestConfig::default(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

/// Options shared by every command that runs the pipeline.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigArgs {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Override any configuration key, e.g. `--set forest.trees=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seconds of synchronous history used for training.
    #[arg(long)]
    pub train_window_s: Option<f64>,
    /// Seed for every random choice.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthesize with Δ̂ forced to 0.
    #[arg(long)]
    pub no_lag_correction: bool,
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("override {assignment:?} is not KEY=VALUE")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("bad override key {key:?}")));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Input(format!("{part} is not a section")))?;
    }
    node.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl PipelineConfig {
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Input(format!("configuration: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Input(format!("configuration: {e}")))
    }

    pub fn load(args: &ConfigArgs) -> Result<Self, CliError> {
        let text = match &args.config {
            Some(p) => read_text(p)?,
            None => String::new(),
        };
        let mut cfg = Self::from_text(&text, &args.overrides)?;
        if let Some(w) = args.train_window_s {
            cfg.train_window_s = w;
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if args.no_lag_correction {
            cfg.synthesis.lag_correction = false;
        }
        cfg.forest.seed = cfg.seed;
        if !(cfg.train_window_s.is_finite() && cfg.train_window_s > 0.0) {
            return Err(CliError::Input("train_window_s must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            train_window_s: self.train_window_s,
            eval_window_s: self.eval_window_s,
            preprocess: self.preprocess.clone(),
            matching: self.matching.clone(),
            forest: self.forest.clone(),
            synthesis: self.synthesis.clone(),
            leads: Vec::new(),
            current_leads: Vec::new(),
        }
    }

    /// Effective configuration in the file syntax.
    pub fn to_text(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
