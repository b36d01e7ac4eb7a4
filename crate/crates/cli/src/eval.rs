use std::path::PathBuf;

use leadsynth::metrics::{AccuracyMatrix, Evaluation, ImprovementReport, Summary};
use leadsynth::svg::heatmap_svg;
use leadsynth::synth::SynthesisConfig;
use leadsynth::LeadId;
use serde::Serialize;

use crate::config::{ConfigArgs, PipelineConfig};
use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::{parse_lead, OutArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Synchronous 12-lead record.
    pub record: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Restrict the current-lead columns (repeatable); all leads by default.
    #[arg(long, value_parser = parse_lead)]
    pub current_lead: Vec<LeadId>,
    /// Also run without lag correction and report the difference.
    #[arg(long)]
    pub compare: bool,
    /// Seconds scored after the training window; the rest of the record by default.
    #[arg(long)]
    pub eval_window_s: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct Report<'a> {
    record: &'a str,
    fs: f64,
    held_out_s: f64,
    r2: Summary,
    rho: Summary,
    matrix: &'a AccuracyMatrix,
    config: &'a PipelineConfig,
}

fn write_matrix(out: &std::path::Path, suffix: &str, m: &AccuracyMatrix) -> Result<(), CliError> {
    for metric in ["rho", "r2"] {
        io::write_text(
            &out.join(format!("accuracy_{metric}{suffix}.md")),
            &m.to_markdown(metric),
        )?;
        io::write_text(
            &out.join(format!("heatmap_{metric}{suffix}.svg")),
            &heatmap_svg(m, metric),
        )?;
    }
    Ok(())
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if args.eval_window_s.is_some() {
        cfg.eval_window_s = args.eval_window_s;
    }
    let record = io::load_record(&args.record, args.format)?;
    let mut protocol = cfg.protocol();
    protocol.current_leads = args.current_lead.clone();
    if let Some(l) = protocol.current_leads.iter().find(|l| !record.has_lead(**l)) {
        return Err(CliError::Input(format!("lead {l} is not in {}", args.record.display())));
    }
    let eval = Evaluation::prepare(&record, &protocol)?;
    let mut configs = vec![cfg.synthesis.clone()];
    if args.compare {
        configs[0].lag_correction = true;
        configs.push(SynthesisConfig {
            lag_correction: false,
            ..cfg.synthesis.clone()
        });
    }
    let mut matrices = eval.matrices(&configs);
    let main = matrices.remove(0);

    let out = &args.out.out;
    io::ensure_dir(out)?;
    let report = Report {
        record: &record.header().name,
        fs: record.fs(),
        held_out_s: eval.held_out.duration(),
        r2: main.r2_summary(),
        rho: main.rho_summary(),
        matrix: &main,
        config: &cfg,
    };
    io::write_json(&out.join("accuracy.json"), &report)?;
    io::write_text(&out.join("config.toml"), &cfg.to_text())?;
    write_matrix(out, "", &main)?;
    for f in &main.failures {
        eprintln!("warning: {f}");
    }
    say!(
        "R² {:.3} ± {:.3}, ρ {:.3} ± {:.3} over {} pairs",
        report.r2.mean,
        report.r2.std,
        report.rho.mean,
        report.rho.std,
        report.rho.count
    );

    if let Some(uncorrected) = matrices.pop() {
        write_matrix(out, "_uncorrected", &uncorrected)?;
        let improvement = ImprovementReport::from_matrices(main, uncorrected);
        io::write_json(&out.join("improvement.json"), &improvement)?;
        let md = improvement.to_markdown();
        io::write_text(&out.join("improvement.md"), &md)?;
        say!("{}", md.trim_end());
    }
    Ok(())
}
