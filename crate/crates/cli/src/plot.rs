use std::path::{Path, PathBuf};

use leadsynth::metrics::AccuracyMatrix;
use leadsynth::svg::{heatmap_svg, overlay_svg, vcg_loop_svg};
use leadsynth::vcg::{inverse_dower, VcgSignal, INDEPENDENT_LEADS};
use leadsynth::{LeadId, Record};

use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::parse_lead;

#[derive(Debug, clap::Args)]
pub struct Window {
    /// Start of the plotted span, seconds on the records' clock.
    #[arg(long)]
    pub t0: Option<f64>,
    /// End of the plotted span.
    #[arg(long)]
    pub t1: Option<f64>,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// One lead from several records on a common time axis.
    Overlay {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_parser = parse_lead)]
        lead: LeadId,
        /// Series labels, in input order; file stems by default.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frontal-plane VCG loop (inverse Dower) of each record.
    Vcg {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy heatmap from an `eval` accuracy.json.
    Heatmap {
        input: PathBuf,
        #[arg(long, default_value = "rho", value_parser = ["rho", "r2"])]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn labels_for(inputs: &[PathBuf], labels: &[String]) -> Result<Vec<String>, CliError> {
    if labels.is_empty() {
        return Ok(inputs.iter().map(|p| io::stem(p)).collect());
    }
    if labels.len() != inputs.len() {
        return Err(CliError::Input(format!(
            "{} labels for {} inputs",
            labels.len(),
            inputs.len()
        )));
    }
    Ok(labels.to_vec())
}

/// Index ranges of each record covering the span shared by all of them,
/// narrowed to the requested window.
fn common_span(records: &[Record], window: &Window) -> Result<Vec<(usize, usize)>, CliError> {
    let fs = records[0].fs();
    if records.iter().any(|r| (r.fs() - fs).abs() > 1e-9) {
        return Err(CliError::Input("records have different sampling rates".into()));
    }
    let start = records.iter().map(Record::start_time).fold(f64::NEG_INFINITY, f64::max);
    let end = records
        .iter()
        .map(|r| r.start_time() + r.len() as f64 / fs)
        .fold(f64::INFINITY, f64::min);
    let t0 = window.t0.map_or(start, |t| t.max(start));
    let t1 = window.t1.map_or(end, |t| t.min(end));
    let n = ((t1 - t0) * fs).round();
    if !(n >= 2.0) {
        return Err(CliError::Input("the records share no common time span".into()));
    }
    Ok(records
        .iter()
        .map(|r| {
            let i0 = ((t0 - r.start_time()) * fs).round().max(0.0) as usize;
            let i1 = (i0 + n as usize).min(r.len());
            (i0, i1)
        })
        .collect())
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<Record>, CliError> {
    inputs.iter().map(|p| io::load_record(p, InputFormat::Auto)).collect()
}

fn overlay(inputs: &[PathBuf], lead: LeadId, labels: &[String], window: &Window, out: &Path) -> Result<(), CliError> {
    let labels = labels_for(inputs, labels)?;
    let records = load_all(inputs)?;
    for (r, p) in records.iter().zip(inputs) {
        if !r.has_lead(lead) {
            return Err(CliError::Input(format!("{}: lead {lead} is missing", p.display())));
        }
    }
    let spans = common_span(&records, window)?;
    let series: Vec<(&str, &[f64])> = records
        .iter()
        .zip(&spans)
        .zip(&labels)
        .map(|((r, &(a, b)), l)| (l.as_str(), &r.lead(lead).expect("checked")[a..b]))
        .collect();
    io::write_text(out, &overlay_svg(lead.name(), records[0].fs(), &series))
}

fn vcg(inputs: &[PathBuf], labels: &[String], window: &Window, out: &Path) -> Result<(), CliError> {
    let labels = labels_for(inputs, labels)?;
    let records = load_all(inputs)?;
    let spans = common_span(&records, window)?;
    let loops = records
        .iter()
        .zip(&spans)
        .zip(inputs)
        .map(|((r, &(a, b)), p)| {
            let leads = INDEPENDENT_LEADS
                .iter()
                .map(|&l| {
                    r.lead(l)
                        .map(|s| (l, &s[a..b]))
                        .ok_or_else(|| CliError::Input(format!("{}: lead {l} is missing", p.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            inverse_dower::<f64, _>(&leads, r.fs()).map_err(|e| CliError::Input(e.to_string()))
        })
        .collect::<Result<Vec<VcgSignal<f64>>, _>>()?;
    let named: Vec<(&str, &VcgSignal<f64>)> = labels.iter().map(String::as_str).zip(&loops).collect();
    io::write_text(out, &vcg_loop_svg("frontal VCG", &named))
}

fn heatmap(input: &Path, metric: &str, out: &Path) -> Result<(), CliError> {
    let text = crate::config::read_text(input)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    // accuracy.json wraps the matrix; a bare matrix is accepted too
    let m = value.get("matrix").cloned().unwrap_or(value);
    let matrix: AccuracyMatrix =
        serde_json::from_value(m).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    io::write_text(out, &heatmap_svg(&matrix, metric))
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Overlay {
            inputs,
            lead,
            labels,
            window,
            out,
        } => overlay(&inputs, lead, &labels, &window, &out),
        Command::Vcg {
            inputs,
            labels,
            window,
            out,
        } => vcg(&inputs, &labels, &window, &out),
        Command::Heatmap { input, metric, out } => heatmap(&input, &metric, &out),
    }
}
