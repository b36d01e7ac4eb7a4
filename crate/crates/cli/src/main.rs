//! `leadsynth`: reconstruct a 12-lead ECG from one currently recorded lead.

/// `println!` that stays quiet when stdout is closed, e.g. piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod config;
mod error;
mod eval;
mod ingest;
mod io;
mod plot;
mod simulate;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leadsynth::LeadId;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "leadsynth",
    version,
    about = "Synthesize a synchronous 12-lead ECG from a single lead"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert WFDB or CSV records into canonical CSV + JSON bundles.
    Ingest(ingest::Args),
    /// Train the 11 lag models for one current lead.
    Train(train::Args),
    /// Reconstruct all 12 leads from a current single-lead recording.
    Synth(synth::Args),
    /// Score synthesis on the held-out part of a synchronous record.
    Eval(eval::Args),
    /// Generate a synthetic record and/or cut a handheld session from it.
    Simulate(simulate::Args),
    /// Render overlays, VCG loops and heatmaps as SVG.
    #[command(subcommand)]
    Plot(plot::Command),
}

pub fn parse_lead(s: &str) -> Result<LeadId, String> {
    s.parse::<LeadId>().map_err(|e| e.to_string())
}

/// Output directory flag shared by the commands that write bundles.
#[derive(Debug, Clone, clap::Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest::run(a),
        Command::Train(a) => train::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Plot(c) => plot::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("leadsynth: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
