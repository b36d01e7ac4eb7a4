use std::path::PathBuf;

use leadsynth::delineate::detect_r_peaks;
use leadsynth::preprocess::{preprocess_signal, PreprocessConfig};
use leadsynth::{LeadId, Record};

use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::OutArgs;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `.hea`, `.csv` or bundle `.json` files.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Beats detected on lead II (or the first lead) after default filtering.
fn beat_count(record: &Record) -> Option<usize> {
    let lead = if record.has_lead(LeadId::II) {
        LeadId::II
    } else {
        *record.leads().first()?
    };
    let filtered = preprocess_signal(record.lead(lead)?, record.fs(), &PreprocessConfig::default()).ok()?;
    detect_r_peaks(&filtered, record.fs()).ok().map(|p| p.len())
}

pub fn run(args: Args) -> Result<(), CliError> {
    // Parse everything first so a bad file leaves no partial output.
    let records = args
        .paths
        .iter()
        .map(|p| io::load_record(p, args.format).map(|r| (io::stem(p), r)))
        .collect::<Result<Vec<_>, _>>()?;
    io::ensure_dir(&args.out.out)?;
    for (name, record) in &records {
        let path = io::write_bundle(&args.out.out, name, record)?;
        let leads: Vec<&str> = record.leads().iter().map(|l| l.name()).collect();
        let beats = beat_count(record).map_or_else(|| "n/a".to_string(), |n| n.to_string());
        say!(
            "{name}: leads={} fs={} duration={:.3}s beats={beats} -> {}",
            leads.join(","),
            record.fs(),
            record.duration(),
            path.display()
        );
    }
    Ok(())
}
