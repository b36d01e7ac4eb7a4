use std::path::PathBuf;

use leadsynth::simgen::{generate, simulate_handheld_session, HandheldSession, SynthConfig};
use leadsynth::LeadId;

use crate::config::read_text;
use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::{parse_lead, OutArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Default dipole model, no inter-lead lag.
    Clean,
    /// Per-beat lag linear in RR, with amplitude modulation.
    LinearLag,
    /// Faster, more variable rhythm with T-wave alternans.
    Twa,
}

#[derive(Debug, clap::Args)]
#[group(id = "source", multiple = false)]
pub struct Source {
    #[arg(long, value_enum, group = "source")]
    pub preset: Option<Preset>,
    /// Simulator configuration (JSON).
    #[arg(long, group = "source")]
    pub sim_config: Option<PathBuf>,
    /// Existing synchronous record to cut the session from.
    #[arg(long, group = "source")]
    pub record: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 500.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 120.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Session schedule (JSON with a `segments` list).
    #[arg(long, conflicts_with = "sequential")]
    pub schedule: Option<PathBuf>,
    /// Record these leads back to back, e.g. `I,II,V2`.
    #[arg(long, value_delimiter = ',', value_parser = parse_lead)]
    pub sequential: Option<Vec<LeadId>>,
    #[arg(long, default_value_t = 60.0)]
    pub start_s: f64,
    #[arg(long, default_value_t = 10.0)]
    pub segment_s: f64,
    /// Time lost at each lead switch.
    #[arg(long, default_value_t = 2.0)]
    pub gap_s: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn sim_config(args: &Args) -> Result<Option<SynthConfig>, CliError> {
    let s = &args.source;
    let cfg = match (s.preset, &s.sim_config) {
        (Some(Preset::Clean), _) => SynthConfig {
            fs: args.fs,
            duration_s: args.duration_s,
            ..SynthConfig::default()
        },
        (Some(Preset::LinearLag), _) => SynthConfig::linear_lag_fixture(args.fs, args.duration_s),
        (Some(Preset::Twa), _) => SynthConfig::twa_fixture(args.fs, args.duration_s),
        (None, Some(p)) => {
            serde_json::from_str(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        (None, None) => return Ok(None),
    };
    Ok(Some(cfg))
}

pub fn run(args: Args) -> Result<(), CliError> {
    let session = match (&args.schedule, &args.sequential) {
        (Some(p), _) => Some(
            serde_json::from_str::<HandheldSession>(&read_text(p)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        ),
        (None, Some(leads)) => Some(HandheldSession::sequential(
            leads,
            args.start_s,
            args.segment_s,
            args.gap_s,
        )),
        (None, None) => None,
    };

    let (record, truth) = match (sim_config(&args)?, &args.source.record) {
        (Some(cfg), _) => {
            let s = generate::<f64>(&cfg, args.seed)?;
            (s.record, Some((cfg, s.truth)))
        }
        (None, Some(p)) => (io::load_record(p, InputFormat::Auto)?, None),
        (None, None) => return Err(CliError::Input("pass --preset, --sim-config or --record".into())),
    };
    if truth.is_none() && session.is_none() {
        return Err(CliError::Input(
            "nothing to do: give a schedule to cut from --record".into(),
        ));
    }
    let segments = session
        .as_ref()
        .map(|s| simulate_handheld_session(&record, s))
        .transpose()?;

    let out = &args.out.out;
    io::ensure_dir(out)?;
    if let Some((cfg, truth)) = &truth {
        io::write_bundle(out, "record", &record)?;
        io::write_json(&out.join("truth.json"), truth)?;
        io::write_json(&out.join("sim_config.json"), cfg)?;
        say!(
            "record: {} leads, {:.3} s at {} Hz",
            record.leads().len(),
            record.duration(),
            record.fs()
        );
    }
    if let (Some(session), Some(segments)) = (&session, &segments) {
        io::write_json(&out.join("schedule.json"), session)?;
        for (k, (seg, rec)) in session.segments.iter().zip(segments).enumerate() {
            let name = format!("segment_{k:02}_{}", seg.lead);
            io::write_bundle(out, &name, rec)?;
            say!("{name}: {} [{:.3}, {:.3}] s", seg.lead, seg.t_start, seg.t_end);
        }
    }
    Ok(())
}
