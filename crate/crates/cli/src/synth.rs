use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use leadsynth::metrics::{score, Score};
use leadsynth::preprocess::{preprocess_record, preprocess_signal};
use leadsynth::svg::overlay_svg;
use leadsynth::synth::{check_rate, synthesize_all};
use leadsynth::{LagModel, LeadId, Library, Record};
use serde::Serialize;

use crate::config::{ConfigArgs, PipelineConfig};
use crate::error::CliError;
use crate::io::{self, InputFormat};
use crate::train::{build_library, model_file_name};
use crate::{parse_lead, OutArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Synchronous historic record of the same subject.
    #[arg(long)]
    pub historic: PathBuf,
    /// Currently recorded signal (one lead, or pick one with --current-lead).
    #[arg(long)]
    pub current: PathBuf,
    #[arg(long, value_parser = parse_lead)]
    pub current_lead: Option<LeadId>,
    /// Directory written by `train`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Synchronous measurement covering the current span; enables scores
    /// and measured-vs-synthesized strips.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

fn load_models(dir: &Path, library: &mut Library, current: LeadId) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{}: model directory not found", dir.display())));
    }
    for missing in library.leads() {
        if missing == current || missing.standard_index().is_none() {
            continue;
        }
        let path = dir.join(model_file_name(missing, current));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("{}: model for {missing} from {current}: {e}", path.display())))?;
        let model = LagModel::from_text(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if (model.missing, model.current) != (missing, current) {
            return Err(CliError::Input(format!(
                "{}: holds the model for {} from {}",
                path.display(),
                model.missing,
                model.current
            )));
        }
        library.insert_model(model);
    }
    Ok(())
}

/// Reference samples aligned with the current signal's clock.
fn aligned_reference(reference: &Record, current: &Record) -> Result<Record, CliError> {
    if (reference.fs() - current.fs()).abs() > 1e-9 {
        return Err(CliError::Input("reference and current sampling rates differ".into()));
    }
    let offset = ((current.start_time() - reference.start_time()) * reference.fs()).round();
    if offset < 0.0 || offset as usize + current.len() > reference.len() {
        return Err(CliError::Input("reference does not cover the current recording".into()));
    }
    let i0 = offset as usize;
    let leads = reference
        .leads()
        .into_iter()
        .map(|l| {
            (
                l,
                reference.lead(l).expect("listed lead")[i0..i0 + current.len()].to_vec(),
            )
        })
        .collect();
    Ok(Record::from_leads(
        &reference.header().name,
        reference.fs(),
        leads,
        current.start_time(),
    )?)
}

#[derive(Serialize)]
struct Scores {
    current: LeadId,
    mean_r2: f64,
    mean_rho: f64,
    leads: BTreeMap<LeadId, Score>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    cfg.synthesis.validate()?;
    let historic = io::load_record(&args.historic, args.format)?;
    let current_rec = io::load_record(&args.current, args.format)?;
    let current = io::pick_lead(&current_rec, args.current_lead, &args.current)?;
    let reference = args
        .reference
        .as_deref()
        .map(|p| io::load_record(p, args.format))
        .transpose()?;

    let mut library = build_library(&historic, &cfg)?;
    check_rate(current_rec.fs(), &library)?;
    if !library.leads().contains(&current) {
        return Err(CliError::Input(format!("lead {current} is not in the historic record")));
    }
    match &args.models {
        Some(dir) => load_models(dir, &mut library, current)?,
        None if cfg.synthesis.lag_correction => {
            return Err(CliError::Input(
                "--models is required unless --no-lag-correction is given".into(),
            ))
        }
        None => {}
    }

    let raw = current_rec.lead(current).expect("picked lead");
    let filtered =
        preprocess_signal(raw, current_rec.fs(), &cfg.preprocess).map_err(|e| CliError::Input(e.to_string()))?;
    let mut recon = synthesize_all(&filtered, current, &library, &cfg.synthesis)?;
    recon.passthrough = raw.to_vec();

    let out = &args.out.out;
    io::ensure_dir(out)?;
    let record = recon.to_record("synth", current_rec.start_time())?;
    io::write_bundle(out, "synth", &record)?;
    let prov_path = out.join("provenance.jsonl");
    let mut w = BufWriter::new(File::create(&prov_path).map_err(|e| CliError::Other(e.to_string()))?);
    for lead in &recon.synthesized {
        lead.write_provenance(&mut w)
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))?;

    let clamps: usize = recon.synthesized.iter().map(|s| s.clamp_events()).sum();
    say!(
        "synthesized {} leads from {current} over {:.3} s ({} drift clamp events)",
        recon.synthesized.len(),
        current_rec.duration(),
        clamps
    );

    if let Some(reference) = reference {
        let reference = aligned_reference(
            &preprocess_record(&reference, &cfg.preprocess).map_err(|e| CliError::Input(e.to_string()))?,
            &current_rec,
        )?;
        let mut leads = BTreeMap::new();
        for s in &recon.synthesized {
            let Some(measured) = reference.lead(s.lead) else {
                continue;
            };
            let sc = score(measured, &s.samples)?;
            let strip = overlay_svg(
                &format!("{} from {current}", s.lead),
                recon.fs,
                &[("measured", measured), ("synthesized", s.samples.as_slice())],
            );
            io::write_text(&out.join(format!("strip_{}.svg", s.lead)), &strip)?;
            leads.insert(s.lead, sc);
        }
        let n = leads.len().max(1) as f64;
        let scores = Scores {
            current,
            mean_r2: leads.values().map(|s| s.r2).sum::<f64>() / n,
            mean_rho: leads.values().map(|s| s.rho).sum::<f64>() / n,
            leads,
        };
        say!(
            "against the reference: mean R² {:.3}, mean ρ {:.3}",
            scores.mean_r2,
            scores.mean_rho
        );
        io::write_json(&out.join("scores.json"), &scores)?;
    }
    Ok(())
}
