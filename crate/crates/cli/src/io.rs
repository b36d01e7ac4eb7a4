//! Loading records from disk and writing output files.

use std::fs;
use std::path::{Path, PathBuf};

use leadsynth::record::{
    parse_header, read_csv_record, read_record, write_record_csv, Payload, RecordHeader, StorageFormat,
};
use leadsynth::{LeadId, Record};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// Decide from the file extension.
    Auto,
    /// WFDB `.hea` header with its `.dat` file.
    Wfdb,
    /// `time_s` column followed by one column per lead.
    Csv,
    /// Canonical bundle header (`.json`) next to its `.csv`.
    Bundle,
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| input_err(path, e))
}

fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "record".to_string(), |s| s.to_string_lossy().into_owned())
}

fn resolve_format(path: &Path, format: InputFormat) -> Result<InputFormat, CliError> {
    if format != InputFormat::Auto {
        return Ok(format);
    }
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("hea") => Ok(InputFormat::Wfdb),
        Some("csv") => Ok(InputFormat::Csv),
        Some("json") => Ok(InputFormat::Bundle),
        _ => Err(input_err(
            path,
            "cannot tell the format from the extension; pass --format",
        )),
    }
}

fn load_wfdb(path: &Path) -> Result<Record, CliError> {
    let header = parse_header(&read_string(path)?).map_err(|e| input_err(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let data = match &header.data_file {
        Some(f) => dir.join(f),
        None => path.with_extension("dat"),
    };
    if header.leads.iter().all(|d| d.format == StorageFormat::Csv) {
        let text = read_string(&data)?;
        return read_record(&header, Payload::Csv(&text)).map_err(|e| input_err(&data, e));
    }
    let bytes = read_bytes(&data)?;
    read_record(&header, Payload::Binary(&bytes)).map_err(|e| input_err(&data, e))
}

fn load_bundle(path: &Path) -> Result<Record, CliError> {
    let header: RecordHeader = serde_json::from_str(&read_string(path)?).map_err(|e| input_err(path, e))?;
    let data = path.with_extension("csv");
    let text = read_string(&data)?;
    read_record(&header, Payload::Csv(&text)).map_err(|e| input_err(&data, e))
}

pub fn load_record(path: &Path, format: InputFormat) -> Result<Record, CliError> {
    match resolve_format(path, format)? {
        InputFormat::Wfdb => load_wfdb(path),
        InputFormat::Csv => read_csv_record(&stem(path), &read_string(path)?).map_err(|e| input_err(path, e)),
        InputFormat::Bundle => load_bundle(path),
        InputFormat::Auto => unreachable!("resolved above"),
    }
}

/// The one lead a command should work on: the requested one, or the only
/// lead of a single-lead file.
pub fn pick_lead(record: &Record, requested: Option<LeadId>, path: &Path) -> Result<LeadId, CliError> {
    match requested {
        Some(l) if record.has_lead(l) => Ok(l),
        Some(l) => Err(input_err(path, format!("lead {l} is not in the file"))),
        None => match record.leads().as_slice() {
            [only] => Ok(*only),
            _ => Err(input_err(path, "file has several leads; pass --current-lead")),
        },
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("cannot write {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| output_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| output_err(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes `<dir>/<name>.csv` and the matching `<name>.json` header.
pub fn write_bundle(dir: &Path, name: &str, record: &Record) -> Result<PathBuf, CliError> {
    let csv_path = dir.join(format!("{name}.csv"));
    let file = fs::File::create(&csv_path).map_err(|e| output_err(&csv_path, e))?;
    write_record_csv(record, std::io::BufWriter::new(file)).map_err(|e| output_err(&csv_path, e))?;
    let header = RecordHeader::for_csv(name, record.fs(), &record.leads(), record.len());
    write_json(&dir.join(format!("{name}.json")), &header)?;
    Ok(csv_path)
}
