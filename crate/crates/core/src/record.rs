//! Multi-lead record I/O: a WFDB subset (format 16 only) and plain CSV.
//!
//! Samples are held in millivolts. ADC counts exist only at the file boundary.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::lead::LeadId;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported storage format {0:?}; only WFDB format 16 and csv are supported")]
    UnsupportedFormat(String),
    #[error("payload truncated: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("lead {0} has ADC gain 0")]
    GainZero(LeadId),
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("time window [{t0}, {t1}] s is outside the record (duration {duration} s)")]
    OutOfRange { t0: f64, t1: f64, duration: f64 },
    #[error("lead {0} is not present in the record")]
    UnknownLead(LeadId),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RecordError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorageFormat {
    /// 16-bit little-endian two's complement, sample-interleaved.
    #[serde(rename = "16")]
    Format16,
    /// Text columns already in millivolts.
    #[serde(rename = "csv")]
    Csv,
}

impl StorageFormat {
    pub fn tag(self) -> &'static str {
        match self {
            StorageFormat::Format16 => "16",
            StorageFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadDescriptor {
    pub lead: LeadId,
    /// ADC units per millivolt.
    pub gain: f64,
    /// ADC count corresponding to 0 mV.
    pub baseline: i32,
    pub format: StorageFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub name: String,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub samples_per_lead: usize,
    pub leads: Vec<LeadDescriptor>,
    /// Symmetric amplitude bound in mV, when the source declares one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_mv: Option<f64>,
    /// Data file named by the signal lines of a `.hea` header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
}

impl RecordHeader {
    pub fn lead_count(&self) -> usize {
        self.leads.len()
    }

    pub fn lead_ids(&self) -> Vec<LeadId> {
        self.leads.iter().map(|d| d.lead).collect()
    }

    /// Header for samples already in millivolts (CSV storage).
    pub fn for_csv(name: impl Into<String>, fs: f64, leads: &[LeadId], samples: usize) -> Self {
        Self {
            name: name.into(),
            fs,
            samples_per_lead: samples,
            leads: leads
                .iter()
                .map(|&lead| LeadDescriptor {
                    lead,
                    gain: 1.0,
                    baseline: 0,
                    format: StorageFormat::Csv,
                })
                .collect(),
            range_mv: None,
            data_file: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(RecordError::MalformedHeader(format!(
                "sampling rate must be positive, got {}",
                self.fs
            )));
        }
        if self.leads.is_empty() {
            return Err(RecordError::MalformedHeader("record declares no leads".into()));
        }
        let mut seen = HashSet::new();
        for d in &self.leads {
            if !seen.insert(d.lead) {
                return Err(RecordError::MalformedHeader(format!("duplicate lead {}", d.lead)));
            }
        }
        Ok(())
    }
}

/// Parses a WFDB-style `.hea` header restricted to format 16 (or `csv`) signals.
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let record_line = lines
        .next()
        .ok_or_else(|| RecordError::MalformedHeader("empty header".into()))?;
    let mut fields = record_line.split_whitespace();
    let name_field = fields
        .next()
        .ok_or_else(|| RecordError::MalformedHeader("missing record name".into()))?;
    if name_field.contains('/') {
        return Err(RecordError::UnsupportedFormat("multi-segment record".into()));
    }
    let nsig: usize = parse_field(fields.next(), "signal count")?;
    if nsig == 0 {
        return Err(RecordError::MalformedHeader("record declares 0 leads".into()));
    }
    let fs = match fields.next() {
        // `fs/counter_freq(base_counter)`; only the sampling rate matters here.
        Some(f) => {
            let core = f.split(['/', '(']).next().unwrap_or(f);
            core.parse::<f64>()
                .map_err(|_| RecordError::MalformedHeader(format!("bad sampling rate {f:?}")))?
        }
        None => 250.0,
    };
    let samples_per_lead: usize = parse_field(fields.next(), "samples per signal")?;

    let mut leads = Vec::with_capacity(nsig);
    let mut data_file: Option<String> = None;
    for _ in 0..nsig {
        let line = lines
            .next()
            .ok_or_else(|| RecordError::MalformedHeader(format!("expected {nsig} signal lines")))?;
        let desc = parse_signal_line(line, &mut data_file)?;
        leads.push(desc);
    }
    let header = RecordHeader {
        name: name_field.to_string(),
        fs,
        samples_per_lead,
        range_mv: range_for(&leads),
        leads,
        data_file,
    };
    header.validate()?;
    Ok(header)
}

/// Byte-level entry point: invalid UTF-8 is reported as a malformed header.
pub fn parse_header_bytes(bytes: &[u8]) -> Result<RecordHeader> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| RecordError::MalformedHeader(format!("header is not UTF-8: {e}")))?;
    parse_header(text)
}

fn parse_field<F: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<F> {
    let f = field.ok_or_else(|| RecordError::MalformedHeader(format!("missing {what}")))?;
    f.parse::<F>()
        .map_err(|_| RecordError::MalformedHeader(format!("bad {what} {f:?}")))
}

fn parse_signal_line(line: &str, data_file: &mut Option<String>) -> Result<LeadDescriptor> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 2 {
        return Err(RecordError::MalformedHeader(format!("short signal line {line:?}")));
    }
    match data_file {
        Some(f) if f != tokens[0] => {
            return Err(RecordError::UnsupportedFormat(
                "signals spread over several data files".into(),
            ))
        }
        None => *data_file = Some(tokens[0].to_string()),
        _ => {}
    }
    let format = match tokens[1] {
        "16" => StorageFormat::Format16,
        f if f.eq_ignore_ascii_case("csv") => StorageFormat::Csv,
        other => return Err(RecordError::UnsupportedFormat(other.to_string())),
    };

    // gain[(baseline)][/units]
    let (mut gain, mut baseline, mut units) = (200.0, None, "mV".to_string());
    if let Some(g) = tokens.get(2) {
        let (num, rest) = match g.find(['(', '/']) {
            Some(p) => (&g[..p], &g[p..]),
            None => (*g, ""),
        };
        gain = num
            .parse::<f64>()
            .map_err(|_| RecordError::MalformedHeader(format!("bad gain {g:?}")))?;
        let mut rest = rest;
        if let Some(stripped) = rest.strip_prefix('(') {
            let close = stripped
                .find(')')
                .ok_or_else(|| RecordError::MalformedHeader(format!("bad gain {g:?}")))?;
            baseline = Some(
                stripped[..close]
                    .parse::<i32>()
                    .map_err(|_| RecordError::MalformedHeader(format!("bad baseline in {g:?}")))?,
            );
            rest = &stripped[close + 1..];
        }
        if let Some(u) = rest.strip_prefix('/') {
            units = u.to_string();
        } else if !rest.is_empty() {
            return Err(RecordError::MalformedHeader(format!("bad gain field {g:?}")));
        }
    }
    if !gain.is_finite() || gain < 0.0 {
        return Err(RecordError::MalformedHeader(format!("bad gain {gain}")));
    }
    let adc_zero: Option<i32> = match tokens.get(4) {
        Some(z) => Some(
            z.parse()
                .map_err(|_| RecordError::MalformedHeader(format!("bad ADC zero {z:?}")))?,
        ),
        None => None,
    };
    let baseline = baseline.or(adc_zero).unwrap_or(0);
    // Gains given per microvolt are rescaled to per millivolt.
    match units.as_str() {
        "mV" | "mv" => {}
        "uV" | "µV" | "uv" => gain *= 1000.0,
        "V" => gain /= 1000.0,
        other => {
            return Err(RecordError::MalformedHeader(format!("unsupported units {other:?}")));
        }
    }
    let description = tokens.get(8..).map(|t| t.join(" ")).unwrap_or_default();
    if description.is_empty() {
        return Err(RecordError::MalformedHeader(format!(
            "signal line without lead description: {line:?}"
        )));
    }
    let lead = description
        .parse::<LeadId>()
        .map_err(|e| RecordError::MalformedHeader(e.to_string()))?;
    Ok(LeadDescriptor {
        lead,
        gain,
        baseline,
        format,
    })
}

fn range_for(leads: &[LeadDescriptor]) -> Option<f64> {
    leads
        .iter()
        .filter(|d| d.format == StorageFormat::Format16 && d.gain > 0.0)
        .map(|d| 32768.0 / d.gain)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}

/// Renders a header in the `.hea` syntax accepted by [`parse_header`].
pub fn format_header(header: &RecordHeader, data_file: &str) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        header.name,
        header.lead_count(),
        header.fs,
        header.samples_per_lead
    );
    for d in &header.leads {
        out.push_str(&format!(
            "{} {} {}({})/mV 16 {} 0 0 0 {}\n",
            data_file,
            d.format.tag(),
            d.gain,
            d.baseline,
            d.baseline,
            d.lead.name().to_ascii_lowercase()
        ));
    }
    out
}

/// Sampled multi-lead signal in millivolts. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLeadRecord<T> {
    header: RecordHeader,
    samples: Vec<Vec<T>>,
    start_time: f64,
}

impl<T: Real> MultiLeadRecord<T> {
    /// Validates equal lead lengths, finiteness and the declared range.
    /// `samples_per_lead` in the stored header is set from the data.
    pub fn new(mut header: RecordHeader, samples: Vec<Vec<T>>, start_time: f64) -> Result<Self> {
        header.validate()?;
        if samples.len() != header.lead_count() {
            return Err(RecordError::Invalid(format!(
                "{} sample vectors for {} leads",
                samples.len(),
                header.lead_count()
            )));
        }
        let n = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != n) {
            return Err(RecordError::Invalid("lead lengths differ".into()));
        }
        let bound = header.range_mv.map(T::lit);
        for (d, s) in header.leads.iter().zip(&samples) {
            if let Some(pos) = s.iter().position(|v| !v.is_finite()) {
                return Err(RecordError::Invalid(format!(
                    "non-finite value in lead {} at sample {pos}",
                    d.lead
                )));
            }
            if let Some(b) = bound {
                if s.iter().any(|v| v.abs() > b) {
                    return Err(RecordError::Invalid(format!(
                        "lead {} exceeds the declared range",
                        d.lead
                    )));
                }
            }
        }
        header.samples_per_lead = n;
        Ok(Self {
            header,
            samples,
            start_time,
        })
    }

    /// Builds a CSV-backed record from `(lead, samples)` pairs.
    pub fn from_leads(name: impl Into<String>, fs: f64, leads: Vec<(LeadId, Vec<T>)>, start_time: f64) -> Result<Self> {
        let ids: Vec<LeadId> = leads.iter().map(|(l, _)| *l).collect();
        let n = leads.first().map_or(0, |(_, s)| s.len());
        let header = RecordHeader::for_csv(name, fs, &ids, n);
        Self::new(header, leads.into_iter().map(|(_, s)| s).collect(), start_time)
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn fs(&self) -> f64 {
        self.header.fs
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.header.fs
    }

    pub fn leads(&self) -> Vec<LeadId> {
        self.header.lead_ids()
    }

    pub fn has_lead(&self, lead: LeadId) -> bool {
        self.header.leads.iter().any(|d| d.lead == lead)
    }

    pub fn lead(&self, lead: LeadId) -> Option<&[T]> {
        self.header
            .leads
            .iter()
            .position(|d| d.lead == lead)
            .map(|i| self.samples[i].as_slice())
    }

    pub fn require_lead(&self, lead: LeadId) -> Result<&[T]> {
        self.lead(lead).ok_or(RecordError::UnknownLead(lead))
    }

    pub fn samples(&self) -> &[Vec<T>] {
        &self.samples
    }

    pub fn into_parts(self) -> (RecordHeader, Vec<Vec<T>>, f64) {
        (self.header, self.samples, self.start_time)
    }

    /// Applies `f` to every lead, keeping metadata.
    pub fn map_leads<E>(
        &self,
        f: impl Fn(LeadId, &[T]) -> std::result::Result<Vec<T>, E> + Sync,
    ) -> std::result::Result<Vec<Vec<T>>, E>
    where
        E: Send,
    {
        use rayon::prelude::*;
        self.header
            .leads
            .par_iter()
            .zip(self.samples.par_iter())
            .map(|(d, s)| f(d.lead, s))
            .collect()
    }

    /// Same metadata, new sample data (used by preprocessing).
    pub fn with_samples(&self, samples: Vec<Vec<T>>) -> Result<Self> {
        let mut header = self.header.clone();
        header.range_mv = None;
        Self::new(header, samples, self.start_time)
    }
}

/// Input to [`read_record`].
#[derive(Debug, Clone, Copy)]
pub enum Payload<'a> {
    /// Contents of a format-16 `.dat` file.
    Binary(&'a [u8]),
    /// CSV text with a `time_s` column followed by one column per lead.
    Csv(&'a str),
}

/// Decodes a payload according to `header`.
pub fn read_record<T: Real>(header: &RecordHeader, payload: Payload<'_>) -> Result<MultiLeadRecord<T>> {
    header.validate()?;
    match payload {
        Payload::Binary(bytes) => read_format16(header, bytes),
        Payload::Csv(text) => {
            let (names, time, columns) = parse_csv_columns::<T>(text)?;
            let mut samples = Vec::with_capacity(header.lead_count());
            for d in &header.leads {
                let idx = names
                    .iter()
                    .position(|n| *n == d.lead)
                    .ok_or(RecordError::UnknownLead(d.lead))?;
                samples.push(columns[idx].clone());
            }
            let start = time.first().copied().unwrap_or(0.0);
            let mut h = header.clone();
            h.range_mv = None;
            MultiLeadRecord::new(h, samples, start)
        }
    }
}

fn read_format16<T: Real>(header: &RecordHeader, bytes: &[u8]) -> Result<MultiLeadRecord<T>> {
    for d in &header.leads {
        if d.format != StorageFormat::Format16 {
            return Err(RecordError::UnsupportedFormat(d.format.tag().into()));
        }
        if d.gain == 0.0 {
            return Err(RecordError::GainZero(d.lead));
        }
    }
    let nsig = header.lead_count();
    let n = header.samples_per_lead;
    let expected = n
        .checked_mul(nsig)
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| RecordError::MalformedHeader("sample count overflows".into()))?;
    if bytes.len() < expected {
        return Err(RecordError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    let mut samples: Vec<Vec<T>> = (0..nsig).map(|_| Vec::with_capacity(n)).collect();
    for (k, chunk) in bytes[..expected].chunks_exact(2).enumerate() {
        let count = i16::from_le_bytes([chunk[0], chunk[1]]);
        let d = &header.leads[k % nsig];
        let mv = (f64::from(count) - f64::from(d.baseline)) / d.gain;
        samples[k % nsig].push(T::lit(mv));
    }
    MultiLeadRecord::new(header.clone(), samples, 0.0)
}

type CsvColumns<T> = (Vec<LeadId>, Vec<f64>, Vec<Vec<T>>);

fn parse_csv_columns<T: Real>(text: &str) -> Result<CsvColumns<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| RecordError::MalformedCsv(e.to_string()))?
        .clone();
    if headers.get(0) != Some("time_s") {
        return Err(RecordError::MalformedCsv("first column must be time_s".into()));
    }
    let names = headers
        .iter()
        .skip(1)
        .map(|h| {
            h.parse::<LeadId>()
                .map_err(|e| RecordError::MalformedCsv(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut time = Vec::new();
    let mut columns: Vec<Vec<T>> = vec![Vec::new(); names.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| RecordError::MalformedCsv(e.to_string()))?;
        if rec.len() != names.len() + 1 {
            return Err(RecordError::MalformedCsv(format!(
                "row {} has {} fields",
                row + 1,
                rec.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| RecordError::MalformedCsv(format!("bad number {s:?} in row {}", row + 1)))
        };
        time.push(parse(&rec[0])?);
        for (c, col) in columns.iter_mut().enumerate() {
            let v = parse(&rec[c + 1])?;
            if !v.is_finite() {
                return Err(RecordError::MalformedCsv(format!(
                    "non-finite value in row {}",
                    row + 1
                )));
            }
            col.push(T::lit(v));
        }
    }
    Ok((names, time, columns))
}

/// Reads a CSV record without a sidecar header; the rate is inferred from the
/// time column, so at least two rows are required.
pub fn read_csv_record<T: Real>(name: &str, text: &str) -> Result<MultiLeadRecord<T>> {
    let (names, time, columns) = parse_csv_columns::<T>(text)?;
    if time.len() < 2 {
        return Err(RecordError::MalformedCsv(
            "at least two rows are needed to infer the sampling rate".into(),
        ));
    }
    let span = time[time.len() - 1] - time[0];
    if span <= 0.0 {
        return Err(RecordError::MalformedCsv("time column is not increasing".into()));
    }
    let raw = (time.len() - 1) as f64 / span;
    // Printed times carry rounding noise; snap to 9 significant digits.
    let scale = 10f64.powi(8 - raw.log10().floor() as i32);
    let fs = (raw * scale).round() / scale;
    let header = RecordHeader::for_csv(name, fs, &names, time.len());
    MultiLeadRecord::new(header, columns, time[0])
}

/// Writes `time_s,<leads>` CSV. Values use shortest round-trip formatting.
pub fn write_record_csv<T: Real, W: Write>(record: &MultiLeadRecord<T>, destination: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(destination);
    let mut row: Vec<String> = vec!["time_s".to_string()];
    row.extend(record.leads().iter().map(|l| l.name().to_string()));
    w.write_record(&row).map_err(csv_io)?;
    let fs = record.fs();
    for i in 0..record.len() {
        row.clear();
        row.push(format!("{}", record.start_time() + i as f64 / fs));
        for lead in record.samples() {
            row.push(format!("{}", lead[i].as_f64()));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> RecordError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RecordError::Io(io),
        other => RecordError::MalformedCsv(format!("{other:?}")),
    }
}

/// Encodes a record as format-16 bytes. Counts saturate at the i16 range.
pub fn encode_format16<T: Real>(record: &MultiLeadRecord<T>, gains: &[f64]) -> (RecordHeader, Vec<u8>) {
    let mut header = record.header().clone();
    for (d, &g) in header.leads.iter_mut().zip(gains) {
        d.gain = g;
        d.baseline = 0;
        d.format = StorageFormat::Format16;
    }
    header.range_mv = range_for(&header.leads);
    let mut bytes = Vec::with_capacity(record.len() * header.lead_count() * 2);
    for i in 0..record.len() {
        for (lead, d) in record.samples().iter().zip(&header.leads) {
            let count = (lead[i].as_f64() * d.gain + f64::from(d.baseline))
                .round()
                .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
            bytes.extend_from_slice(&count.to_le_bytes());
        }
    }
    (header, bytes)
}

fn sample_index(t: f64, fs: f64) -> usize {
    (t * fs).round().max(0.0) as usize
}

/// Sample-aligned sub-record; `t0`/`t1` are seconds from the record start.
pub fn slice_record<T: Real>(
    record: &MultiLeadRecord<T>,
    t0: f64,
    t1: f64,
    leads: &[LeadId],
) -> Result<MultiLeadRecord<T>> {
    let duration = record.duration();
    let tol = 0.5 / record.fs();
    if !(t0 >= 0.0 && t0 < t1 && t1 <= duration + tol) {
        return Err(RecordError::OutOfRange { t0, t1, duration });
    }
    for &l in leads {
        if !record.has_lead(l) {
            return Err(RecordError::UnknownLead(l));
        }
    }
    let fs = record.fs();
    let i0 = sample_index(t0, fs).min(record.len());
    let i1 = sample_index(t1, fs).min(record.len()).max(i0);
    let mut header = record.header().clone();
    let mut samples = Vec::new();
    let mut descriptors = Vec::new();
    for (d, s) in record.header().leads.iter().zip(record.samples()) {
        if leads.contains(&d.lead) {
            descriptors.push(d.clone());
            samples.push(s[i0..i1].to_vec());
        }
    }
    header.leads = descriptors;
    header.samples_per_lead = i1 - i0;
    MultiLeadRecord::new(header, samples, record.start_time() + i0 as f64 / fs)
}

/// Resamples every lead to `target_fs`; output length is `floor(n * target/fs)`.
pub fn resample_record<T: Real>(record: &MultiLeadRecord<T>, target_fs: f64) -> Result<MultiLeadRecord<T>> {
    if !(target_fs.is_finite() && target_fs > 0.0) {
        return Err(RecordError::Invalid(format!(
            "target rate must be positive, got {target_fs}"
        )));
    }
    if target_fs == record.fs() {
        return Ok(record.clone());
    }
    let samples = record
        .samples()
        .iter()
        .map(|s| resample(s, record.fs(), target_fs))
        .collect();
    let mut header = record.header().clone();
    header.fs = target_fs;
    header.range_mv = None;
    MultiLeadRecord::new(header, samples, record.start_time())
}

/// Largest denominator for which a rate ratio counts as rational.
const MAX_RATIO_DENOMINATOR: u64 = 1000;
/// Kaiser-windowed sinc half width, in zero crossings of the interpolation kernel.
const SINC_HALF_WIDTH: f64 = 64.0;
const KAISER_BETA: f64 = 12.0;

/// Resamples one sequence: windowed sinc for rational rate ratios, linear
/// interpolation otherwise.
pub fn resample<T: Real>(x: &[T], fs: f64, target_fs: f64) -> Vec<T> {
    let n_out = ((x.len() as f64) * target_fs / fs + 1e-9).floor() as usize;
    if x.is_empty() || n_out == 0 {
        return Vec::new();
    }
    if fs == target_fs {
        return x.to_vec();
    }
    let step = fs / target_fs;
    if rational_ratio(target_fs / fs).is_some() {
        windowed_sinc(x, step, n_out)
    } else {
        (0..n_out).map(|k| linear_at(x, k as f64 * step)).collect()
    }
}

fn rational_ratio(r: f64) -> Option<(u64, u64)> {
    (1..=MAX_RATIO_DENOMINATOR).find_map(|q| {
        let p = r * q as f64;
        let pr = p.round();
        ((p - pr).abs() < 1e-9 * p.max(1.0) && pr >= 1.0).then_some((pr as u64, q))
    })
}

fn linear_at<T: Real>(x: &[T], pos: f64) -> T {
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let frac = T::lit(pos - i as f64);
    x[i] + (x[i + 1] - x[i]) * frac
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn windowed_sinc<T: Real>(x: &[T], step: f64, n_out: usize) -> Vec<T> {
    // Cutoff relative to the input Nyquist; below 1 when decimating.
    let cutoff = (1.0 / step).min(1.0);
    let half_span = SINC_HALF_WIDTH / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let n = x.len() as isize;
    // Odd reflection about the end samples keeps the local trend at the edges.
    let at = |k: isize| -> f64 {
        if k < 0 {
            let m = (-k).min(n - 1);
            2.0 * x[0].as_f64() - x[m as usize].as_f64()
        } else if k >= n {
            let m = (2 * (n - 1) - k).max(0);
            2.0 * x[(n - 1) as usize].as_f64() - x[m as usize].as_f64()
        } else {
            x[k as usize].as_f64()
        }
    };
    (0..n_out)
        .map(|j| {
            let t = j as f64 * step;
            let lo = (t - half_span).ceil() as isize;
            let hi = (t + half_span).floor() as isize;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for k in lo..=hi {
                let d = t - k as f64;
                let u = d / half_span;
                if u.abs() > 1.0 {
                    continue;
                }
                let arg = PI * cutoff * d;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
                let w = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta;
                let h = cutoff * sinc * w;
                acc += h * at(k);
                wsum += h;
            }
            // Normalising by the kernel sum gives unit DC gain at every phase.
            T::lit(if wsum.abs() > 1e-12 { acc / wsum } else { acc })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LEAD_HEADER: &str = "\
# hand-written fixture
fixture 2 500 4
fixture.dat 16 200(10)/mV 16 10 0 0 0 ii
fixture.dat 16 1000/uV 16 0 5 0 0 V1
";

    #[test]
    fn parses_hand_written_header_field_by_field() {
        let h = parse_header(TWO_LEAD_HEADER).unwrap();
        assert_eq!(h.name, "fixture");
        assert_eq!(h.fs, 500.0);
        assert_eq!(h.samples_per_lead, 4);
        assert_eq!(h.lead_count(), 2);
        assert_eq!(
            h.leads[0],
            LeadDescriptor {
                lead: LeadId::II,
                gain: 200.0,
                baseline: 10,
                format: StorageFormat::Format16
            }
        );
        // microvolt gain rescaled to per-mV; baseline falls back to ADC zero
        assert_eq!(h.leads[1].lead, LeadId::V1);
        assert_eq!(h.leads[1].gain, 1_000_000.0);
        assert_eq!(h.leads[1].baseline, 0);
    }

    #[test]
    fn parses_ptb_style_header() {
        let mut text = String::from("s0010_re 15 1000 38400 \n");
        let names = [
            "i", "ii", "iii", "avr", "avl", "avf", "v1", "v2", "v3", "v4", "v5", "v6", "vx", "vy", "vz",
        ];
        for name in names {
            text.push_str(&format!("s0010_re.dat 16 2000 16 0 -489 -8337 0 {name}\n"));
        }
        text.push_str("# age: 81\n");
        let h = parse_header(&text).unwrap();
        assert_eq!(h.fs, 1000.0);
        assert_eq!(h.lead_count(), 15);
        assert_eq!(h.leads[14].lead, LeadId::Z);
        assert_eq!(h.range_mv, Some(16.384));
    }

    #[test]
    fn rejects_zero_leads_and_other_formats() {
        assert!(matches!(
            parse_header("rec 0 1000 10\n"),
            Err(RecordError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header("rec 1 1000 10\nrec.dat 212 200 12 0 0 0 0 i\n"),
            Err(RecordError::UnsupportedFormat(f)) if f == "212"
        ));
        assert!(matches!(
            parse_header("rec 2 1000 10\nrec.dat 16 200 16 0 0 0 0 i\nrec.dat 16 200 16 0 0 0 0 i\n"),
            Err(RecordError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header_bytes(&[0xff, 0xfe]),
            Err(RecordError::MalformedHeader(_))
        ));
    }

    fn two_lead_header(gain: f64, baseline: i32, n: usize) -> RecordHeader {
        RecordHeader {
            name: "t".into(),
            fs: 500.0,
            samples_per_lead: n,
            leads: [LeadId::I, LeadId::II]
                .iter()
                .map(|&lead| LeadDescriptor {
                    lead,
                    gain,
                    baseline,
                    format: StorageFormat::Format16,
                })
                .collect(),
            range_mv: None,
            data_file: None,
        }
    }

    #[test]
    fn adc_conversion() {
        let header = two_lead_header(200.0, 0, 1);
        let bytes: Vec<u8> = [400i16, 0].iter().flat_map(|c| c.to_le_bytes()).collect();
        let r: MultiLeadRecord<f64> = read_record(&header, Payload::Binary(&bytes)).unwrap();
        assert_eq!(r.lead(LeadId::I).unwrap(), &[2.0]);
        assert_eq!(r.lead(LeadId::II).unwrap(), &[0.0]);

        let header = two_lead_header(200.0, 37, 1);
        let bytes: Vec<u8> = [37i16, 37].iter().flat_map(|c| c.to_le_bytes()).collect();
        let r: MultiLeadRecord<f64> = read_record(&header, Payload::Binary(&bytes)).unwrap();
        assert_eq!(r.lead(LeadId::I).unwrap(), &[0.0]);
    }

    #[test]
    fn deinterleaves_two_lead_fixture() {
        // sample-major interleave: (I0, II0), (I1, II1), ...
        let counts: [i16; 8] = [100, -100, 200, -200, 300, -300, 400, -400];
        let bytes: Vec<u8> = counts.iter().flat_map(|c| c.to_le_bytes()).collect();
        let header = two_lead_header(100.0, 0, 4);
        let r: MultiLeadRecord<f64> = read_record(&header, Payload::Binary(&bytes)).unwrap();
        assert_eq!(r.lead(LeadId::I).unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.lead(LeadId::II).unwrap(), &[-1.0, -2.0, -3.0, -4.0]);
    }

    #[test]
    fn truncated_payload_and_zero_gain() {
        let header = two_lead_header(100.0, 0, 4);
        assert!(matches!(
            read_record::<f64>(&header, Payload::Binary(&[0u8; 15])),
            Err(RecordError::TruncatedPayload {
                expected: 16,
                actual: 15
            })
        ));
        let header = two_lead_header(0.0, 0, 1);
        assert!(matches!(
            read_record::<f64>(&header, Payload::Binary(&[0u8; 4])),
            Err(RecordError::GainZero(LeadId::I))
        ));
    }

    fn ramp_record(seconds: f64, fs: f64) -> MultiLeadRecord<f64> {
        let n = (seconds * fs) as usize;
        MultiLeadRecord::from_leads(
            "ramp",
            fs,
            vec![
                (LeadId::I, (0..n).map(|i| i as f64).collect()),
                (LeadId::II, (0..n).map(|i| -(i as f64)).collect()),
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn slicing() {
        let r = ramp_record(120.0, 1000.0);
        let all = slice_record(&r, 0.0, r.duration(), &r.leads()).unwrap();
        assert_eq!(all, r);
        let first = slice_record(&r, 0.0, 60.0, &r.leads()).unwrap();
        assert_eq!(first.len(), 60_000);
        let only_ii = slice_record(&r, 1.0, 2.0, &[LeadId::II]).unwrap();
        assert_eq!(only_ii.leads(), vec![LeadId::II]);
        assert_eq!(only_ii.start_time(), 1.0);
        assert!(matches!(
            slice_record(&r, 0.0, 1.0, &[LeadId::V3]),
            Err(RecordError::UnknownLead(LeadId::V3))
        ));
        assert!(matches!(
            slice_record(&r, 5.0, 5.0, &[LeadId::I]),
            Err(RecordError::OutOfRange { .. })
        ));
        assert!(matches!(
            slice_record(&r, 0.0, 121.0, &[LeadId::I]),
            Err(RecordError::OutOfRange { .. })
        ));
    }

    #[test]
    fn csv_line_counts() {
        let empty = MultiLeadRecord::<f64>::from_leads("e", 250.0, vec![(LeadId::I, vec![])], 0.0).unwrap();
        let mut out = Vec::new();
        write_record_csv(&empty, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "time_s,I\n");

        let r = MultiLeadRecord::from_leads("t", 250.0, vec![(LeadId::V2, vec![0.1f64, -0.25, 1e-7])], 0.0).unwrap();
        let mut out = Vec::new();
        write_record_csv(&r, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        let back: MultiLeadRecord<f64> = read_record(r.header(), Payload::Csv(&text)).unwrap();
        assert_eq!(back, r);
        let inferred: MultiLeadRecord<f64> = read_csv_record("t", &text).unwrap();
        assert_eq!(inferred.fs(), 250.0);
    }

    #[test]
    fn format16_round_trip_via_encoder() {
        let r = MultiLeadRecord::from_leads(
            "q",
            1000.0,
            vec![
                (LeadId::I, vec![0.5f64, -1.25, 3.0]),
                (LeadId::V6, vec![0.0, 0.001, -0.002]),
            ],
            0.0,
        )
        .unwrap();
        let (header, bytes) = encode_format16(&r, &[2000.0, 2000.0]);
        let text = format_header(&header, "q.dat");
        let parsed = parse_header(&text).unwrap();
        assert_eq!(parsed.leads, header.leads);
        let back: MultiLeadRecord<f64> = read_record(&parsed, Payload::Binary(&bytes)).unwrap();
        for (a, b) in back.samples().iter().flatten().zip(r.samples().iter().flatten()) {
            assert!((a - b).abs() <= 0.5 / 2000.0);
        }
    }

    #[test]
    fn resample_identity_and_lengths() {
        let r = ramp_record(1.0, 1000.0);
        assert_eq!(resample_record(&r, 1000.0).unwrap(), r);
        let half = resample_record(&r, 500.0).unwrap();
        assert_eq!(half.len(), 500);
        assert_eq!(half.fs(), 500.0);
        let odd = resample_record(&r, 333.3).unwrap();
        assert_eq!(odd.len(), 333);
        assert!(resample_record(&r, 0.0).is_err());
    }

    #[test]
    fn resampled_sinusoid_matches_analytic() {
        let fs = 1000.0;
        let n = 10_000;
        let f = 5.0;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs + 0.3).sin()).collect();
        let y = resample(&x, fs, 500.0);
        assert_eq!(y.len(), 5000);
        let err: f64 = y
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let t = k as f64 / 500.0;
                let e = v - (2.0 * PI * f * t + 0.3).sin();
                e * e
            })
            .sum::<f64>()
            / y.len() as f64;
        assert!(err.sqrt() < 1e-3, "rms error {}", err.sqrt());
    }

    #[test]
    fn up_then_down_round_trip() {
        // Band-limited content under a smooth envelope that vanishes at the edges.
        let fs = 500.0;
        let n = 4000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let env = (-((t - 4.0) / 1.0).powi(2)).exp();
                env * ((2.0 * PI * 3.0 * t).sin() + 0.5 * (2.0 * PI * 11.0 * t).cos())
            })
            .collect();
        let up = resample(&x, fs, 1000.0);
        assert_eq!(up.len(), 2 * n);
        let down = resample(&up, 1000.0, fs);
        assert_eq!(down.len(), n);
        let max_dev = x.iter().zip(&down).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_dev < 1e-6, "max deviation {max_dev}");
    }

    #[test]
    fn record_rejects_non_finite_and_ragged() {
        let h = RecordHeader::for_csv("x", 100.0, &[LeadId::I, LeadId::II], 2);
        assert!(MultiLeadRecord::new(h.clone(), vec![vec![0.0, 1.0], vec![0.0]], 0.0).is_err());
        assert!(MultiLeadRecord::new(h, vec![vec![0.0, f64::NAN], vec![0.0, 0.0]], 0.0).is_err());
    }
}
