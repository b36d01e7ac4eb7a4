//! Per-beat predictor vectors and lag training sets.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::delineate::{analyze_lead, BeatFiducials, BeatSegment, DelineateError, LeadAnalysis};
use crate::lead::LeadId;
use crate::record::{MultiLeadRecord, RecordError};
use crate::scalar::{median, Real};

pub const FEATURE_COUNT: usize = 10;

/// Column order of [`BeatFeatures`]. Amplitudes in µV, durations in ms.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "r_height_uv",
    "p_height_uv",
    "t_height_uv",
    "s_peak_uv",
    "q_peak_uv",
    "rr_ms",
    "qrs_ms",
    "st_ms",
    "pr_ms",
    "t_wave_ms",
];

/// Cross-lead R-peak pairing tolerance.
pub const PAIRING_TOLERANCE_MS: f64 = 150.0;
/// Lags beyond this magnitude are treated as pairing or detection failures.
pub const LAG_GATE_MS: f64 = 200.0;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("landmark {0} is absent")]
    MissingLandmark(&'static str),
    #[error("fiducials belong to R-peak {fiducial}, segment opens at {segment}")]
    BeatMismatch { fiducial: usize, segment: usize },
    #[error("only {n} usable beats in the training window, at least {min} required")]
    InsufficientBeats { n: usize, min: usize },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Delineate(#[from] DelineateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatures<T> {
    pub values: [T; FEATURE_COUNT],
}

impl<T: Real> BeatFeatures<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn rr_ms(&self) -> T {
        self.values[5]
    }

    pub fn r_height_uv(&self) -> T {
        self.values[0]
    }
}

fn require(v: Option<usize>, name: &'static str) -> Result<usize, FeatureError> {
    v.ok_or(FeatureError::MissingLandmark(name))
}

/// Predictors for the segment opening at `fid.rpeak`.
///
/// `signal` is the whole lead the segment was cut from; the P wave and Q
/// deflection of the opening beat lie before the segment's first sample.
pub fn extract_features<T: Real>(
    signal: &[T],
    fs: f64,
    segment: &BeatSegment<T>,
    fid: &BeatFiducials,
) -> Result<BeatFeatures<T>, FeatureError> {
    if fid.rpeak != segment.start_sample {
        return Err(FeatureError::BeatMismatch {
            fiducial: fid.rpeak,
            segment: segment.start_sample,
        });
    }
    let pon = require(fid.pon, "Pon")?;
    let ppeak = require(fid.ppeak, "Ppeak")?;
    let q = require(fid.qpeak, "Qpeak")?;
    let s = require(fid.speak, "Speak")?;
    let ton = require(fid.ton, "Ton")?;
    let tpeak = require(fid.tpeak, "Tpeak")?;
    let toff = require(fid.toff, "Toff")?;
    let r = fid.rpeak;

    let per_ms = fs / 1000.0;
    let end = (q as f64 - 20.0 * per_ms).round();
    let start = end - 40.0 * per_ms;
    let base = if start >= 0.0 {
        median(&signal[start as usize..=end as usize])
    } else {
        None
    }
    .or_else(|| median(&segment.samples))
    .unwrap_or_else(T::zero);

    let uv = |i: usize| (signal[i] - base) * T::lit(1000.0);
    let ms = |a: usize, b: usize| T::lit((b as f64 - a as f64) / per_ms);
    Ok(BeatFeatures {
        values: [
            uv(r),
            uv(ppeak),
            uv(tpeak),
            uv(s),
            uv(q),
            T::lit(segment.delta_ms()),
            ms(q, s),
            ms(s, ton),
            ms(pon, q),
            ms(ton, toff),
        ],
    })
}

/// Features for every valid segment of an analysed lead, keyed by segment
/// index; `None` where a landmark was missing.
pub fn lead_features<T: Real>(signal: &[T], analysis: &LeadAnalysis<T>) -> Vec<Option<BeatFeatures<T>>> {
    analysis
        .segments
        .iter()
        .map(|s| {
            let seg = s.as_ref().ok()?;
            let fid = analysis.fiducials.beats.get(seg.index)?;
            extract_features(signal, analysis.fs, seg, fid).ok()
        })
        .collect()
}

/// For each reference R-peak, the index of the matching peak in `other`
/// (nearest within `tolerance` samples, one-to-one, order preserving).
pub fn pair_rpeaks(reference: &[usize], other: &[usize], tolerance: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; reference.len()];
    let mut start = 0;
    let mut last_used: Option<usize> = None;
    for (a, &r) in reference.iter().enumerate() {
        while start < other.len() && other[start] + tolerance < r {
            start += 1;
        }
        let best = (start..other.len())
            .take_while(|&b| other[b] <= r + tolerance)
            .filter(|&b| last_used.is_none_or(|u| b > u))
            .min_by_key(|&b| (other[b].abs_diff(r), b));
        if let Some(b) = best {
            // keep the pairing mutual: the next reference peak may be closer
            let closer_next = reference
                .get(a + 1)
                .is_some_and(|&rn| other[b].abs_diff(rn) < other[b].abs_diff(r));
            if !closer_next {
                out[a] = Some(b);
                last_used = Some(b);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSample<T> {
    /// Predictors measured on the current lead.
    pub features: BeatFeatures<T>,
    /// δ_missing − δ_current in ms.
    pub lag_ms: T,
    /// Segment index in the current lead.
    pub beat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet<T> {
    pub missing: LeadId,
    pub current: LeadId,
    pub source: String,
    pub samples: Vec<LagSample<T>>,
    /// Paired beats rejected by the lag gate.
    pub outliers: usize,
}

impl<T: Real> TrainingSet<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Ten feature columns followed by the lag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},lag_ms", FEATURE_NAMES.join(","))?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.values.iter().map(|v| v.as_f64().to_string()).collect();
            row.push(s.lag_ms.as_f64().to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Training rows from two analysed, synchronous leads.
///
/// Only segments whose closing R-peak falls before `end_sample` are used.
pub fn training_set_from_analyses<T: Real>(
    current_signal: &[T],
    current: &LeadAnalysis<T>,
    missing: &LeadAnalysis<T>,
    end_sample: usize,
    source: &str,
) -> TrainingSet<T> {
    let tolerance = (PAIRING_TOLERANCE_MS * current.fs / 1000.0).round() as usize;
    let pairs = pair_rpeaks(&current.rpeaks, &missing.rpeaks, tolerance);
    let feats = lead_features(current_signal, current);
    let mut samples = Vec::new();
    let mut outliers = 0;
    for (seg_pos, seg) in current.segments.iter().enumerate() {
        let Ok(seg) = seg else { continue };
        if seg.end_sample() >= end_sample {
            continue;
        }
        let a = seg.index;
        let (Some(b0), Some(b1)) = (pairs[a], pairs.get(a + 1).copied().flatten()) else {
            continue;
        };
        if b1 != b0 + 1 {
            continue;
        }
        let Some(f) = feats[seg_pos] else { continue };
        let delta_missing = (missing.rpeaks[b1] - missing.rpeaks[b0]) as f64 * 1000.0 / missing.fs;
        let lag = delta_missing - seg.delta_ms();
        if lag.abs() > LAG_GATE_MS {
            outliers += 1;
            continue;
        }
        samples.push(LagSample {
            features: f,
            lag_ms: T::lit(lag),
            beat: a,
        });
    }
    TrainingSet {
        missing: missing.lead,
        current: current.lead,
        source: source.to_string(),
        samples,
        outliers,
    }
}

/// Detects, delineates and pairs leads `missing` and `current` of a
/// synchronous record over its first `window_s` seconds.
pub fn build_training_set<T: Real>(
    historic: &MultiLeadRecord<T>,
    missing: LeadId,
    current: LeadId,
    window_s: f64,
) -> Result<TrainingSet<T>, FeatureError> {
    let sig_j = historic.require_lead(current)?;
    let sig_i = historic.require_lead(missing)?;
    let fs = historic.fs();
    let aj = analyze_lead(sig_j, fs, current)?;
    let ai = if missing == current {
        aj.clone()
    } else {
        analyze_lead(sig_i, fs, missing)?
    };
    let end = ((window_s.min(historic.duration())) * fs).round() as usize;
    let set = training_set_from_analyses(sig_j, &aj, &ai, end, &historic.header().name);
    if set.len() < crate::forest::MIN_TRAINING_SAMPLES {
        return Err(FeatureError::InsufficientBeats {
            n: set.len(),
            min: crate::forest::MIN_TRAINING_SAMPLES,
        });
    }
    Ok(set)
}
