//! Missing-lead synthesis from one current lead.
//!
//! Each current RR segment of lead j is matched by DTW to a historic lead-j
//! beat l*. The synchronous historic lead-i beat l* is stretched to the
//! current RR length corrected by the predicted inter-lead lag, scaled by the
//! current/historic lead-j energy ratio, and concatenated.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delineate::{analyze_lead, BeatSegment, DelineateError, LeadAnalysis};
use crate::dtw::{dtw_distance, z_normalize, DtwConfig, DtwError};
use crate::features::{
    lead_features, pair_rpeaks, BeatFeatures, LagSample, TrainingSet, LAG_GATE_MS, PAIRING_TOLERANCE_MS,
};
use crate::forest::{train_forest, ForestConfig, ForestError, LagModel, MIN_TRAINING_SAMPLES};
use crate::lead::LeadId;
use crate::record::{MultiLeadRecord, RecordError};
use crate::scalar::{rms, Real};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("no beats found in the current signal")]
    NoBeatsFound,
    #[error("no lag model for missing lead {missing} given current lead {current}")]
    ModelMissing { missing: LeadId, current: LeadId },
    #[error("historic library has no usable beats for lead {0}")]
    EmptyLibrary(LeadId),
    #[error("lead {0} is not in the historic library")]
    LeadNotInLibrary(LeadId),
    #[error("current signal at {current} Hz does not match the library rate {library} Hz")]
    RateMismatch { current: f64, library: f64 },
    #[error("target length {0} is below 2 samples")]
    DegenerateTarget(usize),
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    #[error("energy scale {0} is not a positive finite number")]
    InvalidScale(f64),
    #[error(transparent)]
    Delineate(#[from] DelineateError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub dtw: DtwConfig,
    /// Beats are decimated to roughly this rate before DTW.
    pub match_rate_hz: f64,
    /// Candidate beats must have an RR length within this relative distance
    /// of the query; all beats are used when none qualifies.
    pub rr_tolerance: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            dtw: DtwConfig::default(),
            match_rate_hz: 100.0,
            rr_tolerance: 0.05,
        }
    }
}

/// Where the cumulative lag starts for the first synthesized beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Mean R offset of lead i relative to lead j over the historic beats.
    #[default]
    HistoricMean,
    /// The R offset at the last historic beat.
    HistoricTrailing,
    /// Lead i's first R-peak coincides with lead j's.
    CurrentR,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub lag_correction: bool,
    /// Bound on the cumulative lag relative to the current R clock.
    pub drift_clamp_ms: f64,
    /// Fraction of the cumulative lag's excursion from the anchor removed
    /// before each beat; 0 gives a plain running sum of Δ̂.
    pub drift_leak: f64,
    pub anchor: Anchor,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            lag_correction: true,
            drift_clamp_ms: 100.0,
            drift_leak: 0.1,
            anchor: Anchor::HistoricMean,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.drift_clamp_ms.is_finite() && self.drift_clamp_ms >= 0.0) {
            return bad("drift_clamp_ms must be a non-negative number");
        }
        if !(0.0..1.0).contains(&self.drift_leak) {
            return bad("drift_leak must lie in [0, 1)");
        }
        Ok(())
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.match_rate_hz.is_finite() && self.match_rate_hz > 0.0) {
            return Err(SynthError::InvalidConfig("match_rate_hz must be positive".into()));
        }
        if !(self.rr_tolerance.is_finite() && self.rr_tolerance >= 0.0) {
            return Err(SynthError::InvalidConfig("rr_tolerance must be non-negative".into()));
        }
        self.dtw.validate().map_err(SynthError::from)
    }
}

/// Decimated, z-normalised copy of a beat for DTW matching.
pub fn match_template<T: Real>(samples: &[T], fs: f64, rate_hz: f64) -> Vec<T> {
    let factor = ((fs / rate_hz).round() as usize).max(1);
    let reduced: Vec<T> = samples
        .chunks(factor)
        .map(|c| c.iter().copied().sum::<T>() / T::from_count(c.len()))
        .collect();
    z_normalize(&reduced)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryBeat<T> {
    pub segment: BeatSegment<T>,
    pub features: Option<BeatFeatures<T>>,
    pub template: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryLead<T> {
    pub lead: LeadId,
    /// Index-aligned across leads: entry l of every lead is the same beat.
    pub beats: Vec<Option<LibraryBeat<T>>>,
}

/// Historic synchronous beats of every lead, plus lag models per lead pair.
#[derive(Debug, Clone)]
pub struct HistoricLibrary<T> {
    pub fs: f64,
    pub source: String,
    pub reference: LeadId,
    pub matching: MatchConfig,
    leads: Vec<LibraryLead<T>>,
    models: BTreeMap<(LeadId, LeadId), LagModel<T>>,
}

impl<T: Real> HistoricLibrary<T> {
    /// Analyses every lead of the first `window_s` seconds of a synchronous
    /// record (already preprocessed) and aligns beats across leads.
    pub fn build(record: &MultiLeadRecord<T>, window_s: f64, matching: &MatchConfig) -> Result<Self, SynthError> {
        matching.validate()?;
        let fs = record.fs();
        let end = ((window_s.min(record.duration())) * fs).round() as usize;
        let leads = record.leads();
        let analyses: Vec<Option<(LeadAnalysis<T>, Vec<Option<BeatFeatures<T>>>)>> = leads
            .par_iter()
            .map(|&l| {
                let sig = &record.lead(l).expect("lead listed by the record")[..end];
                analyze_lead(sig, fs, l).ok().map(|a| {
                    let f = lead_features(sig, &a);
                    (a, f)
                })
            })
            .collect();
        let reference = choose_reference(&leads, &analyses).ok_or(SynthError::NoBeatsFound)?;
        let ref_pos = leads
            .iter()
            .position(|&l| l == reference)
            .expect("reference is a record lead");
        let ref_peaks = analyses[ref_pos]
            .as_ref()
            .map(|(a, _)| a.rpeaks.clone())
            .unwrap_or_default();
        let n_beats = ref_peaks.len().saturating_sub(1);
        let tolerance = (PAIRING_TOLERANCE_MS * fs / 1000.0).round() as usize;

        let lib_leads = leads
            .iter()
            .zip(&analyses)
            .map(|(&lead, an)| {
                let mut beats: Vec<Option<LibraryBeat<T>>> = vec![None; n_beats];
                if let Some((a, feats)) = an {
                    let pairs = pair_rpeaks(&ref_peaks, &a.rpeaks, tolerance);
                    // segment position by opening R index
                    let by_open: BTreeMap<usize, usize> = a
                        .segments
                        .iter()
                        .enumerate()
                        .map(|(pos, s)| (segment_index(s), pos))
                        .collect();
                    for (l, slot) in beats.iter_mut().enumerate() {
                        let (Some(b0), Some(b1)) = (pairs[l], pairs[l + 1]) else {
                            continue;
                        };
                        if b1 != b0 + 1 {
                            continue;
                        }
                        let Some(&pos) = by_open.get(&b0) else {
                            continue;
                        };
                        let Ok(seg) = &a.segments[pos] else { continue };
                        *slot = Some(LibraryBeat {
                            template: match_template(&seg.samples, fs, matching.match_rate_hz),
                            segment: seg.clone(),
                            features: feats[pos],
                        });
                    }
                }
                LibraryLead { lead, beats }
            })
            .collect();
        Ok(Self {
            fs,
            source: record.header().name.clone(),
            reference,
            matching: matching.clone(),
            leads: lib_leads,
            models: BTreeMap::new(),
        })
    }

    pub fn leads(&self) -> Vec<LeadId> {
        self.leads.iter().map(|l| l.lead).collect()
    }

    /// Number of aligned historic beats (κ for the historic session).
    pub fn beat_count(&self) -> usize {
        self.leads.first().map_or(0, |l| l.beats.len())
    }

    pub fn lead(&self, lead: LeadId) -> Option<&LibraryLead<T>> {
        self.leads.iter().find(|l| l.lead == lead)
    }

    fn require(&self, lead: LeadId) -> Result<&LibraryLead<T>, SynthError> {
        self.lead(lead).ok_or(SynthError::LeadNotInLibrary(lead))
    }

    /// Lag training rows for (missing, current) from the aligned beats.
    pub fn training_set(&self, missing: LeadId, current: LeadId) -> Result<TrainingSet<T>, SynthError> {
        let li = self.require(missing)?;
        let lj = self.require(current)?;
        let mut samples = Vec::new();
        let mut outliers = 0;
        for (l, (bi, bj)) in li.beats.iter().zip(&lj.beats).enumerate() {
            let (Some(bi), Some(bj)) = (bi, bj) else {
                continue;
            };
            let Some(f) = bj.features else { continue };
            let lag = bi.segment.delta_ms() - bj.segment.delta_ms();
            if lag.abs() > LAG_GATE_MS {
                outliers += 1;
                continue;
            }
            samples.push(LagSample {
                features: f,
                lag_ms: T::lit(lag),
                beat: l,
            });
        }
        Ok(TrainingSet {
            missing,
            current,
            source: self.source.clone(),
            samples,
            outliers,
        })
    }

    /// R offset (ms) of lead `missing` relative to lead `current` at the last
    /// aligned beat.
    pub fn trailing_offset_ms(&self, missing: LeadId, current: LeadId) -> Option<f64> {
        let li = self.lead(missing)?;
        let lj = self.lead(current)?;
        li.beats.iter().zip(&lj.beats).rev().find_map(|(a, b)| {
            let (a, b) = (a.as_ref()?, b.as_ref()?);
            Some((a.segment.end_sample() as f64 - b.segment.end_sample() as f64) * 1000.0 / self.fs)
        })
    }

    /// Mean R offset (ms) of lead `missing` relative to `current` over all
    /// aligned beats.
    pub fn mean_offset_ms(&self, missing: LeadId, current: LeadId) -> Option<f64> {
        let li = self.lead(missing)?;
        let lj = self.lead(current)?;
        let offs: Vec<f64> = li
            .beats
            .iter()
            .zip(&lj.beats)
            .filter_map(|(a, b)| {
                let (a, b) = (a.as_ref()?, b.as_ref()?);
                Some((a.segment.end_sample() as f64 - b.segment.end_sample() as f64) * 1000.0 / self.fs)
            })
            .collect();
        (!offs.is_empty()).then(|| offs.iter().sum::<f64>() / offs.len() as f64)
    }

    /// Trains lag models for every requested pair; pairs with too little
    /// data are returned as errors alongside the successes.
    pub fn train_models(
        &mut self,
        pairs: &[(LeadId, LeadId)],
        config: &ForestConfig,
    ) -> Vec<((LeadId, LeadId), Result<(), SynthError>)> {
        let trained: Vec<((LeadId, LeadId), Result<LagModel<T>, SynthError>)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let r = self.training_set(i, j).and_then(|set| {
                    if set.len() < MIN_TRAINING_SAMPLES {
                        return Err(SynthError::Forest(ForestError::InsufficientData {
                            n: set.len(),
                            min: MIN_TRAINING_SAMPLES,
                        }));
                    }
                    Ok(train_forest(&set, config)?)
                });
                ((i, j), r)
            })
            .collect();
        trained
            .into_iter()
            .map(|(pair, r)| {
                let r = r.map(|m| {
                    self.models.insert(pair, m);
                });
                (pair, r)
            })
            .collect()
    }

    pub fn insert_model(&mut self, model: LagModel<T>) {
        self.models.insert((model.missing, model.current), model);
    }

    pub fn model(&self, missing: LeadId, current: LeadId) -> Option<&LagModel<T>> {
        self.models.get(&(missing, current))
    }

    pub fn models(&self) -> impl Iterator<Item = &LagModel<T>> {
        self.models.values()
    }
}

fn segment_index<T>(s: &Result<BeatSegment<T>, crate::delineate::ImplausibleBeat>) -> usize {
    match s {
        Ok(seg) => seg.index,
        Err(e) => e.index,
    }
}

type Analysed<T> = Option<(LeadAnalysis<T>, Vec<Option<BeatFeatures<T>>>)>;

/// Lead II when it was analysed, otherwise the lead with the median beat count.
fn choose_reference<T: Real>(leads: &[LeadId], analyses: &[Analysed<T>]) -> Option<LeadId> {
    if let Some(p) = leads.iter().position(|&l| l == LeadId::II) {
        if analyses[p].is_some() {
            return Some(LeadId::II);
        }
    }
    let mut counts: Vec<(usize, LeadId)> = leads
        .iter()
        .zip(analyses)
        .filter_map(|(&l, a)| a.as_ref().map(|(a, _)| (a.rpeaks.len(), l)))
        .collect();
    counts.sort();
    counts.get(counts.len() / 2).map(|&(_, l)| l)
}

/// Index of the historic lead-j beat nearest to `query` by DTW on
/// match templates, restricted by RR length when possible.
pub fn match_historic_beat<T: Real>(
    query: &BeatSegment<T>,
    library: &HistoricLibrary<T>,
    current: LeadId,
) -> Result<(usize, T), SynthError> {
    let costs = match_costs(query, library, current)?;
    let lj = library.require(current)?;
    best_candidate(&costs, lj, lj, query.delta_ms(), library.matching.rr_tolerance)
        .ok_or(SynthError::EmptyLibrary(current))
}

/// DTW cost from `query` to every historic beat of `current` (`None` where
/// the library has no beat).
fn match_costs<T: Real>(
    query: &BeatSegment<T>,
    library: &HistoricLibrary<T>,
    current: LeadId,
) -> Result<Vec<Option<T>>, SynthError> {
    let lj = library.require(current)?;
    if lj.beats.iter().all(Option::is_none) {
        return Err(SynthError::EmptyLibrary(current));
    }
    let q = match_template(&query.samples, library.fs, library.matching.match_rate_hz);
    lj.beats
        .iter()
        .map(|b| {
            b.as_ref()
                .map(|b| dtw_distance(&q, &b.template, &library.matching.dtw))
                .transpose()
                .map_err(SynthError::from)
        })
        .collect()
}

/// Lowest-cost beat present in both `source` (lead i) and `matched` (lead j),
/// among those within the RR tolerance if any are.
fn best_candidate<T: Real>(
    costs: &[Option<T>],
    source: &LibraryLead<T>,
    matched: &LibraryLead<T>,
    delta_ms: f64,
    rr_tolerance: f64,
) -> Option<(usize, T)> {
    let usable = |l: usize| source.beats[l].is_some() && costs[l].is_some();
    let rr_ok = |l: usize| {
        matched.beats[l]
            .as_ref()
            .is_some_and(|b| (b.segment.delta_ms() - delta_ms).abs() <= rr_tolerance * delta_ms)
    };
    let pick = |filter: &dyn Fn(usize) -> bool| {
        (0..costs.len())
            .filter(|&l| usable(l) && filter(l))
            .fold(None, |best: Option<(usize, T)>, l| {
                let c = costs[l].expect("usable implies cost");
                match best {
                    Some((_, bc)) if bc <= c => best,
                    _ => Some((l, c)),
                }
            })
    };
    pick(&rr_ok).or_else(|| pick(&|_| true))
}

/// Historic beat whose lead-j RR length is closest to `delta_ms`.
fn nearest_by_rr<T: Real>(source: &LibraryLead<T>, matched: &LibraryLead<T>, delta_ms: f64) -> Option<usize> {
    (0..source.beats.len())
        .filter(|&l| source.beats[l].is_some())
        .filter_map(|l| {
            let d = matched.beats[l]
                .as_ref()
                .map_or(&source.beats[l].as_ref()?.segment, |b| &b.segment)
                .delta_ms();
            Some((l, (d - delta_ms).abs()))
        })
        .fold(None, |best: Option<(usize, f64)>, (l, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((l, d)),
        })
        .map(|(l, _)| l)
}

/// Monotone cubic (Fritsch-Carlson) resampling of `x` to `len` samples with
/// the end points kept.
pub fn monotone_resample<T: Real>(x: &[T], len: usize) -> Vec<T> {
    let m = x.len();
    if m == 0 || len == 0 {
        return Vec::new();
    }
    if m == 1 || len == 1 {
        return vec![x[0]; len];
    }
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let d: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut slope = vec![T::zero(); m];
    slope[0] = d[0];
    slope[m - 1] = d[m - 2];
    for k in 1..m - 1 {
        slope[k] = if d[k - 1] * d[k] <= T::zero() {
            T::zero()
        } else {
            // harmonic mean keeps the interpolant monotone on each interval
            two * d[k - 1] * d[k] / (d[k - 1] + d[k])
        };
    }
    for k in 0..m - 1 {
        if d[k] == T::zero() {
            slope[k] = T::zero();
            slope[k + 1] = T::zero();
        } else {
            let a = slope[k] / d[k];
            let b = slope[k + 1] / d[k];
            let s = a * a + b * b;
            if s > T::lit(9.0) {
                let t = three / s.sqrt();
                slope[k] = t * a * d[k];
                slope[k + 1] = t * b * d[k];
            }
        }
    }
    let step = (m - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|t| {
            let p = if t == len - 1 { (m - 1) as f64 } else { t as f64 * step };
            let i = (p.floor() as usize).min(m - 2);
            let s = T::lit(p - i as f64);
            if s == T::zero() {
                return x[i];
            }
            let s2 = s * s;
            let s3 = s2 * s;
            let h00 = two * s3 - three * s2 + T::one();
            let h10 = s3 - two * s2 + s;
            let h01 = three * s2 - two * s3;
            let h11 = s3 - s2;
            h00 * x[i] + h10 * slope[i] + h01 * x[i + 1] + h11 * slope[i + 1]
        })
        .collect()
}

/// Stretches a beat to `target_len` samples and multiplies by `scale`.
pub fn affine_transform_beat<T: Real>(source: &[T], target_len: usize, scale: T) -> Result<Vec<T>, SynthError> {
    if target_len < 2 {
        return Err(SynthError::DegenerateTarget(target_len));
    }
    if !(scale.is_finite() && scale > T::zero()) {
        return Err(SynthError::InvalidScale(scale.as_f64()));
    }
    if source.len() < 2 {
        return Err(SynthError::DegenerateTarget(source.len()));
    }
    let stretched = if target_len == source.len() {
        source.to_vec()
    } else {
        monotone_resample(source, target_len)
    };
    Ok(if scale == T::one() {
        stretched
    } else {
        stretched.into_iter().map(|v| v * scale).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatFlag {
    /// Current-beat features could not be extracted; Δ̂ = 0, matched by RR.
    FeaturesUnavailable,
    /// No model for the pair; Δ̂ = 0.
    ModelMissing,
    /// Lag correction disabled by configuration.
    LagDisabled,
    /// The current segment failed the RR plausibility gate.
    ImplausibleBeat,
    /// The cumulative drift clamp bound this beat.
    Clamped,
}

/// Per-beat synthesis record, exported as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatProvenance {
    pub missing: LeadId,
    pub current: LeadId,
    /// Index of the current segment (its opening R-peak).
    pub beat: usize,
    pub source_beat: Option<usize>,
    pub dtw_cost: Option<f64>,
    pub delta_current_ms: f64,
    /// Predicted lag Δ̂.
    pub lag_ms: f64,
    /// Lag actually applied after drift leak and clamp.
    pub applied_ms: f64,
    /// Realised synthesized RR length.
    pub delta_synth_ms: f64,
    pub energy_scale: f64,
    /// Cumulative lag after this beat.
    pub cumulative_ms: f64,
    pub flags: Vec<BeatFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedLead<T> {
    pub lead: LeadId,
    pub fs: f64,
    /// Same length as the current signal, on its clock.
    pub samples: Vec<T>,
    /// Sample index of the first synthesized R-peak.
    pub first_r: isize,
    pub beats: Vec<BeatProvenance>,
}

impl<T: Real> SynthesizedLead<T> {
    pub fn clamp_events(&self) -> usize {
        self.beats
            .iter()
            .filter(|b| b.flags.contains(&BeatFlag::Clamped))
            .count()
    }

    pub fn write_provenance<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for b in &self.beats {
            serde_json::to_writer(&mut w, b)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The analysed current lead, shared by all missing-lead syntheses.
#[derive(Debug, Clone)]
pub struct CurrentLead<'a, T> {
    pub lead: LeadId,
    pub signal: &'a [T],
    pub analysis: LeadAnalysis<T>,
    features: Vec<Option<BeatFeatures<T>>>,
    /// DTW costs per current segment against every historic lead-j beat.
    costs: Vec<Vec<Option<T>>>,
}

impl<'a, T: Real> CurrentLead<'a, T> {
    pub fn prepare(signal: &'a [T], lead: LeadId, library: &HistoricLibrary<T>) -> Result<Self, SynthError> {
        if signal.is_empty() {
            return Err(SynthError::NoBeatsFound);
        }
        let analysis = analyze_lead(signal, library.fs, lead).map_err(|e| match e {
            DelineateError::NoBeatsFound | DelineateError::SignalTooShort { .. } => SynthError::NoBeatsFound,
            other => other.into(),
        })?;
        let features = lead_features(signal, &analysis);
        let lj = library.require(lead)?;
        if lj.beats.iter().all(Option::is_none) {
            return Err(SynthError::EmptyLibrary(lead));
        }
        let costs = analysis
            .segments
            .par_iter()
            .map(|s| match s {
                Ok(seg) => match_costs(seg, library, lead),
                Err(_) => Ok(vec![None; lj.beats.len()]),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            lead,
            signal,
            analysis,
            features,
            costs,
        })
    }

    /// (start sample, end sample, RR ms) of every current segment.
    fn spans(&self) -> Vec<(usize, usize, f64)> {
        let fs = self.analysis.fs;
        self.analysis
            .segments
            .iter()
            .map(|s| match s {
                Ok(seg) => (seg.start_sample, seg.end_sample(), seg.delta_ms()),
                Err(e) => {
                    let end = e.start_sample + (e.delta_s * fs).round() as usize;
                    (e.start_sample, end, e.delta_s * 1000.0)
                }
            })
            .collect()
    }
}

/// Per-beat decisions before placement.
struct BeatPlan<T> {
    source: usize,
    cost: Option<T>,
    lag_ms: f64,
    scale: T,
    flags: Vec<BeatFlag>,
}

fn plan_beat<T: Real>(
    current: &CurrentLead<'_, T>,
    pos: usize,
    missing: LeadId,
    library: &HistoricLibrary<T>,
    config: &SynthesisConfig,
) -> Result<BeatPlan<T>, SynthError> {
    let li = library.require(missing)?;
    let lj = library.require(current.lead)?;
    let mut flags = Vec::new();
    let delta_ms = current.spans()[pos].2;
    let seg = current.analysis.segments[pos].as_ref().ok();
    if seg.is_none() {
        flags.push(BeatFlag::ImplausibleBeat);
    }
    let feats = current.features[pos];

    let (source, cost) = match (seg, feats) {
        (Some(_), Some(_)) => best_candidate(&current.costs[pos], li, lj, delta_ms, library.matching.rr_tolerance)
            .map(|(l, c)| (l, Some(c)))
            .ok_or(SynthError::EmptyLibrary(missing))?,
        _ => {
            if seg.is_some() {
                flags.push(BeatFlag::FeaturesUnavailable);
            }
            (
                nearest_by_rr(li, lj, delta_ms).ok_or(SynthError::EmptyLibrary(missing))?,
                None,
            )
        }
    };

    let lag_ms = if !config.lag_correction {
        flags.push(BeatFlag::LagDisabled);
        0.0
    } else if missing == current.lead {
        0.0
    } else {
        match (library.model(missing, current.lead), feats) {
            (None, _) => {
                flags.push(BeatFlag::ModelMissing);
                0.0
            }
            (Some(_), None) => 0.0,
            (Some(m), Some(f)) => m.predict(f.as_slice())?.as_f64(),
        }
    };

    let scale = match (seg, lj.beats[source].as_ref()) {
        (Some(seg), Some(hist)) => {
            let num = rms(&seg.samples);
            let den = rms(&hist.segment.samples);
            let s = num / den;
            if den > T::epsilon() && s.is_finite() && s > T::zero() {
                s
            } else {
                T::one()
            }
        }
        _ => T::one(),
    };
    Ok(BeatPlan {
        source,
        cost,
        lag_ms,
        scale,
        flags,
    })
}

/// Synthesizes a single beat of `missing` for current segment `pos`, with
/// length round((δ_j + Δ̂)·fs) + 1 samples.
pub fn synthesize_beat<T: Real>(
    current: &CurrentLead<'_, T>,
    pos: usize,
    missing: LeadId,
    library: &HistoricLibrary<T>,
    config: &SynthesisConfig,
) -> Result<(Vec<T>, BeatProvenance), SynthError> {
    if missing != current.lead && config.lag_correction && library.model(missing, current.lead).is_none() {
        return Err(SynthError::ModelMissing {
            missing,
            current: current.lead,
        });
    }
    let plan = plan_beat(current, pos, missing, library, config)?;
    let fs = library.fs;
    let (_, _, delta_ms) = current.spans()[pos];
    let target = ((delta_ms + plan.lag_ms) * fs / 1000.0).round() as usize + 1;
    let src = &library.require(missing)?.beats[plan.source]
        .as_ref()
        .expect("planned source exists")
        .segment;
    let beat = affine_transform_beat(&src.samples, target, plan.scale)?;
    let prov = BeatProvenance {
        missing,
        current: current.lead,
        beat: pos,
        source_beat: Some(plan.source),
        dtw_cost: plan.cost.map(Real::as_f64),
        delta_current_ms: delta_ms,
        lag_ms: plan.lag_ms,
        applied_ms: plan.lag_ms,
        delta_synth_ms: (target - 1) as f64 * 1000.0 / fs,
        energy_scale: plan.scale.as_f64(),
        cumulative_ms: plan.lag_ms,
        flags: plan.flags,
    };
    Ok((beat, prov))
}

fn write_clipped<T: Real>(out: &mut [T], start: isize, values: &[T]) {
    for (k, &v) in values.iter().enumerate() {
        let p = start + k as isize;
        if p >= 0 && (p as usize) < out.len() {
            out[p as usize] = v;
        }
    }
}

/// Synthesizes lead `missing` over the whole current signal.
pub fn synthesize_lead<T: Real>(
    current: &CurrentLead<'_, T>,
    missing: LeadId,
    library: &HistoricLibrary<T>,
    config: &SynthesisConfig,
) -> Result<SynthesizedLead<T>, SynthError> {
    let fs = library.fs;
    let n = current.signal.len();
    let li = library.require(missing)?;
    let spans = current.spans();
    if spans.is_empty() {
        return Err(SynthError::NoBeatsFound);
    }
    let per_ms = fs / 1000.0;
    let clamp = config.drift_clamp_ms.abs();
    let anchor = match config.anchor {
        _ if missing == current.lead => 0.0,
        Anchor::HistoricMean => library.mean_offset_ms(missing, current.lead).unwrap_or(0.0),
        Anchor::HistoricTrailing => library.trailing_offset_ms(missing, current.lead).unwrap_or(0.0),
        Anchor::CurrentR => 0.0,
    };
    let mut cum = anchor.clamp(-clamp, clamp);

    let plans: Vec<BeatPlan<T>> = (0..spans.len())
        .map(|pos| plan_beat(current, pos, missing, library, config))
        .collect::<Result<_, _>>()?;

    let mut out = vec![T::zero(); n];
    let first_r = spans[0].0 as isize + (cum * per_ms).round() as isize;
    let mut start = first_r;
    let mut beats = Vec::with_capacity(spans.len());
    for (pos, ((_, end, delta_ms), mut plan)) in spans.iter().copied().zip(plans).enumerate() {
        let wanted = anchor + (1.0 - config.drift_leak) * (cum - anchor) + plan.lag_ms;
        let bounded = wanted.clamp(-clamp, clamp);
        if bounded != wanted {
            plan.flags.push(BeatFlag::Clamped);
        }
        let applied = bounded - cum;
        cum = bounded;
        let stop = (end as isize + (cum * per_ms).round() as isize).max(start + 1);
        let len = (stop - start + 1) as usize;
        let src = &li.beats[plan.source].as_ref().expect("planned source exists").segment;
        let beat = affine_transform_beat(&src.samples, len, plan.scale)?;
        write_clipped(&mut out, start, &beat);
        beats.push(BeatProvenance {
            missing,
            current: current.lead,
            beat: pos,
            source_beat: Some(plan.source),
            dtw_cost: plan.cost.map(Real::as_f64),
            delta_current_ms: delta_ms,
            lag_ms: plan.lag_ms,
            applied_ms: applied,
            delta_synth_ms: (len - 1) as f64 / per_ms,
            energy_scale: plan.scale.as_f64(),
            cumulative_ms: cum,
            flags: plan.flags,
        });
        start = stop;
    }

    // Flanks before the first and after the last synthesized R-peak come
    // from the historic neighbours of the first and last matched beats.
    let first = beats.first().and_then(|b| b.source_beat).unwrap_or(0);
    let last = beats.last().and_then(|b| b.source_beat).unwrap_or(0);
    let first_scale = T::lit(beats.first().map_or(1.0, |b| b.energy_scale));
    let last_scale = T::lit(beats.last().map_or(1.0, |b| b.energy_scale));
    let neighbour = |l: usize, before: bool| {
        let cand = if before { l.checked_sub(1) } else { Some(l + 1) };
        cand.and_then(|c| li.beats.get(c).and_then(Option::as_ref))
            .or_else(|| li.beats.get(l).and_then(Option::as_ref))
            .map(|b| &b.segment)
    };
    if first_r > 0 {
        if let Some(seg) = neighbour(first, true) {
            let len = ((spans[0].2 * per_ms).round() as usize + 1).max(first_r as usize + 1);
            let flank = affine_transform_beat(&seg.samples, len.max(2), first_scale)?;
            let take = first_r as usize;
            write_clipped(&mut out, 0, &flank[flank.len() - 1 - take..flank.len() - 1]);
        }
    }
    let end_pos = start;
    if end_pos + 1 < n as isize {
        if let Some(seg) = neighbour(last, false) {
            let remaining = (n as isize - end_pos - 1) as usize;
            let last_rr = spans.last().map_or(0.0, |s| s.2);
            let len = ((last_rr * per_ms).round() as usize + 1).max(remaining + 1);
            let flank = affine_transform_beat(&seg.samples, len.max(2), last_scale)?;
            write_clipped(&mut out, end_pos + 1, &flank[1..=remaining]);
        }
    }

    Ok(SynthesizedLead {
        lead: missing,
        fs,
        samples: out,
        first_r,
        beats,
    })
}

/// All 12 standard leads on the current lead's clock.
#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub current: LeadId,
    pub fs: f64,
    /// The current lead exactly as supplied.
    pub passthrough: Vec<T>,
    pub synthesized: Vec<SynthesizedLead<T>>,
}

impl<T: Real> Reconstruction<T> {
    pub fn lead(&self, lead: LeadId) -> Option<&[T]> {
        if lead == self.current {
            return Some(&self.passthrough);
        }
        self.synthesized
            .iter()
            .find(|s| s.lead == lead)
            .map(|s| s.samples.as_slice())
    }

    /// Standard-order 12-lead record (leads absent from the library are omitted).
    pub fn to_record(&self, name: &str, start_time: f64) -> Result<MultiLeadRecord<T>, SynthError> {
        let leads = LeadId::STANDARD
            .iter()
            .filter_map(|&l| self.lead(l).map(|s| (l, s.to_vec())))
            .collect();
        Ok(MultiLeadRecord::from_leads(name, self.fs, leads, start_time)?)
    }

    pub fn provenance(&self) -> impl Iterator<Item = &BeatProvenance> {
        self.synthesized.iter().flat_map(|s| s.beats.iter())
    }
}

/// Synthesizes every other standard lead in the library from `signal`.
pub fn synthesize_all<T: Real>(
    signal: &[T],
    current: LeadId,
    library: &HistoricLibrary<T>,
    config: &SynthesisConfig,
) -> Result<Reconstruction<T>, SynthError> {
    let prepared = CurrentLead::prepare(signal, current, library)?;
    synthesize_prepared(&prepared, library, config)
}

pub fn synthesize_prepared<T: Real>(
    prepared: &CurrentLead<'_, T>,
    library: &HistoricLibrary<T>,
    config: &SynthesisConfig,
) -> Result<Reconstruction<T>, SynthError> {
    let current = prepared.lead;
    let targets: Vec<LeadId> = library
        .leads()
        .into_iter()
        .filter(|&l| l != current && l.standard_index().is_some())
        .collect();
    let synthesized = targets
        .par_iter()
        .map(|&i| synthesize_lead(prepared, i, library, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Reconstruction {
        current,
        fs: library.fs,
        passthrough: prepared.signal.to_vec(),
        synthesized,
    })
}

/// Every (missing, current) pair among the library's standard leads.
pub fn all_pairs(leads: &[LeadId]) -> Vec<(LeadId, LeadId)> {
    let std: Vec<LeadId> = leads.iter().copied().filter(|l| l.standard_index().is_some()).collect();
    std.iter()
        .flat_map(|&j| std.iter().filter(move |&&i| i != j).map(move |&i| (i, j)))
        .collect()
}

/// Check that a rate matches the library.
pub fn check_rate<T: Real>(fs: f64, library: &HistoricLibrary<T>) -> Result<(), SynthError> {
    if (fs - library.fs).abs() > 1e-9 {
        return Err(SynthError::RateMismatch {
            current: fs,
            library: library.fs,
        });
    }
    Ok(())
}
