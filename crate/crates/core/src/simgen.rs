//! Gaussian-wave multi-lead ECG simulator with exact ground truth, and the
//! handheld sequential-recording session simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::delineate::RR_GATE_S;
use crate::lead::LeadId;
use crate::record::{slice_record, MultiLeadRecord, RecordError};
use crate::scalar::Real;
use crate::vcg::project_dipole;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("session schedule is invalid: {0}")]
    ScheduleOutOfRange(String),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// One Gaussian component: amplitude (mV), center offset from R (ms), width σ (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude_mv: f64,
    pub center_ms: f64,
    pub width_ms: f64,
}

impl Wave {
    pub const fn new(amplitude_mv: f64, center_ms: f64, width_ms: f64) -> Self {
        Self {
            amplitude_mv,
            center_ms,
            width_ms,
        }
    }
}

pub const WAVE_NAMES: [&str; 5] = ["P", "Q", "R", "S", "T"];

/// P, Q, R, S, T components of one lead's beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatTemplate {
    pub waves: [Wave; 5],
}

impl BeatTemplate {
    pub fn negated(mut self) -> Self {
        for w in &mut self.waves {
            w.amplitude_mv = -w.amplitude_mv;
        }
        self
    }

    pub fn with_wave(mut self, k: usize, w: Wave) -> Self {
        self.waves[k] = w;
        self
    }
}

/// A wave expressed as a cardiac dipole (X, Y, Z in mV).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleWave {
    pub vector: [f64; 3],
    pub center_ms: f64,
    pub width_ms: f64,
}

pub const DEFAULT_DIPOLES: [DipoleWave; 5] = [
    DipoleWave {
        vector: [0.14, 0.16, -0.10],
        center_ms: -190.0,
        width_ms: 22.0,
    },
    DipoleWave {
        vector: [-0.10, 0.05, -0.15],
        center_ms: -32.0,
        width_ms: 8.0,
    },
    DipoleWave {
        vector: [1.1, 0.6, 0.35],
        center_ms: 0.0,
        width_ms: 10.0,
    },
    DipoleWave {
        vector: [-0.30, -0.25, 0.35],
        center_ms: 32.0,
        width_ms: 9.0,
    },
    DipoleWave {
        vector: [0.35, 0.30, -0.30],
        center_ms: 260.0,
        width_ms: 45.0,
    },
];

/// Standard-lead templates for a set of dipole waves; Frank leads are the
/// dipole components themselves when `frank` is set.
pub fn templates_from_dipoles(dipoles: &[DipoleWave; 5], frank: bool) -> Vec<(LeadId, BeatTemplate)> {
    let projected: Vec<[(LeadId, f64); 12]> = dipoles.iter().map(|d| project_dipole(d.vector)).collect();
    let mut out: Vec<(LeadId, BeatTemplate)> = LeadId::STANDARD
        .iter()
        .enumerate()
        .map(|(k, &lead)| {
            let waves =
                std::array::from_fn(|w| Wave::new(projected[w][k].1, dipoles[w].center_ms, dipoles[w].width_ms));
            (lead, BeatTemplate { waves })
        })
        .collect();
    if frank {
        for (axis, &lead) in LeadId::FRANK.iter().enumerate() {
            let waves =
                std::array::from_fn(|w| Wave::new(dipoles[w].vector[axis], dipoles[w].center_ms, dipoles[w].width_ms));
            out.push((lead, BeatTemplate { waves }));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrSchedule {
    pub mean_ms: f64,
    /// Amplitude of a slow sinusoidal rate modulation.
    pub variability_ms: f64,
    pub period_beats: f64,
    /// Scale of a telescoping jitter term; cumulative timing stays bounded.
    pub jitter_ms: f64,
}

impl Default for RrSchedule {
    fn default() -> Self {
        Self {
            mean_ms: 800.0,
            variability_ms: 60.0,
            period_beats: 12.0,
            jitter_ms: 15.0,
        }
    }
}

/// Per-beat time shift of a lead relative to the reference lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagFunction {
    Constant {
        ms: f64,
    },
    /// The shift accumulates so that the per-beat RR-length difference is
    /// exactly `intercept_ms + slope * (rr - rr_ref_ms)`.
    LinearInRr {
        slope: f64,
        rr_ref_ms: f64,
        intercept_ms: f64,
        initial_ms: f64,
    },
    Sinusoidal {
        amplitude_ms: f64,
        period_beats: f64,
        phase_rad: f64,
    },
}

impl LagFunction {
    /// Shift for each beat given the RR schedule (rr[k] precedes beat k).
    pub fn shifts(&self, rr_ms: &[f64]) -> Vec<f64> {
        let n = rr_ms.len();
        match *self {
            LagFunction::Constant { ms } => vec![ms; n],
            LagFunction::LinearInRr {
                slope,
                rr_ref_ms,
                intercept_ms,
                initial_ms,
            } => {
                let mut s = Vec::with_capacity(n);
                let mut acc = initial_ms;
                for (k, &rr) in rr_ms.iter().enumerate() {
                    if k > 0 {
                        acc += intercept_ms + slope * (rr - rr_ref_ms);
                    }
                    s.push(acc);
                }
                s
            }
            LagFunction::Sinusoidal {
                amplitude_ms,
                period_beats,
                phase_rad,
            } => (0..n)
                .map(|k| amplitude_ms * (std::f64::consts::TAU * k as f64 / period_beats + phase_rad).sin())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplitudeModulation {
    /// Relative depth; beat k is scaled by 1 + depth·sin(2πk/period).
    pub depth: f64,
    pub period_beats: f64,
}

impl Default for AmplitudeModulation {
    fn default() -> Self {
        Self {
            depth: 0.0,
            period_beats: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    /// Time of the first reference R-peak.
    pub first_beat_s: f64,
    pub leads: Vec<(LeadId, BeatTemplate)>,
    pub reference_lead: LeadId,
    pub rr: RrSchedule,
    pub lags: Vec<(LeadId, LagFunction)>,
    pub amplitude_modulation: AmplitudeModulation,
    /// T-wave alternans: T amplitude × (1 ± twa) on even/odd beats.
    pub twa: f64,
    pub snr_db: Option<f64>,
    pub drift_mv: f64,
    pub drift_hz: f64,
    pub powerline_mv: f64,
    pub powerline_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fs: 500.0,
            duration_s: 120.0,
            first_beat_s: 0.5,
            leads: templates_from_dipoles(&DEFAULT_DIPOLES, false),
            reference_lead: LeadId::II,
            rr: RrSchedule::default(),
            lags: Vec::new(),
            amplitude_modulation: AmplitudeModulation::default(),
            twa: 0.0,
            snr_db: None,
            drift_mv: 0.0,
            drift_hz: 0.3,
            powerline_mv: 0.0,
            powerline_hz: 60.0,
        }
    }
}

/// Largest allowed magnitude of any lead's time shift.
pub const MAX_SHIFT_MS: f64 = 100.0;

impl SynthConfig {
    /// Single-lead configuration with the given template.
    pub fn single_lead(lead: LeadId, template: BeatTemplate) -> Self {
        Self {
            leads: vec![(lead, template)],
            reference_lead: lead,
            ..Self::default()
        }
    }

    /// Linear-in-RR lags of varying slope on every non-reference lead, with
    /// mild amplitude modulation.
    pub fn linear_lag_fixture(fs: f64, duration_s: f64) -> Self {
        let mut cfg = Self {
            fs,
            duration_s,
            amplitude_modulation: AmplitudeModulation {
                depth: 0.1,
                period_beats: 7.0,
            },
            ..Self::default()
        };
        cfg.lags = cfg
            .leads
            .iter()
            .filter(|(l, _)| *l != cfg.reference_lead)
            .enumerate()
            .map(|(k, (l, _))| {
                let slope = [0.1, -0.08, 0.06, -0.12, 0.09, -0.05][k % 6];
                (
                    *l,
                    LagFunction::LinearInRr {
                        slope,
                        rr_ref_ms: cfg.rr.mean_ms,
                        intercept_ms: 0.0,
                        initial_ms: 8.0 * ((k % 5) as f64 - 2.0),
                    },
                )
            })
            .collect();
        cfg
    }

    /// T-wave alternans fixture: ±20% alternation and a faster, more
    /// variable rhythm.
    pub fn twa_fixture(fs: f64, duration_s: f64) -> Self {
        let mut cfg = Self::linear_lag_fixture(fs, duration_s);
        cfg.twa = 0.2;
        cfg.rr = RrSchedule {
            mean_ms: 700.0,
            variability_ms: 80.0,
            period_beats: 9.0,
            jitter_ms: 20.0,
        };
        for (_, lag) in &mut cfg.lags {
            if let LagFunction::LinearInRr { rr_ref_ms, .. } = lag {
                *rr_ref_ms = 700.0;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) {
            return bad("fs and duration must be positive".into());
        }
        if self.leads.is_empty() {
            return bad("no leads configured".into());
        }
        if !self.leads.iter().any(|(l, _)| *l == self.reference_lead) {
            return bad(format!("reference lead {} is not configured", self.reference_lead));
        }
        for (lead, t) in &self.leads {
            if t.waves
                .iter()
                .any(|w| !(w.width_ms > 0.0) || !w.amplitude_mv.is_finite())
            {
                return bad(format!("lead {lead}: wave widths must be positive"));
            }
        }
        let r = &self.rr;
        let (lo, hi) = (1000.0 * RR_GATE_S.0, 1000.0 * RR_GATE_S.1);
        let worst_low = r.mean_ms - r.variability_ms.abs() - 2.0 * r.jitter_ms.abs();
        let worst_high = r.mean_ms + r.variability_ms.abs() + 2.0 * r.jitter_ms.abs();
        if worst_low < lo || worst_high > hi || r.period_beats <= 0.0 {
            return bad(format!("RR schedule leaves the plausible range [{lo}, {hi}] ms"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad("SNR must be finite".into());
            }
        }
        if self.amplitude_modulation.depth.abs() >= 1.0 || self.twa.abs() >= 1.0 {
            return bad("modulation depths must be below 1".into());
        }
        Ok(())
    }
}

/// Reference R times (s) and preceding RR lengths (ms).
fn beat_schedule(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let r = &cfg.rr;
    let mut times = Vec::new();
    let mut rrs = Vec::new();
    let mut t = cfg.first_beat_s;
    let mut u_prev: f64 = rng.random_range(-1.0..1.0) * r.jitter_ms;
    let mut k = 0usize;
    // one beat beyond the end so the final partial beat is rendered
    while t < cfg.duration_s + 1.0 {
        let rr = if k == 0 {
            r.mean_ms
        } else {
            let u: f64 = rng.random_range(-1.0..1.0) * r.jitter_ms;
            let v =
                r.mean_ms + r.variability_ms * (std::f64::consts::TAU * k as f64 / r.period_beats).sin() + (u - u_prev);
            u_prev = u;
            v
        };
        if k > 0 {
            t += rr / 1000.0;
        }
        times.push(t);
        rrs.push(rr);
        k += 1;
    }
    (times, rrs)
}

/// Landmark times (s) of one beat of one lead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkTimes {
    pub pon: Option<f64>,
    pub ppeak: Option<f64>,
    pub poff: Option<f64>,
    pub qpeak: Option<f64>,
    pub rpeak: f64,
    pub speak: Option<f64>,
    pub ton: Option<f64>,
    pub tpeak: Option<f64>,
    pub toff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTruth {
    pub lead: LeadId,
    /// Per-beat time shift relative to the reference lead (ms).
    pub shifts_ms: Vec<f64>,
    /// Per-beat R time (s): reference time plus shift.
    pub r_times_s: Vec<f64>,
    pub landmarks: Vec<LandmarkTimes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fs: f64,
    pub reference_lead: LeadId,
    /// Reference R times (s), including one beat past the record end.
    pub beat_times_s: Vec<f64>,
    /// RR length preceding each beat (ms); the first entry is the mean.
    pub rr_ms: Vec<f64>,
    pub amplitude_scales: Vec<f64>,
    pub t_scales: Vec<f64>,
    pub leads: Vec<LeadTruth>,
}

impl GroundTruth {
    pub fn lead(&self, lead: LeadId) -> Option<&LeadTruth> {
        self.leads.iter().find(|l| l.lead == lead)
    }

    /// Per-beat RR-length difference δ_missing − δ_current (ms), for beats
    /// whose both boundaries lie within the record.
    pub fn lag_ms(&self, missing: LeadId, current: LeadId, k: usize) -> Option<f64> {
        let a = self.lead(missing)?;
        let b = self.lead(current)?;
        if k == 0 || k >= a.r_times_s.len() {
            return None;
        }
        let da = a.r_times_s[k] - a.r_times_s[k - 1];
        let db = b.r_times_s[k] - b.r_times_s[k - 1];
        Some(1000.0 * (da - db))
    }
}

/// Simulated recording: the delivered record, its artifact-free version and
/// the ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic<T> {
    pub record: MultiLeadRecord<T>,
    pub clean: MultiLeadRecord<T>,
    pub truth: GroundTruth,
}

fn gaussian_into(buf: &mut [f64], fs: f64, amp: f64, center_s: f64, sigma_s: f64) {
    if amp == 0.0 {
        return;
    }
    let lo = ((center_s - 5.0 * sigma_s) * fs).floor().max(0.0) as usize;
    let hi = (((center_s + 5.0 * sigma_s) * fs).ceil().max(0.0) as usize).min(buf.len());
    for (i, v) in buf.iter_mut().enumerate().take(hi).skip(lo) {
        let d = (i as f64 / fs - center_s) / sigma_s;
        *v += amp * (-0.5 * d * d).exp();
    }
}

/// Extremum of the clean signal nearest to a wave center, in the wave's
/// direction; `None` if the wave has no interior extremum there.
fn local_extremum(x: &[f64], fs: f64, center_s: f64, sigma_s: f64, sign: f64) -> Option<f64> {
    let c = (center_s * fs).round() as isize;
    let half = ((sigma_s * fs).round() as isize).max(2);
    let lo = (c - half).max(1);
    let hi = (c + half).min(x.len() as isize - 2);
    if lo > hi {
        return None;
    }
    let best = (lo..=hi).max_by(|&a, &b| (sign * x[a as usize]).total_cmp(&(sign * x[b as usize])))?;
    let b = best as usize;
    let ok = sign * (x[b] - x[b - 1]) > 0.0 && sign * (x[b] - x[b + 1]) >= 0.0
        || sign * (x[b] - x[b - 1]) >= 0.0 && sign * (x[b] - x[b + 1]) > 0.0;
    (ok && best != lo && best != hi).then(|| b as f64 / fs)
}

/// Boundary offset of a Gaussian wave, in widths, used for ground-truth
/// onsets and offsets.
pub const BOUNDARY_WIDTHS: f64 = 2.5;

pub fn generate_synthetic_record<T: Real>(
    config: &SynthConfig,
    seed: u64,
) -> Result<(MultiLeadRecord<T>, GroundTruth), SimError> {
    let s = generate(config, seed)?;
    Ok((s.record, s.truth))
}

/// Renders the configured leads. Noise, drift and mains interference are
/// applied only to `record`; `clean` omits them.
pub fn generate<T: Real>(config: &SynthConfig, seed: u64) -> Result<Synthetic<T>, SimError> {
    config.validate()?;
    let fs = config.fs;
    let n = (config.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (times, rrs) = beat_schedule(config, &mut rng);
    let nb = times.len();
    let am = &config.amplitude_modulation;
    let scales: Vec<f64> = (0..nb)
        .map(|k| 1.0 + am.depth * (std::f64::consts::TAU * k as f64 / am.period_beats).sin())
        .collect();
    let t_scales: Vec<f64> = (0..nb)
        .map(|k| if k % 2 == 0 { 1.0 + config.twa } else { 1.0 - config.twa })
        .collect();

    let mut clean_leads = Vec::with_capacity(config.leads.len());
    let mut truths = Vec::with_capacity(config.leads.len());
    for (lead, template) in &config.leads {
        let shifts = match config.lags.iter().find(|(l, _)| l == lead) {
            Some((_, f)) if *lead != config.reference_lead => f.shifts(&rrs),
            _ => vec![0.0; nb],
        };
        if let Some(m) = shifts.iter().find(|s| s.abs() > MAX_SHIFT_MS) {
            return Err(SimError::InvalidConfig(format!("lag of lead {lead} reaches {m:.1} ms")));
        }
        let mut x = vec![0.0f64; n];
        for k in 0..nb {
            let r = times[k] + shifts[k] / 1000.0;
            for (w, wave) in template.waves.iter().enumerate() {
                let amp = wave.amplitude_mv * scales[k] * if w == 4 { t_scales[k] } else { 1.0 };
                gaussian_into(&mut x, fs, amp, r + wave.center_ms / 1000.0, wave.width_ms / 1000.0);
            }
        }
        let r_times: Vec<f64> = (0..nb).map(|k| times[k] + shifts[k] / 1000.0).collect();
        let landmarks = r_times
            .iter()
            .map(|&r| {
                let wave_at = |w: usize| {
                    let wave = template.waves[w];
                    let c = r + wave.center_ms / 1000.0;
                    let sg = wave.width_ms / 1000.0;
                    (wave.amplitude_mv != 0.0).then_some((c, sg, wave.amplitude_mv.signum()))
                };
                let peak = |w: usize| wave_at(w).and_then(|(c, sg, sign)| local_extremum(&x, fs, c, sg, sign));
                let bounds =
                    |w: usize| wave_at(w).map(|(c, sg, _)| (c - BOUNDARY_WIDTHS * sg, c + BOUNDARY_WIDTHS * sg));
                LandmarkTimes {
                    pon: bounds(0).map(|b| b.0),
                    ppeak: peak(0),
                    poff: bounds(0).map(|b| b.1),
                    qpeak: peak(1),
                    rpeak: r,
                    speak: peak(3),
                    ton: bounds(4).map(|b| b.0),
                    tpeak: peak(4),
                    toff: bounds(4).map(|b| b.1),
                }
            })
            .collect();
        truths.push(LeadTruth {
            lead: *lead,
            shifts_ms: shifts,
            r_times_s: r_times,
            landmarks,
        });
        clean_leads.push((*lead, x));
    }

    let mut noisy_leads = clean_leads.clone();
    for (idx, (_, x)) in noisy_leads.iter_mut().enumerate() {
        let mut lead_rng = ChaCha8Rng::seed_from_u64(seed);
        lead_rng.set_stream(1 + idx as u64);
        let drift_phase: f64 = lead_rng.random_range(0.0..std::f64::consts::TAU);
        let mains_phase: f64 = lead_rng.random_range(0.0..std::f64::consts::TAU);
        let sigma = config.snr_db.map(|snr| {
            let power = x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
            (power / 10f64.powf(snr / 10.0)).sqrt()
        });
        let normal = sigma
            .filter(|s| *s > 0.0)
            .map(|s| Normal::new(0.0, s).expect("finite sigma"));
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v += config.drift_mv * (std::f64::consts::TAU * config.drift_hz * t + drift_phase).sin();
            *v += config.powerline_mv * (std::f64::consts::TAU * config.powerline_hz * t + mains_phase).sin();
            if let Some(nd) = &normal {
                *v += nd.sample(&mut lead_rng);
            }
        }
    }

    let to_record = |leads: Vec<(LeadId, Vec<f64>)>| {
        MultiLeadRecord::from_leads(
            "simgen",
            fs,
            leads
                .into_iter()
                .map(|(l, x)| (l, x.into_iter().map(T::lit).collect()))
                .collect(),
            0.0,
        )
    };
    Ok(Synthetic {
        record: to_record(noisy_leads)?,
        clean: to_record(clean_leads)?,
        truth: GroundTruth {
            fs,
            reference_lead: config.reference_lead,
            beat_times_s: times,
            rr_ms: rrs,
            amplitude_scales: scales,
            t_scales,
            leads: truths,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSegment {
    pub lead: LeadId,
    pub t_start: f64,
    pub t_end: f64,
}

/// Sequential single-lead recording schedule; at most one lead at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandheldSession {
    pub segments: Vec<SessionSegment>,
}

impl HandheldSession {
    /// Back-to-back segments of equal length separated by `gap_s`.
    pub fn sequential(leads: &[LeadId], start_s: f64, segment_s: f64, gap_s: f64) -> Self {
        let segments = leads
            .iter()
            .enumerate()
            .map(|(k, &lead)| {
                let t_start = start_s + k as f64 * (segment_s + gap_s);
                SessionSegment {
                    lead,
                    t_start,
                    t_end: t_start + segment_s,
                }
            })
            .collect();
        Self { segments }
    }

    pub fn validate(&self, duration_s: f64) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ScheduleOutOfRange(m));
        if self.segments.is_empty() {
            return bad("schedule has no segments".into());
        }
        let mut prev_end = f64::NEG_INFINITY;
        for s in &self.segments {
            if !(s.t_start >= 0.0 && s.t_start < s.t_end && s.t_end <= duration_s + 1e-9) {
                return bad(format!(
                    "segment [{}, {}] s is outside [0, {duration_s}] s",
                    s.t_start, s.t_end
                ));
            }
            if s.t_start < prev_end {
                return bad(format!("segment starting at {} s overlaps its predecessor", s.t_start));
            }
            prev_end = s.t_end;
        }
        Ok(())
    }

    /// Total time lost to lead switches.
    pub fn gap_s(&self) -> f64 {
        self.segments.windows(2).map(|w| w[1].t_start - w[0].t_end).sum()
    }
}

/// Cuts one single-lead record per session segment. Beats falling in the
/// switch gaps are simply not recorded.
pub fn simulate_handheld_session<T: Real>(
    record: &MultiLeadRecord<T>,
    session: &HandheldSession,
) -> Result<Vec<MultiLeadRecord<T>>, SimError> {
    session.validate(record.duration())?;
    session
        .segments
        .iter()
        .map(|s| {
            if !record.has_lead(s.lead) {
                return Err(SimError::ScheduleOutOfRange(format!(
                    "lead {} is not in the record",
                    s.lead
                )));
            }
            Ok(slice_record(
                record,
                s.t_start,
                s.t_end.min(record.duration()),
                &[s.lead],
            )?)
        })
        .collect()
}
