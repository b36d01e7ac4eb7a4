//! R-peak detection, wave delineation and RR segmentation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::lead::LeadId;
use crate::preprocess::{bandpass, PreprocessConfig};
use crate::scalar::{median, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DelineateError {
    #[error("fewer than two beats found")]
    NoBeatsFound,
    #[error("signal too short for detection: {len} samples, need {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("sampling rate {0} Hz is too low for QRS detection")]
    RateTooLow(f64),
}

/// Plausible RR-interval range in seconds.
pub const RR_GATE_S: (f64, f64) = (0.2, 3.0);

const REFRACTORY_S: f64 = 0.2;
const T_WAVE_WINDOW_S: f64 = 0.36;
const SEARCH_BACK_FACTOR: f64 = 1.66;
const INTEGRATION_S: f64 = 0.15;
const REFINE_S: f64 = 0.08;

fn samples(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round() as usize
}

/// Centered five-point derivative, scaled to units per second.
fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    (0..n as isize)
        .map(|i| (-at(i - 2) - 2.0 * at(i - 1) + 2.0 * at(i + 1) + at(i + 2)) * fs / 8.0)
        .collect()
}

/// Centered moving average over `w` samples (odd), shrinking at the edges.
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let half = w / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in x {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        if x[i] > x[i - 1] {
            // plateaus report their first sample
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Pan-Tompkins QRS detection, refined to the dominant-polarity extremum of
/// the input signal.
pub fn detect_r_peaks<T: Real>(signal: &[T], fs: f64) -> Result<Vec<usize>, DelineateError> {
    if fs < 50.0 {
        return Err(DelineateError::RateTooLow(fs));
    }
    let needed = samples(2.0, fs);
    if signal.len() < needed {
        return Err(DelineateError::SignalTooShort {
            len: signal.len(),
            needed,
        });
    }
    let x: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
    let qrs_band = PreprocessConfig {
        low_hz: 5.0,
        high_hz: 15.0,
        ..PreprocessConfig::default()
    };
    let filtered = bandpass(&x, fs, &qrs_band).map_err(|_| DelineateError::RateTooLow(fs))?;
    let deriv = derivative(&filtered, fs);
    let squared: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    let mwi = moving_average(&squared, samples(INTEGRATION_S, fs) | 1);

    let refractory = samples(REFRACTORY_S, fs);
    let candidates = suppress_close(&local_maxima(&mwi), &mwi, refractory);
    if candidates.is_empty() {
        return Err(DelineateError::NoBeatsFound);
    }
    let slope_half = samples(0.075, fs);
    let slope_at = |p: usize| {
        let lo = p.saturating_sub(slope_half);
        let hi = (p + slope_half).min(deriv.len() - 1);
        deriv[lo..=hi].iter().fold(0.0f64, |m, d| m.max(d.abs()))
    };

    let learn = samples(2.0, fs).min(mwi.len());
    let learn_max = mwi[..learn].iter().copied().fold(0.0, f64::max);
    if learn_max <= 0.0 && mwi.iter().all(|&v| v <= 0.0) {
        return Err(DelineateError::NoBeatsFound);
    }
    let mut spki = learn_max;
    let mut npki = 0.5 * mwi[..learn].iter().sum::<f64>() / learn as f64;
    let mut qrs: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr: Vec<usize> = Vec::new();

    let mut c = 0;
    while c < candidates.len() {
        let p = candidates[c];
        let th1 = npki + 0.25 * (spki - npki);
        let th2 = 0.5 * th1;

        // Search back for a missed beat before handling the next candidate.
        if let (Some(&last), false) = (qrs.last(), rr.is_empty()) {
            let recent = &rr[rr.len().saturating_sub(8)..];
            let rr_avg = recent.iter().sum::<usize>() as f64 / recent.len() as f64;
            let limit = last + (SEARCH_BACK_FACTOR * rr_avg) as usize;
            if p > limit {
                let missed = candidates[..c]
                    .iter()
                    .copied()
                    .filter(|&q| q > last + refractory && mwi[q] > th2)
                    .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]));
                if let Some(m) = missed {
                    rr.push(m - last);
                    qrs.push(m);
                    last_slope = slope_at(m);
                    spki = 0.25 * mwi[m] + 0.75 * spki;
                    continue;
                }
            }
        }

        let peak = mwi[p];
        if peak > th1 {
            let slope = slope_at(p);
            let is_t_wave = match qrs.last() {
                Some(&last) if p - last < samples(T_WAVE_WINDOW_S, fs) => slope < 0.5 * last_slope,
                _ => false,
            };
            let too_close = qrs.last().is_some_and(|&last| p - last < refractory);
            if is_t_wave || too_close {
                npki = 0.125 * peak + 0.875 * npki;
            } else {
                if let Some(&last) = qrs.last() {
                    rr.push(p - last);
                }
                qrs.push(p);
                last_slope = slope;
                spki = 0.125 * peak + 0.875 * spki;
            }
        } else {
            npki = 0.125 * peak + 0.875 * npki;
        }
        c += 1;
    }
    qrs.sort_unstable();

    let refined = refine_to_extremum(&x, &qrs, samples(REFINE_S, fs), refractory);
    if refined.len() < 2 {
        return Err(DelineateError::NoBeatsFound);
    }
    Ok(refined)
}

/// Keeps the larger of any two maxima closer than `gap`.
fn suppress_close(peaks: &[usize], x: &[f64], gap: usize) -> Vec<usize> {
    let mut order: Vec<usize> = peaks.to_vec();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in order {
        if kept.iter().all(|&k| k.abs_diff(p) >= gap) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

fn refine_to_extremum(x: &[f64], qrs: &[usize], half: usize, refractory: usize) -> Vec<usize> {
    if qrs.is_empty() {
        return Vec::new();
    }
    let level = median(x).unwrap_or(0.0);
    let windows: Vec<(usize, usize, usize)> = qrs
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(half);
            let hi = (p + half).min(x.len() - 1);
            let imax = (lo..=hi)
                .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
                .unwrap_or(p);
            let imin = (lo..=hi)
                .min_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)))
                .unwrap_or(p);
            (p, imax, imin)
        })
        .collect();
    // Near-symmetric complexes (RS in lead III, say) must not flip between
    // recordings, so negative polarity needs a clear majority of clearly
    // negative beats.
    let negative_votes = windows
        .iter()
        .filter(|&&(_, imax, imin)| (level - x[imin]) > 1.25 * (x[imax] - level))
        .count();
    let positive = 2 * negative_votes <= windows.len();
    let mut out: Vec<usize> = Vec::with_capacity(windows.len());
    for &(_, imax, imin) in &windows {
        let r = if positive { imax } else { imin };
        let mag = |i: usize| (x[i] - level).abs();
        match out.last() {
            Some(&prev) if r <= prev || r - prev < refractory => {
                if mag(r) > mag(prev) && (out.len() < 2 || r > out[out.len() - 2] + refractory) {
                    *out.last_mut().unwrap() = r;
                }
            }
            _ => out.push(r),
        }
    }
    out
}

/// Landmarks of one beat as sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub pon: Option<usize>,
    pub ppeak: Option<usize>,
    pub poff: Option<usize>,
    pub qpeak: Option<usize>,
    pub rpeak: usize,
    pub speak: Option<usize>,
    pub ton: Option<usize>,
    pub tpeak: Option<usize>,
    pub toff: Option<usize>,
}

pub const LANDMARK_NAMES: [&str; 9] = [
    "Pon", "Ppeak", "Poff", "Qpeak", "Rpeak", "Speak", "Ton", "Tpeak", "Toff",
];

impl BeatFiducials {
    pub fn as_array(&self) -> [Option<usize>; 9] {
        [
            self.pon,
            self.ppeak,
            self.poff,
            self.qpeak,
            Some(self.rpeak),
            self.speak,
            self.ton,
            self.tpeak,
            self.toff,
        ]
    }

    fn set(&mut self, k: usize, v: Option<usize>) {
        match k {
            0 => self.pon = v,
            1 => self.ppeak = v,
            2 => self.poff = v,
            3 => self.qpeak = v,
            5 => self.speak = v,
            6 => self.ton = v,
            7 => self.tpeak = v,
            8 => self.toff = v,
            _ => {}
        }
    }

    /// Present landmarks are in physiological order.
    pub fn is_ordered(&self) -> bool {
        let present: Vec<usize> = self.as_array().into_iter().flatten().collect();
        present.windows(2).all(|w| w[0] <= w[1])
    }

    /// Drops (marks Absent) any landmark that breaks the ordering.
    fn sanitize(&mut self) {
        let arr = self.as_array();
        // landmarks before R must not exceed R, those after must not precede it
        let mut prev: Option<usize> = None;
        for (k, v) in arr.iter().enumerate().take(4) {
            if let Some(v) = *v {
                if v > self.rpeak || prev.is_some_and(|p| v < p) {
                    self.set(k, None);
                } else {
                    prev = Some(v);
                }
            }
        }
        let mut prev = self.rpeak;
        for (k, v) in arr.iter().enumerate().skip(5) {
            if let Some(v) = *v {
                if v < prev {
                    self.set(k, None);
                } else {
                    prev = v;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialSet {
    pub lead: LeadId,
    pub fs: f64,
    pub beats: Vec<BeatFiducials>,
}

impl FiducialSet {
    /// One row per beat, empty fields for Absent landmarks.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", LANDMARK_NAMES.join(","))?;
        for b in &self.beats {
            let row: Vec<String> = b
                .as_array()
                .iter()
                .map(|v| v.map_or(String::new(), |i| i.to_string()))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Robust estimate of white-noise standard deviation from first differences.
fn noise_sigma(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(&d).unwrap_or(0.0);
    let dev: Vec<f64> = d.iter().map(|v| (v - m).abs()).collect();
    1.4826 * median(&dev).unwrap_or(0.0) / std::f64::consts::SQRT_2
}

const MIN_WAVE_MV: f64 = 0.02;
const SLOPE_FRACTION: f64 = 0.15;

struct Delineator<'a> {
    x: &'a [f64],
    d: Vec<f64>,
    fs: f64,
    threshold: f64,
}

impl Delineator<'_> {
    fn ms(&self, v: f64) -> isize {
        (v * self.fs / 1000.0).round() as isize
    }

    fn clamp(&self, i: isize) -> usize {
        i.clamp(0, self.x.len() as isize - 1) as usize
    }

    fn is_local_extremum(&self, i: usize, sign: f64) -> bool {
        i > 0
            && i + 1 < self.x.len()
            && sign * (self.x[i] - self.x[i - 1]) >= 0.0
            && sign * (self.x[i] - self.x[i + 1]) >= 0.0
    }

    /// Largest |x - iso| in `[lo, hi]` that is a strict interior extremum.
    fn wave_peak(&self, lo: usize, hi: usize, iso: f64) -> Option<usize> {
        if hi <= lo + 1 {
            return None;
        }
        let p = (lo + 1..hi).max_by(|&a, &b| {
            (self.x[a] - iso)
                .abs()
                .total_cmp(&(self.x[b] - iso).abs())
                .then(b.cmp(&a))
        })?;
        let sign = (self.x[p] - iso).signum();
        ((self.x[p] - iso).abs() > self.threshold && self.is_local_extremum(p, sign)).then_some(p)
    }

    /// Walks from `peak` in direction `step` until the slope has passed its
    /// maximum and fallen below a fraction of it.
    fn boundary(&self, peak: usize, step: isize, limit: usize) -> usize {
        let mut run_max = 0.0f64;
        let mut k = peak as isize;
        let limit = limit as isize;
        while (step < 0 && k > limit) || (step > 0 && k < limit) {
            k += step;
            let s = self.d[k as usize].abs();
            if s > run_max {
                run_max = s;
            } else if run_max > 0.0 && s < SLOPE_FRACTION * run_max {
                return k as usize;
            }
        }
        limit as usize
    }

    /// Extremum opposite to the R deflection inside `[lo, hi]`, if interior.
    fn qs_peak(&self, lo: usize, hi: usize, r_sign: f64) -> Option<usize> {
        if hi <= lo + 1 {
            return None;
        }
        let p = (lo + 1..hi).min_by(|&a, &b| (r_sign * self.x[a]).total_cmp(&(r_sign * self.x[b])).then(a.cmp(&b)))?;
        self.is_local_extremum(p, -r_sign).then_some(p)
    }
}

/// Locates P, Q, S and T landmarks around each R-peak. Landmarks that cannot
/// be placed with confidence are left `None`.
pub fn delineate_beats<T: Real>(signal: &[T], fs: f64, rpeaks: &[usize], lead: LeadId) -> FiducialSet {
    let x: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
    let smooth = moving_average(&x, (samples(0.02, fs) | 1).max(3));
    let d: Vec<f64> = (0..smooth.len())
        .map(|i| {
            let a = smooth[i.saturating_sub(1)];
            let b = smooth[(i + 1).min(smooth.len() - 1)];
            (b - a) * fs / 2.0
        })
        .collect();
    let noise = noise_sigma(&x);
    let del = Delineator {
        x: &x,
        d,
        fs,
        threshold: MIN_WAVE_MV.max(4.0 * noise),
    };
    let n = x.len();
    let mut beats: Vec<BeatFiducials> = Vec::with_capacity(rpeaks.len());
    for (b, &r) in rpeaks.iter().enumerate() {
        let mut f = BeatFiducials {
            rpeak: r,
            ..BeatFiducials::default()
        };
        if r >= n {
            beats.push(f);
            continue;
        }
        let rr_prev = (b > 0).then(|| r - rpeaks[b - 1]);
        let rr_next = rpeaks.get(b + 1).map(|&nx| nx - r);
        let rr = rr_prev.or(rr_next).unwrap_or(samples(0.8, fs)) as f64;
        let rr_next = rr_next.map_or(rr, |v| v as f64);
        let seg_lo = rpeaks
            .get(b.wrapping_sub(1))
            .copied()
            .unwrap_or(r.saturating_sub(rr as usize));
        let iso = median(&x[seg_lo.min(r)..=r]).unwrap_or(0.0);
        let r_sign = if x[r] >= iso { 1.0 } else { -1.0 };
        let ri = r as isize;

        // Q and S: opposite-polarity extrema, else QRS onset/offset by slope.
        let q_lo = del.clamp(ri + del.ms(-80.0));
        f.qpeak = del.qs_peak(q_lo, r, r_sign).or_else(|| {
            let on = del.boundary(r, -1, q_lo);
            (on > q_lo && on < r).then_some(on)
        });
        let s_hi = del.clamp(ri + del.ms(80.0));
        f.speak = del.qs_peak(r, s_hi, r_sign).or_else(|| {
            let off = del.boundary(r, 1, s_hi);
            (off > r && off < s_hi).then_some(off)
        });

        // P wave, after the previous beat's T.
        let mut p_lo = ri + del.ms(-300.0);
        if let Some(prev) = beats.last() {
            let floor = prev.toff.or(prev.tpeak).unwrap_or(prev.rpeak) as isize + 1;
            p_lo = p_lo.max(floor);
        }
        let p_hi = ri + del.ms(-80.0);
        if p_lo < p_hi && p_hi > 0 {
            let (lo, hi) = (del.clamp(p_lo), del.clamp(p_hi));
            if let Some(p) = del.wave_peak(lo, hi, iso) {
                f.ppeak = Some(p);
                f.pon = Some(del.boundary(p, -1, lo));
                f.poff = Some(del.boundary(p, 1, f.qpeak.unwrap_or(hi).min(r)));
            }
        }

        // T wave; the window end scales with heart rate.
        let scale = (rr / (0.8 * fs)).sqrt().clamp(0.6, 1.4);
        let t_lo = ri + del.ms(100.0);
        let t_hi = (ri + del.ms(500.0 * scale)).min(ri + (0.7 * rr_next) as isize);
        if t_lo < t_hi && (t_hi as usize) < n {
            let (lo, hi) = (del.clamp(t_lo), del.clamp(t_hi));
            if let Some(t) = del.wave_peak(lo, hi, iso) {
                f.tpeak = Some(t);
                let on_floor = f.speak.unwrap_or(r).max(r);
                f.ton = Some(del.boundary(t, -1, on_floor));
                let off_limit = del.clamp(ri + (0.85 * rr_next) as isize);
                f.toff = Some(del.boundary(t, 1, off_limit.max(t)));
            }
        }
        f.sanitize();
        beats.push(f);
    }
    FiducialSet { lead, fs, beats }
}

/// One RR interval of one lead; the first and last samples are R-peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSegment<T> {
    pub lead: LeadId,
    /// Position of the opening R-peak in the detection list.
    pub index: usize,
    pub samples: Vec<T>,
    /// Sample index of the opening R-peak in the source signal.
    pub start_sample: usize,
    pub fs: f64,
}

impl<T: Real> BeatSegment<T> {
    pub fn start_time(&self) -> f64 {
        self.start_sample as f64 / self.fs
    }

    pub fn end_sample(&self) -> usize {
        self.start_sample + self.samples.len() - 1
    }

    /// RR length in seconds: (R_k - R_{k-1}) / fs.
    pub fn delta_s(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.fs
    }

    pub fn delta_ms(&self) -> f64 {
        1000.0 * self.delta_s()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("beat {index} of lead {lead} spans {delta_s:.3} s, outside the plausible RR range")]
pub struct ImplausibleBeat {
    pub lead: LeadId,
    pub index: usize,
    pub start_sample: usize,
    pub delta_s: f64,
}

/// Splits the signal at consecutive R-peaks. Adjacent segments share their
/// boundary sample; implausible RR lengths are reported in place.
pub fn segment_beats<T: Real>(
    signal: &[T],
    fs: f64,
    rpeaks: &[usize],
    lead: LeadId,
) -> Result<Vec<Result<BeatSegment<T>, ImplausibleBeat>>, DelineateError> {
    if rpeaks.len() < 2 {
        return Err(DelineateError::NoBeatsFound);
    }
    Ok(rpeaks
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] && w[1] < signal.len())
        .map(|(index, w)| {
            let delta_s = (w[1] - w[0]) as f64 / fs;
            if delta_s < RR_GATE_S.0 || delta_s > RR_GATE_S.1 {
                Err(ImplausibleBeat {
                    lead,
                    index,
                    start_sample: w[0],
                    delta_s,
                })
            } else {
                Ok(BeatSegment {
                    lead,
                    index,
                    samples: signal[w[0]..=w[1]].to_vec(),
                    start_sample: w[0],
                    fs,
                })
            }
        })
        .collect())
}

/// Detection, delineation and segmentation of one lead, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadAnalysis<T> {
    pub lead: LeadId,
    pub fs: f64,
    pub rpeaks: Vec<usize>,
    pub fiducials: FiducialSet,
    pub segments: Vec<Result<BeatSegment<T>, ImplausibleBeat>>,
}

impl<T: Real> LeadAnalysis<T> {
    pub fn valid_segments(&self) -> impl Iterator<Item = &BeatSegment<T>> {
        self.segments.iter().filter_map(|s| s.as_ref().ok())
    }
}

pub fn analyze_lead<T: Real>(signal: &[T], fs: f64, lead: LeadId) -> Result<LeadAnalysis<T>, DelineateError> {
    let rpeaks = detect_r_peaks(signal, fs)?;
    let fiducials = delineate_beats(signal, fs, &rpeaks, lead);
    let segments = segment_beats(signal, fs, &rpeaks, lead)?;
    Ok(LeadAnalysis {
        lead,
        fs,
        rpeaks,
        fiducials,
        segments,
    })
}
