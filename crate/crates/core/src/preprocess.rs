//! Baseline-wander and noise removal ahead of beat detection.
//!
//! Baseline: two cascaded sliding medians (200 ms, then 600 ms) estimate the
//! wander, which is subtracted. Noise: 4th-order Butterworth high-pass and
//! low-pass run forward and backward, so the cascade has zero phase.

use serde::{Deserialize, Serialize};

use crate::record::{MultiLeadRecord, RecordError};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("signal has {len} samples; at least {needed} are required")]
    SignalTooShort { len: usize, needed: usize },
    #[error("invalid cutoffs {low} Hz / {high} Hz at fs {fs} Hz")]
    InvalidCutoffs { low: f64, high: f64, fs: f64 },
    #[error("invalid baseline windows {first} s / {second} s")]
    InvalidWindows { first: f64, second: f64 },
    #[error(transparent)]
    Record(#[from] RecordError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub baseline_window1_s: f64,
    pub baseline_window2_s: f64,
    pub remove_baseline: bool,
    pub bandpass: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            low_hz: 0.5,
            high_hz: 40.0,
            baseline_window1_s: 0.2,
            baseline_window2_s: 0.6,
            remove_baseline: true,
            bandpass: true,
        }
    }
}

impl PreprocessConfig {
    pub fn disabled() -> Self {
        Self {
            remove_baseline: false,
            bandpass: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, fs: f64) -> Result<(), PreprocessError> {
        if self.bandpass && !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < fs / 2.0) {
            return Err(PreprocessError::InvalidCutoffs {
                low: self.low_hz,
                high: self.high_hz,
                fs,
            });
        }
        if self.remove_baseline && !(self.baseline_window1_s > 0.0 && self.baseline_window1_s < self.baseline_window2_s)
        {
            return Err(PreprocessError::InvalidWindows {
                first: self.baseline_window1_s,
                second: self.baseline_window2_s,
            });
        }
        Ok(())
    }
}

fn odd_window(seconds: f64, fs: f64) -> usize {
    let w = (seconds * fs).round().max(1.0) as usize;
    w | 1
}

/// Sliding median with reflect padding; window is forced odd.
pub fn median_filter<T: Real>(x: &[T], window: usize) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let w = window | 1;
    let half = w / 2;
    // reflect without repeating the edge sample: x[1], x[2], ...
    let at = |k: isize| -> T {
        let len = n as isize;
        if len == 1 {
            return x[0];
        }
        let period = 2 * (len - 1);
        let mut m = k.rem_euclid(period);
        if m >= len {
            m = period - m;
        }
        x[m as usize]
    };
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let mut sorted: Vec<T> = (-(half as isize)..=half as isize).map(at).collect();
    sorted.sort_by(cmp);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(sorted[half]);
        if i + 1 == n {
            break;
        }
        let leaving = at(i as isize - half as isize);
        let entering = at(i as isize + half as isize + 1);
        let pos = sorted.partition_point(|v| cmp(v, &leaving).is_lt());
        sorted.remove(pos);
        let ins = sorted.partition_point(|v| cmp(v, &entering).is_lt());
        sorted.insert(ins, entering);
    }
    out
}

/// Subtracts the two-stage median estimate of the baseline.
pub fn remove_baseline<T: Real>(signal: &[T], fs: f64, config: &PreprocessConfig) -> Result<Vec<T>, PreprocessError> {
    if !(config.baseline_window1_s > 0.0 && config.baseline_window1_s < config.baseline_window2_s) {
        return Err(PreprocessError::InvalidWindows {
            first: config.baseline_window1_s,
            second: config.baseline_window2_s,
        });
    }
    let w1 = odd_window(config.baseline_window1_s, fs);
    let w2 = odd_window(config.baseline_window2_s, fs);
    if signal.len() <= w2 {
        return Err(PreprocessError::SignalTooShort {
            len: signal.len(),
            needed: w2 + 1,
        });
    }
    let stage1 = median_filter(signal, w1);
    let baseline = median_filter(&stage1, w2);
    Ok(signal.iter().zip(&baseline).map(|(&x, &b)| x - b).collect())
}

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(k: f64, q: f64) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    fn highpass(k: f64, q: f64) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

// Pole-pair quality factors of a 4th-order Butterworth prototype.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

fn butterworth4(cutoff: f64, fs: f64, high: bool) -> [Biquad; 2] {
    let k = (std::f64::consts::PI * cutoff / fs).tan();
    BUTTER4_Q.map(|q| {
        if high {
            Biquad::highpass(k, q)
        } else {
            Biquad::lowpass(k, q)
        }
    })
}

/// Runs the cascade once, starting each section in the steady state for a
/// constant input equal to `x[0]`.
fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    let Some(&first) = x.first() else { return };
    let mut u = first;
    for s in sections {
        let g = s.dc_gain();
        let z2 = (s.b[2] - s.a[1] * g) * u;
        let mut z = [(s.b[1] - s.a[0] * g) * u + z2, z2];
        for v in x.iter_mut() {
            let input = *v;
            let y = s.b[0] * input + z[0];
            z[0] = s.b[1] * input - s.a[0] * y + z[1];
            z[1] = s.b[2] * input - s.a[1] * y;
            *v = y;
        }
        u *= g;
    }
}

/// Forward-backward filtering with odd reflection padding.
fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
    buf.extend_from_slice(x);
    buf.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
    run_cascade(sections, &mut buf);
    buf.reverse();
    run_cascade(sections, &mut buf);
    buf.reverse();
    buf[pad..pad + n].to_vec()
}

/// Zero-phase 4th-order Butterworth band-pass (high-pass then low-pass).
/// Filter state is carried in `f64` regardless of `T`.
pub fn bandpass<T: Real>(signal: &[T], fs: f64, config: &PreprocessConfig) -> Result<Vec<T>, PreprocessError> {
    let (low, high) = (config.low_hz, config.high_hz);
    if !(fs > 0.0 && low > 0.0 && low < high && high < fs / 2.0) {
        return Err(PreprocessError::InvalidCutoffs { low, high, fs });
    }
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let mut sections = Vec::with_capacity(4);
    sections.extend(butterworth4(low, fs, true));
    sections.extend(butterworth4(high, fs, false));
    // Three time constants of the slowest pole pair.
    let pad = ((3.0 * fs / low).ceil() as usize).max(12);
    let x: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
    Ok(filtfilt(&sections, &x, pad).into_iter().map(T::lit).collect())
}

/// Applies the enabled stages to one lead.
pub fn preprocess_signal<T: Real>(signal: &[T], fs: f64, config: &PreprocessConfig) -> Result<Vec<T>, PreprocessError> {
    config.validate(fs)?;
    let mut out = signal.to_vec();
    if config.remove_baseline {
        out = remove_baseline(&out, fs, config)?;
    }
    if config.bandpass {
        out = bandpass(&out, fs, config)?;
    }
    Ok(out)
}

/// Processes every lead identically; metadata is kept.
pub fn preprocess_record<T: Real>(
    record: &MultiLeadRecord<T>,
    config: &PreprocessConfig,
) -> Result<MultiLeadRecord<T>, PreprocessError> {
    if record.is_empty() {
        return Err(PreprocessError::SignalTooShort { len: 0, needed: 1 });
    }
    if !config.remove_baseline && !config.bandpass {
        return Ok(record.clone());
    }
    let fs = record.fs();
    let samples = record.map_leads(|_, s| preprocess_signal(s, fs, config))?;
    Ok(record.with_samples(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, fs: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn amplitude_mid(x: &[f64]) -> f64 {
        let n = x.len();
        let mid = &x[n / 4..3 * n / 4];
        (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn median_filter_basics() {
        assert_eq!(
            median_filter(&[1.0f64, 5.0, 2.0, 8.0, 3.0], 3),
            vec![5.0, 2.0, 5.0, 3.0, 8.0]
        );
        let c = vec![2.5f64; 50];
        assert_eq!(median_filter(&c, 11), c);
    }

    #[test]
    fn median_filter_matches_naive() {
        let x: Vec<f64> = (0..200)
            .map(|i| ((i * 37) % 23) as f64 - (i as f64 * 0.1).sin())
            .collect();
        let w = 15;
        let fast = median_filter(&x, w);
        for (i, &v) in fast.iter().enumerate() {
            let mut win: Vec<f64> = (0..w)
                .map(|j| {
                    let k = i as isize + j as isize - 7;
                    let k = if k < 0 {
                        -k
                    } else if k >= 200 {
                        2 * 199 - k
                    } else {
                        k
                    };
                    x[k as usize]
                })
                .collect();
            win.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(v, win[7]);
        }
    }

    #[test]
    fn baseline_of_zero_and_constant() {
        let cfg = PreprocessConfig::default();
        let z = vec![0.0f64; 2000];
        assert_eq!(remove_baseline(&z, 500.0, &cfg).unwrap(), z);
        let c = vec![1.0f64; 2000];
        assert!(remove_baseline(&c, 500.0, &cfg).unwrap().iter().all(|v| v.abs() < 1e-3));
        assert!(matches!(
            remove_baseline(&vec![0.0f64; 100], 500.0, &cfg),
            Err(PreprocessError::SignalTooShort { .. })
        ));
    }

    #[test]
    fn passband_and_stopband() {
        let cfg = PreprocessConfig::default();
        let fs = 1000.0;
        let n = 20_000;
        let in_band = bandpass(&sine(10.0, fs, n, 1.0), fs, &cfg).unwrap();
        assert!(amplitude_mid(&in_band) > 0.95, "{}", amplitude_mid(&in_band));
        let out_band = bandpass(&sine(60.0, fs, n, 1.0), fs, &cfg).unwrap();
        assert!(amplitude_mid(&out_band) < 0.1, "{}", amplitude_mid(&out_band));
        assert_eq!(bandpass(&vec![0.0f64; 500], fs, &cfg).unwrap(), vec![0.0; 500]);
    }

    #[test]
    fn butterworth_magnitude_at_cutoff() {
        // Single pass of a Butterworth filter is -3 dB at the cutoff.
        let fs = 1000.0;
        let n = 40_000;
        let mut x = sine(40.0, fs, n, 1.0);
        run_cascade(&butterworth4(40.0, fs, false), &mut x);
        assert!((amplitude_mid(&x) - 0.5f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn bandpass_rejects_bad_cutoffs() {
        let cfg = PreprocessConfig {
            high_hz: 300.0,
            ..PreprocessConfig::default()
        };
        assert!(matches!(
            bandpass(&[0.0f64; 10], 500.0, &cfg),
            Err(PreprocessError::InvalidCutoffs { .. })
        ));
    }

    #[test]
    fn zero_phase_keeps_peak_position() {
        let fs = 500.0;
        let mut x = vec![0.0f64; 5000];
        for c in [1000usize, 2500, 4000] {
            for (i, v) in x.iter_mut().enumerate() {
                let d = (i as f64 - c as f64) / (0.01 * fs);
                *v += (-0.5 * d * d).exp();
            }
        }
        let y = bandpass(&x, fs, &PreprocessConfig::default()).unwrap();
        for c in [1000usize, 2500, 4000] {
            let peak = (c - 20..c + 20)
                .max_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap())
                .unwrap();
            assert!(peak.abs_diff(c) <= 1);
        }
    }

    #[test]
    fn f32_path_agrees_with_f64() {
        let fs = 500.0;
        let x = sine(7.0, fs, 4000, 1.0);
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let cfg = PreprocessConfig::default();
        let a = preprocess_signal(&x, fs, &cfg).unwrap();
        let b = preprocess_signal(&x32, fs, &cfg).unwrap();
        let worst = a.iter().zip(&b).map(|(p, q)| (p - *q as f64).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4);
    }
}
