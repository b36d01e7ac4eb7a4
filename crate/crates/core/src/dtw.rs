//! Banded dynamic time warping and nearest-beat lookup.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DtwError {
    #[error("DTW input sequence is empty")]
    EmptySequence,
    #[error("beat library is empty")]
    EmptyLibrary,
    #[error("window fraction must lie in (0, 1], got {0}")]
    InvalidWindow(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwConfig {
    /// Sakoe-Chiba band half width as a fraction of the longer sequence.
    pub window_fraction: f64,
    /// Divide the accumulated cost by the warping-path length.
    pub normalize: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            window_fraction: 0.15,
            normalize: true,
        }
    }
}

impl DtwConfig {
    pub fn full_window() -> Self {
        Self {
            window_fraction: 1.0,
            normalize: false,
        }
    }

    pub fn validate(&self) -> Result<(), DtwError> {
        if self.window_fraction > 0.0 && self.window_fraction <= 1.0 {
            Ok(())
        } else {
            Err(DtwError::InvalidWindow(self.window_fraction.to_string()))
        }
    }

    /// Band half width in samples, widened so the corners always connect.
    pub fn band(&self, n: usize, m: usize) -> usize {
        let w = (self.window_fraction * n.max(m) as f64).ceil() as usize;
        w.max(n.abs_diff(m))
    }
}

/// DTW cost with squared point distance.
///
/// With normalisation on, the cost is divided by the number of steps of the
/// optimal path; among equal-cost paths the shortest is used, which keeps the
/// result symmetric in its arguments.
pub fn dtw_distance<T: Real>(a: &[T], b: &[T], config: &DtwConfig) -> Result<T, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    config.validate()?;
    let (n, m) = (a.len(), b.len());
    let w = config.band(n, m);
    let inf = T::infinity();
    // Rolling rows of (cost, path length).
    let mut prev = vec![(inf, 0u32); m + 1];
    let mut cur = vec![(inf, 0u32); m + 1];
    prev[0] = (T::zero(), 0);
    for i in 1..=n {
        cur.fill((inf, 0));
        let lo = i.saturating_sub(w).max(1);
        let hi = (i + w).min(m);
        for j in lo..=hi {
            let d = a[i - 1] - b[j - 1];
            let cands = [prev[j - 1], prev[j], cur[j - 1]];
            let mut best = cands[0];
            for &c in &cands[1..] {
                if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
                    best = c;
                }
            }
            cur[j] = (best.0 + d * d, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, steps) = prev[m];
    Ok(if config.normalize {
        cost / T::from_count(steps as usize)
    } else {
        cost
    })
}

/// Zero-mean, unit-variance copy; constant input maps to zeros.
pub fn z_normalize<T: Real>(x: &[T]) -> Vec<T> {
    let m = crate::scalar::mean(x);
    let s = crate::scalar::std_dev(x);
    if s <= T::epsilon() {
        return vec![T::zero(); x.len()];
    }
    x.iter().map(|&v| (v - m) / s).collect()
}

/// Index and cost of the library entry with minimum DTW cost to `query`.
/// Ties go to the lowest index.
pub fn nearest_beat<T: Real, S: AsRef<[T]> + Sync>(
    query: &[T],
    library: &[S],
    config: &DtwConfig,
) -> Result<(usize, T), DtwError> {
    use rayon::prelude::*;
    if library.is_empty() {
        return Err(DtwError::EmptyLibrary);
    }
    let costs: Vec<T> = library
        .par_iter()
        .map(|s| dtw_distance(query, s.as_ref(), config))
        .collect::<Result<_, _>>()?;
    let mut best = (0, costs[0]);
    for (k, &c) in costs.iter().enumerate().skip(1) {
        if c < best.1 {
            best = (k, c);
        }
    }
    Ok(best)
}
