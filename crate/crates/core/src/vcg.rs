//! Vectorcardiogram via the Dower and inverse Dower transforms.
//!
//! Coefficients from Edenbrandt & Pahlm, "Vectorcardiogram synthesized from
//! a 12-lead ECG: superiority of the inverse Dower matrix", J Electrocardiol
//! 21(4), 1988, which tabulates both the Dower matrix (Dower et al. 1980) and
//! its inverse. Leads are ordered V1..V6, I, II throughout.

use serde::{Deserialize, Serialize};

use crate::lead::LeadId;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VcgError {
    #[error("lead {0} is required")]
    MissingLead(LeadId),
    #[error("lead lengths differ")]
    LengthMismatch,
    #[error("window {start}..{end} is outside a signal of {len} samples")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
}

/// The eight independent leads, in matrix column order.
pub const INDEPENDENT_LEADS: [LeadId; 8] = [
    LeadId::V1,
    LeadId::V2,
    LeadId::V3,
    LeadId::V4,
    LeadId::V5,
    LeadId::V6,
    LeadId::I,
    LeadId::II,
];

/// Inverse Dower: rows X, Y, Z; columns V1..V6, I, II.
pub const INVERSE_DOWER: [[f64; 8]; 3] = [
    [-0.172, -0.074, 0.122, 0.231, 0.239, 0.194, 0.156, -0.010],
    [0.057, -0.019, -0.106, -0.022, 0.041, 0.048, -0.227, 0.887],
    [-0.229, -0.310, -0.246, -0.063, 0.055, 0.108, 0.022, 0.102],
];

/// Dower: rows V1..V6, I, II; columns X, Y, Z.
pub const DOWER: [[f64; 3]; 8] = [
    [-0.515, 0.157, -0.917],
    [0.044, 0.164, -1.387],
    [0.882, 0.098, -1.277],
    [1.213, 0.127, -0.601],
    [1.125, 0.127, -0.086],
    [0.831, 0.076, 0.230],
    [0.632, -0.235, 0.059],
    [0.235, 1.066, -0.132],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcgSignal<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub fs: f64,
}

impl<T: Real> VcgSignal<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, z: Vec<T>, fs: f64) -> Result<Self, VcgError> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(VcgError::LengthMismatch);
        }
        Ok(Self { x, y, z, fs })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `t,X,Y,Z` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,X,Y,Z")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                i as f64 / self.fs,
                self.x[i].as_f64(),
                self.y[i].as_f64(),
                self.z[i].as_f64()
            )?;
        }
        Ok(())
    }
}

/// Maps the eight independent leads to X, Y, Z. `leads` is looked up by id.
pub fn inverse_dower<T: Real, S: AsRef<[T]>>(leads: &[(LeadId, S)], fs: f64) -> Result<VcgSignal<T>, VcgError> {
    let mut cols: Vec<&[T]> = Vec::with_capacity(8);
    for id in INDEPENDENT_LEADS {
        let s = leads
            .iter()
            .find(|(l, _)| *l == id)
            .ok_or(VcgError::MissingLead(id))?
            .1
            .as_ref();
        cols.push(s);
    }
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(VcgError::LengthMismatch);
    }
    let m: [[T; 8]; 3] = INVERSE_DOWER.map(|row| row.map(T::lit));
    let mut out = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    for (r, row) in m.iter().enumerate() {
        for (c, col) in cols.iter().enumerate() {
            let k = row[c];
            for (o, &v) in out[r].iter_mut().zip(col.iter()) {
                *o += k * v;
            }
        }
    }
    let [x, y, z] = out;
    VcgSignal::new(x, y, z, fs)
}

/// Projects a VCG onto the eight independent leads (V1..V6, I, II).
pub fn forward_dower<T: Real>(vcg: &VcgSignal<T>) -> Vec<(LeadId, Vec<T>)> {
    INDEPENDENT_LEADS
        .iter()
        .zip(DOWER)
        .map(|(&lead, row)| {
            let [a, b, c] = row.map(T::lit);
            let s = (0..vcg.len())
                .map(|i| a * vcg.x[i] + b * vcg.y[i] + c * vcg.z[i])
                .collect();
            (lead, s)
        })
        .collect()
}

/// Projects one dipole vector onto all 12 standard leads, deriving III and
/// the augmented limb leads from I and II.
pub fn project_dipole(v: [f64; 3]) -> [(LeadId, f64); 12] {
    let dot = |row: [f64; 3]| row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    let i = dot(DOWER[6]);
    let ii = dot(DOWER[7]);
    [
        (LeadId::I, i),
        (LeadId::II, ii),
        (LeadId::III, ii - i),
        (LeadId::AVR, -(i + ii) / 2.0),
        (LeadId::AVL, i - ii / 2.0),
        (LeadId::AVF, ii - i / 2.0),
        (LeadId::V1, dot(DOWER[0])),
        (LeadId::V2, dot(DOWER[1])),
        (LeadId::V3, dot(DOWER[2])),
        (LeadId::V4, dot(DOWER[3])),
        (LeadId::V5, dot(DOWER[4])),
        (LeadId::V6, dot(DOWER[5])),
    ]
}

/// Frontal-plane angle (degrees, from +X toward +Y, in (-180, 180]) of the
/// largest-magnitude X-Y vector in `start..end`.
pub fn qrs_axis<T: Real>(vcg: &VcgSignal<T>, start: usize, end: usize) -> Result<f64, VcgError> {
    if start >= end || end > vcg.len() {
        return Err(VcgError::WindowOutOfRange {
            start,
            end,
            len: vcg.len(),
        });
    }
    let mut best = start;
    let mut best_mag = -1.0;
    for i in start..end {
        let (x, y) = (vcg.x[i].as_f64(), vcg.y[i].as_f64());
        let m = x * x + y * y;
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    let angle = vcg.y[best].as_f64().atan2(vcg.x[best].as_f64()).to_degrees();
    Ok(if angle <= -180.0 { angle + 360.0 } else { angle })
}

/// Smallest absolute difference between two angles in degrees.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
