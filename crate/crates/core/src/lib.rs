//! Synthesis of a synchronous 12-lead ECG from one currently recorded lead.
//!
//! A historic synchronous recording supplies beat morphology for every lead
//! and a per-pair random-forest model of the inter-lead RR-length lag. Each
//! beat of the current lead is matched to its most similar historic beat by
//! DTW, the paired beats of the missing leads are stretched and energy-scaled
//! onto the current timing, corrected by the predicted lag, and concatenated.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI uses.

pub mod delineate;
pub mod dtw;
pub mod features;
pub mod forest;
pub mod lead;
pub mod metrics;
pub mod preprocess;
pub mod record;
pub mod scalar;
pub mod simgen;
pub mod svg;
pub mod synth;
pub mod vcg;

pub use lead::LeadId;
pub use scalar::Real;

pub type Record = record::MultiLeadRecord<f64>;
pub type RecordF32 = record::MultiLeadRecord<f32>;

pub type Library = synth::HistoricLibrary<f64>;
pub type LagModel = forest::LagModel<f64>;
