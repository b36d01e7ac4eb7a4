//! Agreement between synthesized and measured leads, and the 12×12
//! evaluation protocol.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forest::ForestConfig;
use crate::lead::LeadId;
use crate::preprocess::{preprocess_record, PreprocessConfig, PreprocessError};
use crate::record::{slice_record, MultiLeadRecord, RecordError};
use crate::scalar::{mean, std_dev, Real};
use crate::synth::{all_pairs, CurrentLead, HistoricLibrary, MatchConfig, SynthError, SynthesisConfig};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("signals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("record is {duration} s long, the protocol needs more than {needed} s")]
    RecordTooShort { duration: f64, needed: f64 },
    #[error("invalid protocol: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn check_len<T>(a: &[T], b: &[T]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::ZeroVariance);
    }
    Ok(())
}

/// Coefficient of determination of `estimate` against `measured`.
pub fn r_squared<T: Real>(measured: &[T], estimate: &[T]) -> Result<T, MetricError> {
    check_len(measured, estimate)?;
    let m = mean(measured);
    let ss_tot: T = measured.iter().map(|&v| (v - m) * (v - m)).sum();
    if ss_tot <= T::zero() {
        return Err(MetricError::ZeroVariance);
    }
    let ss_res: T = measured.iter().zip(estimate).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

/// Pearson correlation coefficient.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T, MetricError> {
    check_len(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub r2: f64,
    pub rho: f64,
    /// Samples compared.
    pub samples: usize,
}

pub fn score<T: Real>(measured: &[T], estimate: &[T]) -> Result<Score, MetricError> {
    Ok(Score {
        r2: r_squared(measured, estimate)?.as_f64(),
        rho: pearson(measured, estimate)?.as_f64(),
        samples: measured.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

fn summarize(values: &[f64]) -> Summary {
    Summary {
        mean: mean(values),
        std: std_dev(values),
        count: values.len(),
    }
}

/// Rows are the synthesized (missing) lead, columns the current lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub leads: Vec<LeadId>,
    /// `None` where the pair could not be synthesized.
    pub cells: Vec<Vec<Option<Score>>>,
    pub failures: Vec<String>,
}

impl AccuracyMatrix {
    /// Empty matrix with the diagonal set to (1, 1) over `samples`.
    pub fn new(leads: Vec<LeadId>, samples: usize) -> Self {
        let n = leads.len();
        let mut cells = vec![vec![None; n]; n];
        for (k, row) in cells.iter_mut().enumerate() {
            row[k] = Some(Score {
                r2: 1.0,
                rho: 1.0,
                samples,
            });
        }
        Self {
            leads,
            cells,
            failures: Vec::new(),
        }
    }

    fn pos(&self, lead: LeadId) -> Option<usize> {
        self.leads.iter().position(|&l| l == lead)
    }

    pub fn get(&self, missing: LeadId, current: LeadId) -> Option<Score> {
        self.cells[self.pos(missing)?][self.pos(current)?]
    }

    pub fn set(&mut self, missing: LeadId, current: LeadId, score: Score) {
        if let (Some(i), Some(j)) = (self.pos(missing), self.pos(current)) {
            self.cells[i][j] = Some(score);
        }
    }

    /// Filled off-diagonal cells as (missing, current, score).
    pub fn off_diagonal(&self) -> Vec<(LeadId, LeadId, Score)> {
        let mut out = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let (true, Some(s)) = (i != j, cell) {
                    out.push((self.leads[i], self.leads[j], *s));
                }
            }
        }
        out
    }

    pub fn r2_summary(&self) -> Summary {
        summarize(&self.off_diagonal().iter().map(|c| c.2.r2).collect::<Vec<_>>())
    }

    pub fn rho_summary(&self) -> Summary {
        summarize(&self.off_diagonal().iter().map(|c| c.2.rho).collect::<Vec<_>>())
    }

    /// Markdown table of `metric` ("r2" or "rho") plus summary lines.
    pub fn to_markdown(&self, metric: &str) -> String {
        let pick = |s: &Score| if metric == "r2" { s.r2 } else { s.rho };
        let mut out = String::new();
        let _ = write!(out, "| missing \\ current |");
        for l in &self.leads {
            let _ = write!(out, " {l} |");
        }
        out.push('\n');
        out.push_str(&"|---".repeat(self.leads.len() + 1));
        out.push_str("|\n");
        for (i, row) in self.cells.iter().enumerate() {
            let _ = write!(out, "| {} |", self.leads[i]);
            for c in row {
                match c {
                    Some(s) => {
                        let _ = write!(out, " {:.3} |", pick(s));
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        let s = if metric == "r2" {
            self.r2_summary()
        } else {
            self.rho_summary()
        };
        let _ = writeln!(
            out,
            "\noff-diagonal {metric}: mean {:.3}, std {:.3} over {} pairs",
            s.mean, s.std, s.count
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub train_window_s: f64,
    /// Seconds scored after the training window; the whole remainder when unset.
    pub eval_window_s: Option<f64>,
    pub preprocess: PreprocessConfig,
    pub matching: MatchConfig,
    pub forest: ForestConfig,
    pub synthesis: SynthesisConfig,
    /// Leads to evaluate; empty means every standard lead in the record.
    pub leads: Vec<LeadId>,
    /// Current-lead columns to fill; empty means all of `leads`.
    pub current_leads: Vec<LeadId>,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: &str| Err(MetricError::InvalidConfig(m.to_string()));
        if !(self.train_window_s.is_finite() && self.train_window_s > 0.0) {
            return bad("train_window_s must be positive");
        }
        if self.eval_window_s.is_some_and(|e| !(e.is_finite() && e > 0.0)) {
            return bad("eval_window_s must be positive");
        }
        if let Some(l) = self
            .current_leads
            .iter()
            .find(|l| !self.leads.is_empty() && !self.leads.contains(l))
        {
            return Err(MetricError::InvalidConfig(format!(
                "current lead {l} is not among the evaluated leads"
            )));
        }
        self.forest
            .validate(crate::features::FEATURE_COUNT)
            .map_err(|e| MetricError::InvalidConfig(e.to_string()))?;
        self.matching
            .validate()
            .map_err(|e| MetricError::InvalidConfig(e.to_string()))?;
        self.synthesis
            .validate()
            .map_err(|e| MetricError::InvalidConfig(e.to_string()))
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_window_s: 60.0,
            preprocess: PreprocessConfig::default(),
            matching: MatchConfig::default(),
            forest: ForestConfig::default(),
            synthesis: SynthesisConfig::default(),
            leads: Vec::new(),
            current_leads: Vec::new(),
            eval_window_s: None,
        }
    }
}

/// A record split into a trained historic library and a held-out span.
pub struct Evaluation<T> {
    pub library: HistoricLibrary<T>,
    pub held_out: MultiLeadRecord<T>,
    pub leads: Vec<LeadId>,
    pub current_leads: Vec<LeadId>,
    /// Pairs whose model could not be trained.
    pub training_failures: Vec<String>,
}

impl<T: Real> Evaluation<T> {
    /// Preprocesses, trains on the first `train_window_s` seconds and keeps
    /// the remainder for scoring.
    pub fn prepare(record: &MultiLeadRecord<T>, config: &ProtocolConfig) -> Result<Self, MetricError> {
        config.validate()?;
        let duration = record.duration();
        let needed = config.train_window_s + config.eval_window_s.unwrap_or(0.0);
        if duration <= needed {
            return Err(MetricError::RecordTooShort { duration, needed });
        }
        let leads: Vec<LeadId> = if config.leads.is_empty() {
            LeadId::STANDARD
                .iter()
                .copied()
                .filter(|&l| record.has_lead(l))
                .collect()
        } else {
            config.leads.clone()
        };
        let current_leads = if config.current_leads.is_empty() {
            leads.clone()
        } else {
            config.current_leads.clone()
        };
        let processed = preprocess_record(record, &config.preprocess)?;
        let end = config.eval_window_s.map_or(duration, |e| config.train_window_s + e);
        let train = slice_record(&processed, 0.0, config.train_window_s, &leads)?;
        let held_out = slice_record(&processed, config.train_window_s, end, &leads)?;
        let mut library = HistoricLibrary::build(&train, config.train_window_s, &config.matching)?;
        let pairs: Vec<(LeadId, LeadId)> = all_pairs(&leads)
            .into_iter()
            .filter(|(_, j)| current_leads.contains(j))
            .collect();
        let results = library.train_models(&pairs, &config.forest);
        let training_failures = results
            .into_iter()
            .filter_map(|((i, j), r)| r.err().map(|e| format!("{i} from {j}: {e}")))
            .collect();
        Ok(Self {
            library,
            held_out,
            leads,
            current_leads,
            training_failures,
        })
    }

    /// One accuracy matrix per synthesis configuration, sharing the
    /// current-lead analysis and matching.
    pub fn matrices(&self, configs: &[SynthesisConfig]) -> Vec<AccuracyMatrix> {
        let columns: Vec<Vec<Result<Vec<(LeadId, Score)>, String>>> = self
            .current_leads
            .par_iter()
            .map(|&j| {
                let signal = self.held_out.lead(j).expect("held-out lead present");
                let prepared = match CurrentLead::prepare(signal, j, &self.library) {
                    Ok(p) => p,
                    Err(e) => return configs.iter().map(|_| Err(format!("current {j}: {e}"))).collect(),
                };
                configs
                    .iter()
                    .map(|cfg| {
                        let rec = crate::synth::synthesize_prepared(&prepared, &self.library, cfg)
                            .map_err(|e| format!("current {j}: {e}"))?;
                        let mut scores = Vec::new();
                        for s in &rec.synthesized {
                            let measured = self.held_out.lead(s.lead).expect("held-out lead present");
                            match score(measured, &s.samples) {
                                Ok(sc) => scores.push((s.lead, sc)),
                                Err(e) => return Err(format!("{} from {j}: {e}", s.lead)),
                            }
                        }
                        Ok(scores)
                    })
                    .collect()
            })
            .collect();
        (0..configs.len())
            .map(|c| {
                let mut m = AccuracyMatrix::new(self.leads.clone(), self.held_out.len());
                m.failures = self.training_failures.clone();
                for (&j, col) in self.current_leads.iter().zip(&columns) {
                    match &col[c] {
                        Ok(scores) => scores.iter().for_each(|&(i, s)| m.set(i, j, s)),
                        Err(e) => m.failures.push(e.clone()),
                    }
                }
                m
            })
            .collect()
    }
}

/// Runs the protocol once with `config.synthesis`.
pub fn accuracy_matrix<T: Real>(
    record: &MultiLeadRecord<T>,
    config: &ProtocolConfig,
) -> Result<AccuracyMatrix, MetricError> {
    let eval = Evaluation::prepare(record, config)?;
    Ok(eval.matrices(std::slice::from_ref(&config.synthesis)).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairChange {
    pub missing: LeadId,
    pub current: LeadId,
    pub before: Score,
    pub after: Score,
}

/// Lag-corrected against uncorrected synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub corrected: AccuracyMatrix,
    pub uncorrected: AccuracyMatrix,
    pub mean_delta_r2: f64,
    pub mean_delta_rho: f64,
    /// Pair with the lowest uncorrected ρ.
    pub worst_pair: Option<PairChange>,
    pub improved_pairs: usize,
    pub compared_pairs: usize,
}

impl ImprovementReport {
    pub fn from_matrices(corrected: AccuracyMatrix, uncorrected: AccuracyMatrix) -> Self {
        let mut changes = Vec::new();
        for (i, j, before) in uncorrected.off_diagonal() {
            if let Some(after) = corrected.get(i, j) {
                changes.push(PairChange {
                    missing: i,
                    current: j,
                    before,
                    after,
                });
            }
        }
        let d_r2: Vec<f64> = changes.iter().map(|c| c.after.r2 - c.before.r2).collect();
        let d_rho: Vec<f64> = changes.iter().map(|c| c.after.rho - c.before.rho).collect();
        let worst_pair = changes
            .iter()
            .min_by(|a, b| a.before.rho.total_cmp(&b.before.rho))
            .cloned();
        Self {
            improved_pairs: d_rho.iter().filter(|&&d| d > 0.0).count(),
            compared_pairs: changes.len(),
            mean_delta_r2: mean(&d_r2),
            mean_delta_rho: mean(&d_rho),
            worst_pair,
            corrected,
            uncorrected,
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let (c, u) = (self.corrected.rho_summary(), self.uncorrected.rho_summary());
        let (cr, ur) = (self.corrected.r2_summary(), self.uncorrected.r2_summary());
        let _ = writeln!(out, "| | R² mean | R² std | ρ mean | ρ std |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        let _ = writeln!(
            out,
            "| without lag correction | {:.3} | {:.3} | {:.3} | {:.3} |",
            ur.mean, ur.std, u.mean, u.std
        );
        let _ = writeln!(
            out,
            "| with lag correction | {:.3} | {:.3} | {:.3} | {:.3} |",
            cr.mean, cr.std, c.mean, c.std
        );
        let _ = writeln!(
            out,
            "\nmean ΔR² {:+.4}, mean Δρ {:+.4}; ρ improved in {} of {} pairs",
            self.mean_delta_r2, self.mean_delta_rho, self.improved_pairs, self.compared_pairs
        );
        if let Some(w) = &self.worst_pair {
            let _ = writeln!(
                out,
                "worst pair {} from {}: ρ {:.3} -> {:.3}, R² {:.3} -> {:.3}",
                w.missing, w.current, w.before.rho, w.after.rho, w.before.r2, w.after.r2
            );
        }
        out
    }
}

/// Evaluates the protocol with and without lag correction.
pub fn improvement_report<T: Real>(
    record: &MultiLeadRecord<T>,
    config: &ProtocolConfig,
) -> Result<ImprovementReport, MetricError> {
    let eval = Evaluation::prepare(record, config)?;
    let on = SynthesisConfig {
        lag_correction: true,
        ..config.synthesis.clone()
    };
    let off = SynthesisConfig {
        lag_correction: false,
        ..config.synthesis.clone()
    };
    let mut m = eval.matrices(&[on, off]);
    let uncorrected = m.pop().expect("two matrices");
    let corrected = m.pop().expect("two matrices");
    Ok(ImprovementReport::from_matrices(corrected, uncorrected))
}
