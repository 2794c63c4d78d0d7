//! Benchmark scoring: per-task completion and accuracy points on 100-point
//! scales, and their aggregation.
//!
//! Item weights scale with the item count `n` so any subset scores on the same
//! 0-100 range as the full benchmark (40 SR, 24 BS, 10 AE, 6 TS items).

pub mod soap;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use soap::{soap_descriptor, soap_similarity, structure_similarity, SoapBasis, SoapError, SoapParams, SoapVector};

use crate::vasp::CrystalStructure;
use crate::workflow::TaskType;

/// Version of the machine-readable report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Relative-error gate of the optional strict TS mode.
pub const TS_STRICT_RE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Soap(#[from] SoapError),
    #[error("more than one breakdown for task {0}")]
    DuplicateTaskType(TaskType),
}

/// `min(|pred|, |truth|) / max(|pred|, |truth|)`; both zero scores 1, exactly one zero scores 0.
pub fn ratio_score(pred: f64, truth: f64) -> Result<f64, ScoreError> {
    for v in [pred, truth] {
        if !v.is_finite() {
            return Err(ScoreError::NonFinite(v));
        }
    }
    let (a, b) = (pred.abs(), truth.abs());
    Ok(match (a == 0.0, b == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => a.min(b) / a.max(b),
    })
}

/// `|pred - truth| / |truth|`; undefined for a zero truth unless the prediction is zero too.
pub fn relative_error(pred: f64, truth: f64) -> Option<f64> {
    if truth == 0.0 {
        (pred == 0.0).then_some(0.0)
    } else {
        Some((pred - truth).abs() / truth.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Zero a TS accuracy term whose relative error exceeds [`TS_STRICT_RE`].
    pub ts_strict_gate: bool,
    /// Zero accuracy for items that did not earn full completion points.
    pub couple_accuracy_to_completion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    /// Points after the task's rescale factor.
    pub completion: f64,
    pub accuracy: f64,
    /// Largest attainable value of either column for this item.
    pub max_points: f64,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub task_type: TaskType,
    pub items: Vec<ItemScore>,
    pub completion_total: f64,
    pub accuracy_total: f64,
}

impl ScoreBreakdown {
    fn from_items(task_type: TaskType, items: Vec<ItemScore>) -> Self {
        let completion_total = items.iter().map(|i| i.completion).sum();
        let accuracy_total = items.iter().map(|i| i.accuracy).sum();
        ScoreBreakdown { task_type, items, completion_total, accuracy_total }
    }
}

fn couple(opts: &ScoringOptions, completion: f64, max: f64, accuracy: f64) -> f64 {
    if opts.couple_accuracy_to_completion && completion < max {
        0.0
    } else {
        accuracy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrItem {
    pub id: String,
    pub converged: bool,
    /// `None` when the run produced no structure.
    pub predicted: Option<CrystalStructure>,
    pub reference: CrystalStructure,
}

pub fn score_sr(items: &[SrItem], basis: &SoapBasis, opts: &ScoringOptions) -> Result<ScoreBreakdown, ScoreError> {
    let w = 100.0 / items.len().max(1) as f64;
    let scored = items
        .iter()
        .map(|it| {
            let completion = if it.converged { w } else { 0.0 };
            let similarity = match &it.predicted {
                Some(p) => structure_similarity(p, &it.reference, basis)?,
                None => 0.0,
            };
            Ok(ItemScore {
                id: it.id.clone(),
                completion,
                accuracy: couple(opts, completion, w, w * similarity),
                max_points: w,
                relative_error: None,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(ScoreBreakdown::from_items(TaskType::SR, scored))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsItem {
    pub id: String,
    pub completed: bool,
    /// eV
    pub gap_pred: Option<f64>,
    pub gap_true: f64,
}

pub fn score_bs(items: &[BsItem], opts: &ScoringOptions) -> Result<ScoreBreakdown, ScoreError> {
    let w = 100.0 / items.len().max(1) as f64;
    let scored = items
        .iter()
        .map(|it| {
            let completion = if it.completed { w } else { 0.0 };
            let (ratio, re) = match it.gap_pred {
                Some(p) => (ratio_score(p, it.gap_true)?, relative_error(p, it.gap_true)),
                None => (0.0, None),
            };
            Ok(ItemScore {
                id: it.id.clone(),
                completion,
                accuracy: couple(opts, completion, w, w * ratio),
                max_points: w,
                relative_error: re,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(ScoreBreakdown::from_items(TaskType::BS, scored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AeCompletionFlags {
    pub co_relaxed: bool,
    pub surface_relaxed: bool,
    pub adsorbed_relaxed: bool,
}

impl AeCompletionFlags {
    pub fn points(&self) -> f64 {
        2.0 * self.co_relaxed as u8 as f64 + 3.0 * self.surface_relaxed as u8 as f64 + 5.0 * self.adsorbed_relaxed as u8 as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeItem {
    pub id: String,
    pub flags: AeCompletionFlags,
    /// eV
    pub e_ads_pred: Option<f64>,
    pub e_ads_true: f64,
}

pub fn score_ae(items: &[AeItem], opts: &ScoringOptions) -> Result<ScoreBreakdown, ScoreError> {
    // 10 raw points per item; 10 items make 100
    let scale = 10.0 / items.len().max(1) as f64;
    let scored = items
        .iter()
        .map(|it| {
            let (ratio, re) = match it.e_ads_pred {
                Some(p) => (ratio_score(p, it.e_ads_true)?, relative_error(p, it.e_ads_true)),
                None => (0.0, None),
            };
            let completion = scale * it.flags.points();
            let max = scale * 10.0;
            Ok(ItemScore {
                id: it.id.clone(),
                completion,
                accuracy: couple(opts, completion, max, scale * 10.0 * ratio),
                max_points: max,
                relative_error: re,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(ScoreBreakdown::from_items(TaskType::AE, scored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TsCompletionFlags {
    pub is_done: bool,
    pub fs_done: bool,
    pub interp_done: bool,
    pub neb_converged: bool,
}

impl TsCompletionFlags {
    pub fn points(&self) -> f64 {
        self.is_done as u8 as f64 + self.fs_done as u8 as f64 + 2.0 * self.interp_done as u8 as f64 + 6.0 * self.neb_converged as u8 as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsItem {
    pub id: String,
    pub flags: TsCompletionFlags,
    /// Reaction energy, eV.
    pub de_pred: Option<f64>,
    pub de_true: f64,
    /// eV
    pub barrier_pred: Option<f64>,
    pub barrier_true: f64,
}

pub fn score_ts(items: &[TsItem], opts: &ScoringOptions) -> Result<ScoreBreakdown, ScoreError> {
    // 10 raw points per item, rescaled so the whole task is worth 100 (10/6 for 6 items)
    let scale = 100.0 / (10.0 * items.len().max(1) as f64);
    let term = |pred: Option<f64>, truth: f64| -> Result<f64, ScoreError> {
        let Some(p) = pred else { return Ok(0.0) };
        let r = ratio_score(p, truth)?;
        let gated = opts.ts_strict_gate && relative_error(p, truth).is_none_or(|re| re > TS_STRICT_RE);
        Ok(if gated { 0.0 } else { r })
    };
    let scored = items
        .iter()
        .map(|it| {
            let raw_acc = 2.0 * term(it.de_pred, it.de_true)? + 8.0 * term(it.barrier_pred, it.barrier_true)?;
            let completion = scale * it.flags.points();
            let max = scale * 10.0;
            let re = it.barrier_pred.and_then(|p| relative_error(p, it.barrier_true));
            Ok(ItemScore {
                id: it.id.clone(),
                completion,
                accuracy: couple(opts, completion, max, scale * raw_acc),
                max_points: max,
                relative_error: re,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(ScoreBreakdown::from_items(TaskType::TS, scored))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    /// Ordered SR, BS, AE, TS.
    pub tasks: Vec<ScoreBreakdown>,
    pub overall_completion: f64,
    pub overall_accuracy: f64,
}

/// Unweighted means of the per-task totals.
pub fn aggregate_report(breakdowns: Vec<ScoreBreakdown>) -> Result<BenchmarkReport, ScoreError> {
    let mut tasks = breakdowns;
    tasks.sort_by_key(|b| b.task_type);
    if let Some(w) = tasks.windows(2).find(|w| w[0].task_type == w[1].task_type) {
        return Err(ScoreError::DuplicateTaskType(w[0].task_type));
    }
    let n = tasks.len().max(1) as f64;
    let overall_completion = tasks.iter().map(|t| t.completion_total).sum::<f64>() / n;
    let overall_accuracy = tasks.iter().map(|t| t.accuracy_total).sum::<f64>() / n;
    Ok(BenchmarkReport { schema_version: REPORT_SCHEMA_VERSION, tasks, overall_completion, overall_accuracy })
}

/// Plain-text table: one row per task, then the overall means.
pub fn format_summary(report: &BenchmarkReport) -> String {
    let mut out = String::from("task  items  completion  accuracy\n");
    for t in &report.tasks {
        let _ = writeln!(out, "{:<4}  {:>5}  {:>10.2}  {:>8.2}", t.task_type.as_str(), t.items.len(), t.completion_total, t.accuracy_total);
    }
    let _ = writeln!(
        out,
        "{:<4}  {:>5}  {:>10.2}  {:>8.2}",
        "all",
        report.tasks.iter().map(|t| t.items.len()).sum::<usize>(),
        report.overall_completion,
        report.overall_accuracy
    );
    out
}
