//! Scoring records and writing the machine report, the text summary and the
//! per-entry records.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, EntryOutcome, EntryRecord, Evidence, HarnessError, Labels, RunMode};
use crate::scoring::{
    aggregate_report, format_summary, score_ae, score_bs, score_sr, score_ts, AeItem, BenchmarkReport, BsItem, ScoringOptions, SoapBasis,
    SoapParams, SrItem, TsItem, REPORT_SCHEMA_VERSION,
};
use crate::vasp::parse_poscar;
use crate::workflow::TaskType;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const RECORDS_DIR: &str = "records";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub entry_id: String,
    pub task_type: TaskType,
    #[serde(flatten)]
    pub outcome: EntryOutcome,
    pub llm_calls: usize,
}

/// Contents of `report.json`. Nothing in it depends on timing or on the
/// number of workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineReport {
    pub schema_version: u32,
    pub mode: RunMode,
    pub scoring: ScoringOptions,
    pub scores: BenchmarkReport,
    pub entries: Vec<RecordSummary>,
}

impl MachineReport {
    pub fn new(scores: BenchmarkReport, records: &[EntryRecord], mode: RunMode, scoring: ScoringOptions) -> Self {
        let entries = records
            .iter()
            .map(|r| RecordSummary {
                entry_id: r.entry_id.clone(),
                task_type: r.task_type,
                outcome: r.outcome.clone(),
                llm_calls: r.llm_calls,
            })
            .collect();
        MachineReport { schema_version: REPORT_SCHEMA_VERSION, mode, scoring, scores, entries }
    }

    /// The task table followed by one row per entry.
    pub fn summary_text(&self) -> String {
        let mut out = format_summary(&self.scores);
        out.push_str("\nentry                 task  completion  accuracy  outcome\n");
        for t in &self.scores.tasks {
            for item in &t.items {
                let outcome = match self.entries.iter().find(|e| e.entry_id == item.id).map(|e| &e.outcome) {
                    Some(EntryOutcome::Completed) => "completed".to_string(),
                    Some(EntryOutcome::Failed { step: Some(s), .. }) => format!("failed at step {s}"),
                    Some(EntryOutcome::Failed { step: None, .. }) => "did not run".to_string(),
                    None => "-".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{:<20}  {:<4}  {:>10.2}  {:>8.2}  {outcome}",
                    item.id,
                    t.task_type.as_str(),
                    item.completion,
                    item.accuracy
                );
            }
        }
        out
    }
}

fn bad_record(r: &EntryRecord, reason: impl Into<String>) -> HarnessError {
    HarnessError::BadRecord { path: r.entry_id.clone(), reason: reason.into() }
}

/// Score every record; task types without records are left out of the report.
pub fn score_records(records: &[EntryRecord], opts: &ScoringOptions) -> Result<BenchmarkReport, HarnessError> {
    let mut sr = Vec::new();
    let mut bs = Vec::new();
    let mut ae = Vec::new();
    let mut ts = Vec::new();
    for r in records {
        if r.labels.task_type() != r.task_type {
            return Err(bad_record(r, format!("labels are for {}, record says {}", r.labels.task_type(), r.task_type)));
        }
        let id = r.entry_id.clone();
        match (&r.evidence, &r.labels) {
            (Evidence::Sr { converged, structure }, Labels::Sr { reference_structure }) => {
                let reference = parse_poscar(reference_structure).map_err(|e| bad_record(r, format!("reference structure: {e}")))?;
                // an unreadable CONTCAR scores like a missing one
                let predicted = structure.as_deref().and_then(|t| parse_poscar(t).ok());
                sr.push(SrItem { id, converged: *converged, predicted, reference });
            }
            (Evidence::Bs { completed, band_gap }, Labels::Bs { band_gap: truth }) => {
                bs.push(BsItem { id, completed: *completed, gap_pred: *band_gap, gap_true: *truth });
            }
            (Evidence::Ae { flags, adsorption_energy }, Labels::Ae { adsorption_energy: truth }) => {
                ae.push(AeItem { id, flags: *flags, e_ads_pred: *adsorption_energy, e_ads_true: *truth });
            }
            (Evidence::Ts { flags, barrier, reaction_energy }, Labels::Ts { barrier: b, reaction_energy: de }) => {
                ts.push(TsItem { id, flags: *flags, de_pred: *reaction_energy, de_true: *de, barrier_pred: *barrier, barrier_true: *b });
            }
            _ => return Err(bad_record(r, "evidence and labels belong to different task types")),
        }
    }
    let mut breakdowns = Vec::new();
    if !sr.is_empty() {
        let basis = SoapBasis::new(SoapParams::default()).map_err(crate::scoring::ScoreError::from)?;
        breakdowns.push(score_sr(&sr, &basis, opts)?);
    }
    if !bs.is_empty() {
        breakdowns.push(score_bs(&bs, opts)?);
    }
    if !ae.is_empty() {
        breakdowns.push(score_ae(&ae, opts)?);
    }
    if !ts.is_empty() {
        breakdowns.push(score_ts(&ts, opts)?);
    }
    Ok(aggregate_report(breakdowns)?)
}

/// Refuse to touch a directory that already holds a report unless asked to.
pub(crate) fn check_output(out_dir: &Path, overwrite: bool) -> Result<(), HarnessError> {
    if out_dir.join(REPORT_FILE).exists() && !overwrite {
        return Err(HarnessError::OutputExists(out_dir.display().to_string()));
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T, path: &Path) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| io_err(path, e))
}

/// Write `report.json`, `summary.txt` and `records/<id>.json` under `out_dir`.
pub fn emit_report(report: &MachineReport, records: &[EntryRecord], out_dir: &Path, overwrite: bool) -> Result<(), HarnessError> {
    check_output(out_dir, overwrite)?;
    let rec_dir = out_dir.join(RECORDS_DIR);
    if rec_dir.exists() {
        std::fs::remove_dir_all(&rec_dir).map_err(|e| io_err(&rec_dir, e))?;
    }
    std::fs::create_dir_all(&rec_dir).map_err(|e| io_err(&rec_dir, e))?;
    for r in records {
        let p = rec_dir.join(format!("{}.json", r.entry_id));
        std::fs::write(&p, to_json(r, &p)?).map_err(|e| io_err(&p, e))?;
    }
    let p = out_dir.join(SUMMARY_FILE);
    std::fs::write(&p, report.summary_text()).map_err(|e| io_err(&p, e))?;
    // the report goes last: its presence marks a finished run
    let p = out_dir.join(REPORT_FILE);
    std::fs::write(&p, to_json(report, &p)?).map_err(|e| io_err(&p, e))
}

/// Load the records a previous run wrote to `dir`, sorted by entry id.
pub fn read_records(dir: &Path) -> Result<Vec<EntryRecord>, HarnessError> {
    let mut records = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let p = e.map_err(|e| io_err(dir, e))?.path();
        if p.extension().and_then(|x| x.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let r: EntryRecord =
            serde_json::from_str(&text).map_err(|e| HarnessError::BadRecord { path: p.display().to_string(), reason: e.to_string() })?;
        records.push(r);
    }
    records.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
    Ok(records)
}
