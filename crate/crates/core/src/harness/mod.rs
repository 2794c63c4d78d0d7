//! Benchmark harness: loads a benchmark directory, runs each entry through the
//! workflow engine (or the single-prompt baseline), scores the records and
//! writes the reports.
//!
//! A benchmark directory holds one subdirectory per entry. The subdirectory
//! name is the entry id; its `entry.toml` names the task, the request text,
//! the input files by role and the reference labels:
//!
//! ```toml
//! task_type = "TS"
//! request = "Find the barrier for the adatom hop."
//!
//! [inputs]
//! POSCAR_initial = "initial.vasp"
//! POSCAR_final = "final.vasp"
//! POTCAR = "POTCAR"
//! KPOINTS = "KPOINTS"
//!
//! [labels]
//! barrier = 0.52
//! reaction_energy = -0.11
//! ```

mod report;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_records, score_records, MachineReport, RecordSummary, RECORDS_DIR, REPORT_FILE, SUMMARY_FILE};
pub use run::{run_benchmark, run_entry, BenchmarkRun, HarnessEnv, LlmSource, WORK_DIR};

use crate::scoring::{AeCompletionFlags, ScoreError, ScoringOptions, TsCompletionFlags};
use crate::workflow::TaskType;

pub const ENTRY_MANIFEST: &str = "entry.toml";
/// Version of the per-entry record layout.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Input roles every entry of a task type must provide.
pub fn required_roles(task: TaskType) -> &'static [&'static str] {
    match task {
        TaskType::SR | TaskType::BS => &["POSCAR", "POTCAR", "KPOINTS"],
        TaskType::AE => &["POSCAR_gas", "POSCAR_surface", "POSCAR_adsorbed", "POTCAR", "KPOINTS"],
        TaskType::TS => &["POSCAR_initial", "POSCAR_final", "POTCAR", "KPOINTS"],
    }
}

/// Reference values an entry is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Labels {
    /// POSCAR text of the reference relaxed structure.
    Sr {
        reference_structure: String,
    },
    Bs {
        band_gap: f64,
    },
    Ae {
        adsorption_energy: f64,
    },
    Ts {
        barrier: f64,
        reaction_energy: f64,
    },
}

impl Labels {
    pub fn task_type(&self) -> TaskType {
        match self {
            Labels::Sr { .. } => TaskType::SR,
            Labels::Bs { .. } => TaskType::BS,
            Labels::Ae { .. } => TaskType::AE,
            Labels::Ts { .. } => TaskType::TS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEntry {
    pub id: String,
    pub task_type: TaskType,
    pub request: String,
    /// Role to absolute path of the file supplying it.
    pub input_files: BTreeMap<String, PathBuf>,
    pub labels: Labels,
}

/// An entry that was skipped while loading; the rest of the benchmark still runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    ManifestParseError { entry: String, reason: String },
    MissingRole { entry: String, role: String },
    MissingInputFile { entry: String, role: String, path: String },
    BadLabel { entry: String, reason: String },
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::ManifestParseError { entry, reason } => write!(f, "{entry}: manifest does not parse: {reason}"),
            LoadWarning::MissingRole { entry, role } => write!(f, "{entry}: required input role {role} is not listed"),
            LoadWarning::MissingInputFile { entry, role, path } => {
                write!(f, "{entry}: input {role} points at {path}, which does not exist")
            }
            LoadWarning::BadLabel { entry, reason } => write!(f, "{entry}: labels: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Sorted by id.
    pub entries: Vec<BenchmarkEntry>,
    pub warnings: Vec<LoadWarning>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("benchmark directory {0} contains no usable entries")]
    EmptyBenchmark(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("output directory {0} already holds a report; pass the overwrite flag to replace it")]
    OutputExists(String),
    #[error("record {path}: {reason}")]
    BadRecord { path: String, reason: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub(crate) fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), reason: e.to_string() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryManifest {
    task_type: String,
    request: String,
    inputs: BTreeMap<String, String>,
    labels: BTreeMap<String, toml::Value>,
}

fn number(labels: &BTreeMap<String, toml::Value>, key: &str) -> Result<f64, String> {
    match labels.get(key) {
        Some(toml::Value::Float(x)) if x.is_finite() => Ok(*x),
        Some(toml::Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(format!("{key} must be a finite number, got {other}")),
        None => Err(format!("{key} is missing")),
    }
}

fn parse_labels(task: TaskType, labels: &BTreeMap<String, toml::Value>, dir: &Path) -> Result<Labels, String> {
    Ok(match task {
        TaskType::SR => {
            let rel = match labels.get("reference_structure") {
                Some(toml::Value::String(s)) => s,
                _ => return Err("reference_structure must name a POSCAR file".into()),
            };
            let path = dir.join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            crate::vasp::parse_poscar(&text).map_err(|e| format!("{rel}: {e}"))?;
            Labels::Sr { reference_structure: text }
        }
        TaskType::BS => Labels::Bs { band_gap: number(labels, "band_gap")? },
        TaskType::AE => Labels::Ae { adsorption_energy: number(labels, "adsorption_energy")? },
        TaskType::TS => Labels::Ts { barrier: number(labels, "barrier")?, reaction_energy: number(labels, "reaction_energy")? },
    })
}

fn load_entry(id: &str, dir: &Path) -> Result<BenchmarkEntry, LoadWarning> {
    let parse_err = |reason: String| LoadWarning::ManifestParseError { entry: id.into(), reason };
    let text = std::fs::read_to_string(dir.join(ENTRY_MANIFEST)).map_err(|e| parse_err(e.to_string()))?;
    let m: EntryManifest = toml::from_str(&text).map_err(|e| parse_err(e.message().to_string()))?;
    let task = TaskType::parse(&m.task_type).ok_or_else(|| parse_err(format!("unknown task type {:?}", m.task_type)))?;
    let mut input_files = BTreeMap::new();
    for role in required_roles(task) {
        let rel = m.inputs.get(*role).ok_or_else(|| LoadWarning::MissingRole { entry: id.into(), role: role.to_string() })?;
        let path = dir.join(rel);
        if !path.is_file() {
            return Err(LoadWarning::MissingInputFile { entry: id.into(), role: role.to_string(), path: rel.clone() });
        }
        input_files.insert(role.to_string(), path);
    }
    let labels = parse_labels(task, &m.labels, dir).map_err(|reason| LoadWarning::BadLabel { entry: id.into(), reason })?;
    Ok(BenchmarkEntry { id: id.into(), task_type: task, request: m.request, input_files, labels })
}

/// Read every entry under `dir`. Broken entries become warnings; only a
/// benchmark with no usable entry at all is an error.
pub fn load_benchmark(dir: &Path) -> Result<Benchmark, HarnessError> {
    let mut subdirs = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let e = e.map_err(|e| io_err(dir, e))?;
        if e.path().is_dir() {
            if let Some(name) = e.file_name().to_str() {
                subdirs.push(name.to_string());
            }
        }
    }
    subdirs.sort();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for id in subdirs {
        let sub = dir.join(&id);
        if !sub.join(ENTRY_MANIFEST).is_file() {
            continue;
        }
        match load_entry(&id, &sub) {
            Ok(entry) => entries.push(entry),
            Err(w) => {
                log::warn!("skipping benchmark entry: {w}");
                warnings.push(w);
            }
        }
    }
    if entries.is_empty() {
        return Err(HarnessError::EmptyBenchmark(dir.display().to_string()));
    }
    Ok(Benchmark { entries, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Agent,
    /// One monolithic prompt per entry, no decomposition, no retry.
    NoAgent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// `None` runs every task type.
    pub tasks: Option<Vec<TaskType>>,
    /// Worker threads; 0 is treated as 1.
    pub parallelism: usize,
    pub mode: RunMode,
    pub overwrite: bool,
    pub scoring: ScoringOptions,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            out_dir: out_dir.into(),
            tasks: None,
            parallelism: 1,
            mode: RunMode::Agent,
            overwrite: false,
            scoring: ScoringOptions::default(),
        }
    }

    fn selects(&self, t: TaskType) -> bool {
        self.tasks.as_ref().is_none_or(|ts| ts.contains(&t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryOutcome {
    Completed,
    /// `step` is 1-based within the executed workflow; `None` when the run never got to a step.
    Failed {
        step: Option<usize>,
        error: String,
    },
}

/// What a run produced, in the shape scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Evidence {
    Sr { converged: bool, structure: Option<String> },
    Bs { completed: bool, band_gap: Option<f64> },
    Ae { flags: AeCompletionFlags, adsorption_energy: Option<f64> },
    Ts { flags: TsCompletionFlags, barrier: Option<f64>, reaction_energy: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub component: String,
    pub output_key: String,
    pub outcome: String,
}

/// Everything about one entry's run that scoring and reporting read.
/// Wall-clock times stay in the working directory so records are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub schema_version: u32,
    pub entry_id: String,
    pub task_type: TaskType,
    pub mode: RunMode,
    pub workflow_id: Option<String>,
    pub outcome: EntryOutcome,
    pub steps: Vec<StepRecord>,
    /// Exit status of every command step that produced one.
    pub command_status: BTreeMap<String, i32>,
    pub simulation_state: Vec<String>,
    pub llm_calls: usize,
    pub evidence: Evidence,
    pub labels: Labels,
}
