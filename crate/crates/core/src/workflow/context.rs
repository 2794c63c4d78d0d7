//! Per-run state threaded through a workflow's steps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StepError;
use crate::vasp::{write_incar, write_poscar, Capture, CrystalStructure, IncarDocument};

/// Result of an allow-listed command; a nonzero status is data, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutput {
    pub fn ok(stdout: impl Into<String>) -> Self {
        CommandOutput { status: 0, stdout: stdout.into(), stderr: String::new() }
    }

    pub fn failed(status: i32, stderr: impl Into<String>) -> Self {
        CommandOutput { status, stdout: String::new(), stderr: stderr.into() }
    }

    pub fn success(&self) -> bool {
        self.status == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Text(String),
    Structure(CrystalStructure),
    Incar(IncarDocument),
    Captures(BTreeMap<String, Capture>),
    Command(CommandOutput),
}

impl Value {
    /// Textual form used for prompt slots, file contents and path arguments.
    pub fn render(&self) -> String {
        match self {
            Value::Text(t) => t.clone(),
            Value::Structure(s) => write_poscar(s),
            Value::Incar(d) => write_incar(d),
            Value::Captures(c) => {
                let mut out = String::new();
                for (k, v) in c {
                    let v = match v {
                        Capture::Real(x) => format!("{x}"),
                        Capture::Int(i) => i.to_string(),
                        Capture::Text(t) => t.clone(),
                        Capture::Flag(b) => b.to_string(),
                    };
                    let _ = writeln!(out, "{k} = {v}");
                }
                out
            }
            Value::Command(c) => c.stdout.clone(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Structure(_) => "structure",
            Value::Incar(_) => "incar",
            Value::Captures(_) => "captures",
            Value::Command(_) => "command",
        }
    }

    pub fn as_captures(&self) -> Option<&BTreeMap<String, Capture>> {
        match self {
            Value::Captures(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_command(&self) -> Option<&CommandOutput> {
        match self {
            Value::Command(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_incar(&self) -> Option<&IncarDocument> {
        match self {
            Value::Incar(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum StepOutcome {
    Ok,
    Failed(String),
    /// Failed under `RecordAndContinue`; later steps still ran.
    Recorded(String),
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// 1-based position in the workflow.
    pub step: usize,
    pub component: String,
    pub output_key: String,
    pub outcome: StepOutcome,
    pub wall_time_ms: u64,
}

/// Join `rel` onto `root`, refusing absolute paths and any parent-directory component.
pub fn sandboxed_path(root: &Path, rel: &str) -> Result<PathBuf, StepError> {
    let p = Path::new(rel);
    if rel.is_empty() {
        return Err(StepError::PathEscape(rel.into()));
    }
    for c in p.components() {
        match c {
            Component::Normal(_) | Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => return Err(StepError::PathEscape(rel.into())),
        }
    }
    Ok(root.join(p))
}

#[derive(Debug, Clone)]
pub struct ExecutionContext {
    pub working_dir: PathBuf,
    values: BTreeMap<String, Value>,
    pub history: Vec<HistoryEntry>,
    /// Plain-language notes on calculations so far, rendered into `{state}`.
    pub simulation_state: Vec<String>,
}

impl ExecutionContext {
    pub fn new(working_dir: impl Into<PathBuf>) -> Self {
        ExecutionContext { working_dir: working_dir.into(), values: BTreeMap::new(), history: Vec::new(), simulation_state: Vec::new() }
    }

    /// Values are write-once.
    pub fn insert(&mut self, key: &str, value: Value) -> Result<(), StepError> {
        if self.values.contains_key(key) {
            return Err(StepError::ContextKeyExists(key.into()));
        }
        self.values.insert(key.into(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn into_values(self) -> BTreeMap<String, Value> {
        self.values
    }

    pub fn resolve(&self, rel: &str) -> Result<PathBuf, StepError> {
        sandboxed_path(&self.working_dir, rel)
    }

    pub fn state_text(&self) -> String {
        if self.simulation_state.is_empty() {
            "No calculations have been run yet in this task.".into()
        } else {
            self.simulation_state.join("\n")
        }
    }
}
