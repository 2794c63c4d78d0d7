//! Workflow selection and execution.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::components::{correction_suffix, run_step, Services};
use super::context::{ExecutionContext, HistoryEntry, StepOutcome, Value};
use super::def::{Binding, ComponentKind, OnError, TaskType, WorkflowDef, WorkflowLibrary, WorkflowStep, REQUEST_KEY};
use super::{StepError, WorkflowError};
use crate::llm::{extract_answer, render_prompt};

/// Written into the working directory after every run.
pub const RUN_RECORD_FILE: &str = "run_record.json";
const SELECT_TEMPLATE: &str = "select_workflow";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskRequest {
    pub request_text: String,
    /// Input role (e.g. `POSCAR`) to file content.
    pub input_files: BTreeMap<String, String>,
    /// Skips LLM selection when set.
    pub task_hint: Option<TaskType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Failed { step: usize, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskResult {
    pub workflow_id: String,
    pub status: TaskStatus,
    pub outputs: BTreeMap<String, Value>,
    pub history: Vec<HistoryEntry>,
    pub simulation_state: Vec<String>,
    pub report_text: String,
}

impl TaskResult {
    pub fn completed(&self) -> bool {
        self.status == TaskStatus::Completed
    }

    /// Exit status of a command step's output, if that step produced one.
    pub fn command_status(&self, key: &str) -> Option<i32> {
        self.outputs.get(key).and_then(Value::as_command).map(|c| c.status)
    }
}

/// What the run leaves behind in its working directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord<'a> {
    pub workflow_id: &'a str,
    pub task_hint: Option<TaskType>,
    pub status: &'a TaskStatus,
    pub history: &'a [HistoryEntry],
    pub simulation_state: &'a [String],
    pub outputs: &'a BTreeMap<String, Value>,
}

fn word_regex(id: &str) -> Regex {
    Regex::new(&format!(r"(^|[^A-Za-z0-9_]){}($|[^A-Za-z0-9_])", regex::escape(id))).expect("escaped id")
}

/// The id an answer names: exact match first, else the single id appearing as a whole word.
fn match_answer<'l>(answer: &str, lib: &'l WorkflowLibrary) -> Option<&'l WorkflowDef> {
    let t = answer.trim().trim_matches(|c| c == '`' || c == '"' || c == '\'').trim();
    if let Some(w) = lib.get(t) {
        return Some(w);
    }
    let hits: Vec<&WorkflowDef> = lib.workflows.iter().filter(|w| word_regex(&w.id).is_match(answer)).collect();
    (hits.len() == 1).then(|| hits[0])
}

fn check_inputs(wf: &WorkflowDef, req: &TaskRequest) -> Result<(), WorkflowError> {
    let missing: Vec<String> = wf.required_inputs.iter().filter(|r| !req.input_files.contains_key(*r)).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(WorkflowError::MissingInputs { workflow: wf.id.clone(), missing })
    }
}

/// Pick a workflow for the request. A task hint decides without the LLM
/// (smallest id of that task type); otherwise one LLM call, one retry.
pub fn select_workflow<'l>(req: &TaskRequest, lib: &'l WorkflowLibrary, svc: &Services) -> Result<&'l WorkflowDef, WorkflowError> {
    let chosen = match req.task_hint {
        Some(hint) => lib
            .workflows
            .iter()
            .filter(|w| w.task_type == Some(hint))
            .min_by(|a, b| a.id.cmp(&b.id))
            .ok_or_else(|| WorkflowError::NoMatchingWorkflow { answer: format!("task hint {hint}") })?,
        None => select_by_llm(req, lib, svc)?,
    };
    check_inputs(chosen, req)?;
    Ok(chosen)
}

fn select_by_llm<'l>(req: &TaskRequest, lib: &'l WorkflowLibrary, svc: &Services) -> Result<&'l WorkflowDef, WorkflowError> {
    let tpl = svc.templates.get(SELECT_TEMPLATE).ok_or_else(|| {
        WorkflowError::Prompt(crate::llm::PromptError::InvalidTemplate { id: SELECT_TEMPLATE.into(), reason: "missing".into() })
    })?;
    let mut slots = BTreeMap::new();
    slots.insert("request".to_string(), req.request_text.clone());
    slots.insert("input_roles".to_string(), req.input_files.keys().cloned().collect::<Vec<_>>().join(", "));
    let mut listing = String::new();
    for w in &lib.workflows {
        let _ = writeln!(listing, "{}: {}", w.id, w.objective.replace('\n', " "));
    }
    slots.insert("workflows".to_string(), listing.trim_end().to_string());
    let prompt = render_prompt(tpl, &slots).map_err(WorkflowError::Prompt)?;

    let mut text = prompt.clone();
    let mut last = String::new();
    for _ in 0..2 {
        let resp = svc.llm.complete(&svc.request(SELECT_TEMPLATE, &text)).map_err(|e| WorkflowError::Provider(e.to_string()))?;
        let answer = extract_answer(&resp.text, tpl).unwrap_or_else(|_| resp.text.clone());
        if let Some(w) = match_answer(&answer, lib) {
            return Ok(w);
        }
        last = answer;
        text = format!("{prompt}{}", correction_suffix(&format!("{:?} does not name exactly one of the listed workflow ids", last.trim())));
    }
    Err(WorkflowError::NoMatchingWorkflow { answer: last })
}

/// Write each input role to its manifest paths and seed the context.
pub fn stage_inputs(wf: &WorkflowDef, req: &TaskRequest, ctx: &mut ExecutionContext) -> Result<(), WorkflowError> {
    check_inputs(wf, req)?;
    std::fs::create_dir_all(&ctx.working_dir).map_err(|e| WorkflowError::Io(format!("{}: {e}", ctx.working_dir.display())))?;
    ctx.insert(REQUEST_KEY, Value::Text(req.request_text.clone())).map_err(WorkflowError::Staging)?;
    for role in &wf.required_inputs {
        let content = &req.input_files[role];
        for rel in &wf.input_paths[role] {
            let p = ctx.resolve(rel).map_err(WorkflowError::Staging)?;
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| WorkflowError::Io(format!("{rel}: {e}")))?;
            }
            std::fs::write(&p, content).map_err(|e| WorkflowError::Io(format!("{rel}: {e}")))?;
        }
        ctx.insert(role, Value::Text(content.clone())).map_err(WorkflowError::Staging)?;
    }
    Ok(())
}

fn state_note(step_no: usize, step: &WorkflowStep, value: Option<&Value>, error: Option<&StepError>) -> Option<String> {
    let cmd = match step.bindings.get("cmd") {
        Some(Binding::Literal(c)) if step.component == ComponentKind::Command => c.as_str(),
        _ => "",
    };
    if let Some(e) = error {
        return Some(format!("Step {step_no} ({}) failed: {e}", step.component.as_str()));
    }
    if cmd != "run_backend" {
        return None;
    }
    let dir = match step.bindings.get("dir") {
        Some(Binding::Literal(d)) => d.as_str(),
        _ => ".",
    };
    let out = value?.as_command()?;
    let status = out.stdout.lines().next().unwrap_or("").trim();
    let energy = out.stdout.lines().find(|l| l.starts_with("final_energy")).map(|l| format!(", {}", l.trim())).unwrap_or_default();
    Some(format!("Step {step_no}: calculation in {dir} finished with exit status {} ({status}{energy})", out.status))
}

/// Run every step in order against `ctx`. Step failures end up in the
/// result; this never returns an error.
pub fn execute_workflow(wf: &WorkflowDef, mut ctx: ExecutionContext, svc: &Services) -> TaskResult {
    let mut status = TaskStatus::Completed;
    for (i, step) in wf.steps.iter().enumerate() {
        let step_no = i + 1;
        if status != TaskStatus::Completed {
            ctx.history.push(HistoryEntry {
                step: step_no,
                component: step.component.as_str().into(),
                output_key: step.output_key.clone(),
                outcome: StepOutcome::Skipped,
                wall_time_ms: 0,
            });
            continue;
        }
        let started = Instant::now();
        let result = run_step(step, &ctx, svc);
        let wall_time_ms = started.elapsed().as_millis() as u64;

        let (value, error) = match result {
            Ok(Value::Command(out)) if !out.success() => {
                let cmd = match step.bindings.get("cmd") {
                    Some(Binding::Literal(c)) => c.clone(),
                    _ => String::new(),
                };
                let detail = out.stderr.lines().next().unwrap_or("").trim().to_string();
                let err = StepError::NonZeroExit { cmd, status: out.status, detail };
                (Some(Value::Command(out)), Some(err))
            }
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        };
        if let Some(note) = state_note(step_no, step, value.as_ref(), error.as_ref()) {
            ctx.simulation_state.push(note);
        }
        let error = match value {
            Some(v) => ctx.insert(&step.output_key, v).err().or(error),
            None => error,
        };
        let outcome = match (&error, step.on_error) {
            (None, _) => StepOutcome::Ok,
            (Some(e), OnError::RecordAndContinue) => StepOutcome::Recorded(format!("{}: {e}", e.kind())),
            (Some(e), OnError::Abort) => {
                status = TaskStatus::Failed { step: step_no, error: format!("{}: {e}", e.kind()) };
                StepOutcome::Failed(format!("{}: {e}", e.kind()))
            }
        };
        log::debug!("workflow {} step {step_no} ({}) -> {outcome:?}", wf.id, step.component.as_str());
        ctx.history.push(HistoryEntry {
            step: step_no,
            component: step.component.as_str().into(),
            output_key: step.output_key.clone(),
            outcome,
            wall_time_ms,
        });
    }
    let report_text = report(wf, &status, &ctx);
    let history = std::mem::take(&mut ctx.history);
    let simulation_state = std::mem::take(&mut ctx.simulation_state);
    TaskResult { workflow_id: wf.id.clone(), status, outputs: ctx.into_values(), history, simulation_state, report_text }
}

fn report(wf: &WorkflowDef, status: &TaskStatus, ctx: &ExecutionContext) -> String {
    let mut out = format!("Workflow {}: ", wf.id);
    match status {
        TaskStatus::Completed => out.push_str("completed\n"),
        TaskStatus::Failed { step, error } => {
            let _ = writeln!(out, "failed at step {step} ({error})");
        }
    }
    for note in &ctx.simulation_state {
        let _ = writeln!(out, "  {note}");
    }
    for step in &wf.steps {
        if let Some(c) = ctx.get(&step.output_key).and_then(Value::as_captures) {
            for (k, v) in c {
                let _ = writeln!(out, "  {}.{k} = {}", step.output_key, serde_json::to_string(v).unwrap_or_default());
            }
        }
    }
    out
}

/// Select, stage, execute and record one task in `working_dir`.
pub fn run_task(req: &TaskRequest, lib: &WorkflowLibrary, svc: &Services, working_dir: &Path) -> Result<TaskResult, WorkflowError> {
    let wf = select_workflow(req, lib, svc)?;
    let mut ctx = ExecutionContext::new(working_dir);
    stage_inputs(wf, req, &mut ctx)?;
    let result = execute_workflow(wf, ctx, svc);
    let record = RunRecord {
        workflow_id: &result.workflow_id,
        task_hint: req.task_hint,
        status: &result.status,
        history: &result.history,
        simulation_state: &result.simulation_state,
        outputs: &result.outputs,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| WorkflowError::Io(e.to_string()))?;
    std::fs::write(working_dir.join(RUN_RECORD_FILE), json + "\n").map_err(|e| WorkflowError::Io(e.to_string()))?;
    Ok(result)
}
