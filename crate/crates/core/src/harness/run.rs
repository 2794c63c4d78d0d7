//! Running entries: the agent path through `run_task`, the single-prompt
//! baseline, and the parallel benchmark driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use super::report::{check_output, emit_report, score_records, MachineReport};
use super::{
    io_err, Benchmark, BenchmarkEntry, EntryOutcome, EntryRecord, Evidence, HarnessError, RunConfig, RunMode, StepRecord,
    RECORD_SCHEMA_VERSION,
};
use crate::llm::{extract_answer, render_prompt, LlmClient, LlmError, LlmRequest, LlmResponse, MockScript, TemplateLibrary};
use crate::scoring::{AeCompletionFlags, TsCompletionFlags};
use crate::sim::SimBackend;
use crate::vasp::parse_incar;
use crate::workflow::{
    execute_workflow, run_task, select_workflow, stage_inputs, Backend, ComponentKind, ExecutionContext, LlmOptions, Services,
    SimulatedBackend, StepOutcome, TaskRequest, TaskResult, TaskStatus, TaskType, Value, WorkflowLibrary,
};

/// Per-entry working directories live under `<out>/work/<entry id>`.
pub const WORK_DIR: &str = "work";
const NO_AGENT_TEMPLATE: &str = "no_agent";

/// Where each entry's LLM client comes from.
#[derive(Clone)]
pub enum LlmSource {
    /// Every entry replays the script from its first invocation, so results
    /// do not depend on the order entries run in.
    Mock(Arc<MockScript>),
    Shared(Arc<dyn LlmClient>),
}

impl LlmSource {
    fn client(&self) -> Box<dyn LlmClient> {
        match self {
            LlmSource::Mock(script) => Box::new(script.session()),
            LlmSource::Shared(c) => Box::new(Arc::clone(c)),
        }
    }
}

/// The fixed collaborators of a benchmark run.
pub struct HarnessEnv {
    pub llm: LlmSource,
    pub backend: Arc<dyn Backend>,
    pub templates: TemplateLibrary,
    pub workflows: WorkflowLibrary,
    pub llm_options: LlmOptions,
}

impl HarnessEnv {
    /// Bundled templates and workflows on the simulated backend.
    pub fn simulated(llm: LlmSource) -> Self {
        HarnessEnv {
            llm,
            backend: Arc::new(SimulatedBackend::new(SimBackend::builtin())),
            templates: TemplateLibrary::builtin(),
            workflows: WorkflowLibrary::builtin(),
            llm_options: LlmOptions::default(),
        }
    }
}

struct Counting<'a> {
    inner: &'a dyn LlmClient,
    calls: AtomicUsize,
}

impl LlmClient for Counting<'_> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(req)
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into())
}

fn task_request(entry: &BenchmarkEntry) -> Result<TaskRequest, String> {
    let mut input_files = BTreeMap::new();
    for (role, path) in &entry.input_files {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        input_files.insert(role.clone(), text);
    }
    Ok(TaskRequest { request_text: entry.request.clone(), input_files, task_hint: Some(entry.task_type) })
}

/// One prompt carrying the request and every input file; the deck that comes
/// back is used for every calculation the task needs. No format retry.
fn run_no_agent(req: &TaskRequest, env: &HarnessEnv, svc: &Services, work_dir: &Path) -> Result<TaskResult, String> {
    let wf = select_workflow(req, &env.workflows, svc).map_err(|e| e.to_string())?;
    let mut ctx = ExecutionContext::new(work_dir);
    stage_inputs(wf, req, &mut ctx).map_err(|e| e.to_string())?;

    let tpl = env.templates.get(NO_AGENT_TEMPLATE).ok_or_else(|| format!("template {NO_AGENT_TEMPLATE} is missing"))?;
    let mut listing = String::new();
    for (role, text) in &req.input_files {
        let _ = writeln!(listing, "--- {role} ---\n{}", text.trim_end());
    }
    let slots: BTreeMap<String, String> = [("request".to_string(), req.request_text.clone()), ("inputs".to_string(), listing)].into();
    let prompt = render_prompt(tpl, &slots).map_err(|e| e.to_string())?;
    let failed = |error: String| TaskResult {
        workflow_id: wf.id.clone(),
        status: TaskStatus::Failed { step: 0, error },
        outputs: BTreeMap::new(),
        history: Vec::new(),
        simulation_state: Vec::new(),
        report_text: String::new(),
    };
    let resp = match svc.llm.complete(&svc.request(NO_AGENT_TEMPLATE, &prompt)) {
        Ok(r) => r,
        Err(e) => return Ok(failed(format!("ProviderError: {e}"))),
    };
    let deck = match extract_answer(&resp.text, tpl).map_err(|e| e.to_string()).and_then(|b| parse_incar(&b).map_err(|e| e.to_string())) {
        Ok(d) if !d.is_empty() => d,
        Ok(_) => return Ok(failed("FormatViolation: INCAR block contains no tags".into())),
        Err(e) => return Ok(failed(format!("FormatViolation: {e}"))),
    };

    let mut reduced = wf.clone();
    for step in reduced.steps.iter().filter(|s| s.component == ComponentKind::GetLLMAnswer) {
        ctx.insert(&step.output_key, Value::Incar(deck.clone())).map_err(|e| e.to_string())?;
    }
    reduced.steps.retain(|s| s.component != ComponentKind::GetLLMAnswer);
    Ok(execute_workflow(&reduced, ctx, svc))
}

fn capture(result: &TaskResult, key: &str, name: &str) -> Option<f64> {
    result.outputs.get(key)?.as_captures()?.get(name)?.as_f64()
}

fn ok(result: Option<&TaskResult>, key: &str) -> bool {
    result.and_then(|r| r.command_status(key)) == Some(0)
}

/// Completion flags and predictions, read from the fixed output keys of the
/// bundled workflows.
fn evidence(task: TaskType, result: Option<&TaskResult>) -> Evidence {
    let cap = |key: &str, name: &str| result.and_then(|r| capture(r, key, name));
    match task {
        TaskType::SR => {
            Evidence::Sr { converged: ok(result, "relax_run"), structure: result.and_then(|r| r.outputs.get("contcar")).map(Value::render) }
        }
        TaskType::BS => Evidence::Bs { completed: ok(result, "bands_run"), band_gap: cap("gap", "band_gap") },
        TaskType::AE => {
            let flags = AeCompletionFlags {
                co_relaxed: ok(result, "gas_run"),
                surface_relaxed: ok(result, "surface_run"),
                adsorbed_relaxed: ok(result, "adsorbed_run"),
            };
            let e = |k: &str| cap(k, "toten");
            let adsorption_energy = match (e("adsorbed_energy"), e("surface_energy"), e("gas_energy")) {
                (Some(ads), Some(surf), Some(gas)) => Some(ads - surf - gas),
                _ => None,
            };
            Evidence::Ae { flags, adsorption_energy }
        }
        TaskType::TS => Evidence::Ts {
            flags: TsCompletionFlags {
                is_done: ok(result, "is_run"),
                fs_done: ok(result, "fs_run"),
                interp_done: ok(result, "interpolation"),
                neb_converged: ok(result, "neb_run"),
            },
            barrier: cap("neb_energies", "barrier"),
            reaction_energy: cap("neb_energies", "reaction_energy"),
        },
    }
}

fn outcome_text(o: &StepOutcome) -> String {
    match o {
        StepOutcome::Ok => "ok".into(),
        StepOutcome::Skipped => "skipped".into(),
        StepOutcome::Recorded(m) => format!("recorded: {m}"),
        StepOutcome::Failed(m) => format!("failed: {m}"),
    }
}

/// Run one entry in `work_dir`. Every failure, including a panic anywhere in
/// the run, ends up in the record.
pub fn run_entry(entry: &BenchmarkEntry, env: &HarnessEnv, mode: RunMode, work_dir: &Path) -> EntryRecord {
    let client = env.llm.client();
    let counting = Counting { inner: &*client, calls: AtomicUsize::new(0) };
    let svc = Services { llm: &counting, templates: &env.templates, backend: &*env.backend, llm_options: env.llm_options.clone() };
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<TaskResult, String> {
        let req = task_request(entry)?;
        match mode {
            RunMode::Agent => run_task(&req, &env.workflows, &svc, work_dir).map_err(|e| e.to_string()),
            RunMode::NoAgent => run_no_agent(&req, env, &svc, work_dir),
        }
    }));
    let result = match attempt {
        Ok(r) => r,
        Err(p) => Err(format!("panic: {}", panic_text(&p))),
    };
    if let Err(e) = &result {
        log::warn!("entry {} did not run: {e}", entry.id);
    }
    let r = result.as_ref().ok();
    let outcome = match (&result, r.map(|r| &r.status)) {
        (Err(e), _) => EntryOutcome::Failed { step: None, error: e.clone() },
        (_, Some(TaskStatus::Completed)) => EntryOutcome::Completed,
        (_, Some(TaskStatus::Failed { step, error })) => EntryOutcome::Failed { step: (*step > 0).then_some(*step), error: error.clone() },
        (Ok(_), None) => unreachable!("an Ok result has a status"),
    };
    EntryRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        entry_id: entry.id.clone(),
        task_type: entry.task_type,
        mode,
        workflow_id: r.map(|r| r.workflow_id.clone()),
        outcome,
        steps: r
            .map(|r| {
                r.history
                    .iter()
                    .map(|h| StepRecord {
                        step: h.step,
                        component: h.component.clone(),
                        output_key: h.output_key.clone(),
                        outcome: outcome_text(&h.outcome),
                    })
                    .collect()
            })
            .unwrap_or_default(),
        command_status: r
            .map(|r| r.outputs.iter().filter_map(|(k, v)| v.as_command().map(|c| (k.clone(), c.status))).collect())
            .unwrap_or_default(),
        simulation_state: r.map(|r| r.simulation_state.clone()).unwrap_or_default(),
        llm_calls: counting.calls.load(Ordering::Relaxed),
        evidence: evidence(entry.task_type, r),
        labels: entry.labels.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: MachineReport,
    /// Sorted by entry id.
    pub records: Vec<EntryRecord>,
}

/// Run the selected entries on `cfg.parallelism` workers, score them and write
/// the report files. Errors are infrastructure failures only; task failures
/// are scored.
pub fn run_benchmark(bench: &Benchmark, env: &HarnessEnv, cfg: &RunConfig) -> Result<BenchmarkRun, HarnessError> {
    check_output(&cfg.out_dir, cfg.overwrite)?;
    let work = cfg.out_dir.join(WORK_DIR);
    if work.exists() {
        std::fs::remove_dir_all(&work).map_err(|e| io_err(&work, e))?;
    }
    std::fs::create_dir_all(&work).map_err(|e| io_err(&work, e))?;

    let selected: Vec<&BenchmarkEntry> = bench.entries.iter().filter(|e| cfg.selects(e.task_type)).collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism.max(1)).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut records: Vec<EntryRecord> =
        pool.install(|| selected.par_iter().map(|e| run_entry(e, env, cfg.mode, &work.join(&e.id))).collect());
    records.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));

    let scores = score_records(&records, &cfg.scoring)?;
    let report = MachineReport::new(scores, &records, cfg.mode, cfg.scoring);
    emit_report(&report, &records, &cfg.out_dir, cfg.overwrite)?;
    Ok(BenchmarkRun { report, records })
}
