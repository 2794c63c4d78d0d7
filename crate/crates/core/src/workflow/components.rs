//! The five step components and the allow-listed commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use super::context::{CommandOutput, ExecutionContext, Value};
use super::def::{parse_pattern_list, Binding, ComponentKind, WorkflowStep, ALLOWED_COMMANDS};
use super::StepError;
use crate::llm::{
    extract_answer, render_prompt, AnswerKind, LlmClient, LlmRequest, PromptError, PromptTemplate, SlotSource, TemplateLibrary,
};
use crate::sim::{neb_interpolate, NebError, SimBackend, SimStatus};
use crate::vasp::bandgap::format_gap_report;
use crate::vasp::{
    band_gap_from_eigenvalues, extract_outcar_summary, extract_quantities, parse_incar, parse_poscar, write_poscar, ExtractionPattern,
};

/// Runs one calculation directory. `Err` means the run crashed (signal,
/// failure to start); an unsuccessful but orderly run is a nonzero status.
/// Panics are caught by the caller and treated the same way.
pub trait Backend: Send + Sync {
    fn run(&self, dir: &Path) -> Result<CommandOutput, String>;
}

/// In-process toy backend.
#[derive(Debug, Clone, Default)]
pub struct SimulatedBackend {
    pub sim: SimBackend,
}

impl SimulatedBackend {
    pub fn new(sim: SimBackend) -> Self {
        SimulatedBackend { sim }
    }
}

/// Exit status for inputs the backend could not even read.
const INPUT_ERROR_STATUS: i32 = 4;

impl Backend for SimulatedBackend {
    fn run(&self, dir: &Path) -> Result<CommandOutput, String> {
        Ok(match self.sim.run_simulation(dir) {
            Ok(o) => {
                let mut stdout = format!("status = {:?}\n", o.status);
                if let Some(e) = o.energy_trace.last() {
                    let _ = writeln!(stdout, "ionic_steps = {}\nfinal_energy = {e:.8} eV", o.energy_trace.len());
                }
                if !o.message.is_empty() {
                    let _ = writeln!(stdout, "note = {}", o.message);
                }
                let stderr = match o.status {
                    SimStatus::ValidationFailed => {
                        o.validation.violations.iter().map(|v| format!("[{}] {}\n", v.rule_id, v.message)).collect()
                    }
                    SimStatus::Crashed => o.message.clone(),
                    _ => String::new(),
                };
                CommandOutput { status: o.status.exit_code(), stdout, stderr }
            }
            Err(e) => CommandOutput::failed(INPUT_ERROR_STATUS, e.to_string()),
        })
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into())
}

/// A real VASP-compatible executable, run with the calculation directory as cwd.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub program: String,
    pub args: Vec<String>,
}

impl Backend for ExternalBackend {
    fn run(&self, dir: &Path) -> Result<CommandOutput, String> {
        let out = std::process::Command::new(&self.program)
            .args(&self.args)
            .current_dir(dir)
            .output()
            .map_err(|e| format!("could not start {}: {e}", self.program))?;
        let status = out.status.code().ok_or_else(|| format!("{} was terminated by a signal", self.program))?;
        Ok(CommandOutput {
            status,
            stdout: String::from_utf8_lossy(&out.stdout).into(),
            stderr: String::from_utf8_lossy(&out.stderr).into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmOptions {
    pub temperature: f64,
    pub max_answer_length: usize,
    pub model: String,
}

impl Default for LlmOptions {
    fn default() -> Self {
        LlmOptions { temperature: 0.0, max_answer_length: crate::llm::DEFAULT_MAX_ANSWER_LENGTH, model: String::new() }
    }
}

/// Everything a step may call out to.
pub struct Services<'a> {
    pub llm: &'a dyn LlmClient,
    pub templates: &'a TemplateLibrary,
    pub backend: &'a dyn Backend,
    pub llm_options: LlmOptions,
}

impl Services<'_> {
    pub(crate) fn request(&self, template_id: &str, prompt: &str) -> LlmRequest {
        LlmRequest {
            template_id: template_id.into(),
            rendered_prompt: prompt.into(),
            temperature: self.llm_options.temperature,
            max_answer_length: self.llm_options.max_answer_length,
            provider_model: self.llm_options.model.clone(),
        }
    }
}

fn binding<'s>(step: &'s WorkflowStep, name: &str) -> Option<&'s Binding> {
    step.bindings.get(name)
}

fn resolve_value<'c>(ctx: &'c ExecutionContext, key: &str) -> Result<&'c Value, StepError> {
    ctx.get(key).ok_or_else(|| StepError::UnknownContextKey(key.into()))
}

fn text_arg(step: &WorkflowStep, name: &str, ctx: &ExecutionContext) -> Result<String, StepError> {
    match binding(step, name) {
        Some(Binding::Literal(s)) => Ok(s.clone()),
        Some(Binding::Key(k)) => Ok(resolve_value(ctx, k)?.render()),
        None => Err(StepError::MissingBinding(name.into())),
    }
}

fn opt_text_arg(step: &WorkflowStep, name: &str, ctx: &ExecutionContext) -> Result<Option<String>, StepError> {
    match binding(step, name) {
        None => Ok(None),
        Some(_) => text_arg(step, name, ctx).map(Some),
    }
}

fn read_sandboxed(ctx: &ExecutionContext, rel: &str) -> Result<String, StepError> {
    let p = ctx.resolve(rel)?;
    fs::read_to_string(&p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => StepError::NotFound(rel.into()),
        _ => StepError::Io(format!("{rel}: {e}")),
    })
}

fn write_sandboxed(ctx: &ExecutionContext, rel: &str, content: &str) -> Result<(), StepError> {
    let p = ctx.resolve(rel)?;
    if let Some(parent) = p.parent() {
        fs::create_dir_all(parent).map_err(|e| StepError::Io(format!("{rel}: {e}")))?;
    }
    fs::write(&p, content).map_err(|e| StepError::Io(format!("{rel}: {e}")))
}

/// Run one step. A command's nonzero status is returned as `Ok`; the engine
/// decides what it means.
pub fn run_step(step: &WorkflowStep, ctx: &ExecutionContext, svc: &Services) -> Result<Value, StepError> {
    match step.component {
        ComponentKind::ReadFile => read_file(step, ctx),
        ComponentKind::WriteFile => write_file(step, ctx),
        ComponentKind::Command => command(step, ctx, svc),
        ComponentKind::RegexExtractor => regex_extractor(step, ctx),
        ComponentKind::GetLLMAnswer => get_llm_answer(step, ctx, svc),
    }
}

fn read_file(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<Value, StepError> {
    let rel = text_arg(step, "path", ctx)?;
    read_sandboxed(ctx, &rel).map(Value::Text)
}

fn write_file(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<Value, StepError> {
    let rel = text_arg(step, "path", ctx)?;
    let content = text_arg(step, "content", ctx)?;
    write_sandboxed(ctx, &rel, &content)?;
    Ok(Value::Text(rel))
}

fn command(step: &WorkflowStep, ctx: &ExecutionContext, svc: &Services) -> Result<Value, StepError> {
    let name = match binding(step, "cmd") {
        Some(Binding::Literal(c)) => c.as_str(),
        Some(Binding::Key(k)) => return Err(StepError::DisallowedCommand(format!("${k}"))),
        None => return Err(StepError::MissingBinding("cmd".into())),
    };
    if !ALLOWED_COMMANDS.contains(&name) {
        return Err(StepError::DisallowedCommand(name.into()));
    }
    let out = match name {
        "noop" => CommandOutput::ok(""),
        "run_backend" => {
            let rel = opt_text_arg(step, "dir", ctx)?.unwrap_or_else(|| ".".into());
            let dir = ctx.resolve(&rel)?;
            if !dir.is_dir() {
                return Err(StepError::NotFound(rel));
            }
            catch_unwind(AssertUnwindSafe(|| svc.backend.run(&dir)))
                .map_err(|p| StepError::BackendCrash(format!("panic: {}", panic_text(&p))))?
                .map_err(StepError::BackendCrash)?
        }
        "neb_interpolate" => cmd_neb_interpolate(step, ctx)?,
        "band_gap" => cmd_band_gap(step, ctx)?,
        "nebef" => cmd_nebef(step, ctx)?,
        other => return Err(StepError::DisallowedCommand(other.into())),
    };
    Ok(Value::Command(out))
}

/// Number of interior images: a literal integer, or IMAGES from an INCAR value.
fn images_arg(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<usize, StepError> {
    let bad = |reason: &str| StepError::BadArgument { name: "images".into(), reason: reason.into() };
    let n = match binding(step, "images") {
        Some(Binding::Literal(s)) => s.trim().parse::<i64>().map_err(|_| bad("not an integer"))?,
        Some(Binding::Key(k)) => match resolve_value(ctx, k)? {
            Value::Incar(d) => d.get_i64("IMAGES").ok_or_else(|| bad("INCAR has no integer IMAGES tag"))?,
            other => other.render().trim().parse::<i64>().map_err(|_| bad("not an integer"))?,
        },
        None => return Err(StepError::MissingBinding("images".into())),
    };
    if n < 1 {
        return Err(bad("must be at least 1"));
    }
    Ok(n as usize)
}

fn parent_of(rel: &str) -> String {
    match Path::new(rel).parent().and_then(|p| p.to_str()) {
        Some("") | None => ".".into(),
        Some(p) => p.into(),
    }
}

/// Write `dir/00 .. dir/NN+1` POSCARs; endpoint OUTCARs are copied alongside
/// so the NEB run can check how the endpoints were relaxed.
fn cmd_neb_interpolate(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<CommandOutput, StepError> {
    let initial_rel = text_arg(step, "initial", ctx)?;
    let final_rel = text_arg(step, "final", ctx)?;
    let dir = text_arg(step, "dir", ctx)?;
    let n = images_arg(step, ctx)?;
    let parse = |rel: &str| -> Result<_, StepError> {
        parse_poscar(&read_sandboxed(ctx, rel)?).map_err(|e| StepError::BadArgument { name: rel.into(), reason: e.to_string() })
    };
    let (a, b) = (parse(&initial_rel)?, parse(&final_rel)?);
    let interior = match neb_interpolate(&a, &b, n) {
        Ok(v) => v,
        Err(e @ NebError::CellMismatch(_)) => return Ok(CommandOutput::failed(1, format!("[neb_cell_consistency] {e}\n"))),
        Err(e) => return Ok(CommandOutput::failed(1, format!("{e}\n"))),
    };
    let band = std::iter::once(&a).chain(&interior).chain(std::iter::once(&b));
    for (i, s) in band.enumerate() {
        write_sandboxed(ctx, &format!("{dir}/{i:02}/POSCAR"), &write_poscar(s))?;
    }
    for (src, i) in [(&initial_rel, 0), (&final_rel, n + 1)] {
        let outcar = format!("{}/OUTCAR", parent_of(src));
        if let Ok(text) = read_sandboxed(ctx, &outcar) {
            write_sandboxed(ctx, &format!("{dir}/{i:02}/OUTCAR"), &text)?;
        }
    }
    Ok(CommandOutput::ok(format!("interpolated {n} images between {initial_rel} and {final_rel} into {dir}\n")))
}

fn cmd_band_gap(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<CommandOutput, StepError> {
    let rel = text_arg(step, "outcar", ctx)?;
    let text = read_sandboxed(ctx, &rel)?;
    let gap = extract_outcar_summary(&text, &ExtractionPattern::summary_set()).and_then(|s| band_gap_from_eigenvalues(&s));
    Ok(match gap {
        Ok(g) => CommandOutput::ok(format_gap_report(&g)),
        Err(e) => CommandOutput::failed(1, format!("{rel}: {e}\n")),
    })
}

/// Energy profile along a finished band, read from the per-image OUTCARs.
fn cmd_nebef(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<CommandOutput, StepError> {
    let dir = text_arg(step, "dir", ctx)?;
    let mut energies = Vec::new();
    loop {
        let rel = format!("{dir}/{:02}/OUTCAR", energies.len());
        let text = match read_sandboxed(ctx, &rel) {
            Ok(t) => t,
            Err(StepError::NotFound(_)) => break,
            Err(e) => return Err(e),
        };
        match extract_quantities(&text, &[ExtractionPattern::toten()]) {
            Ok(found) => energies.push(found["toten"].as_f64().expect("toten is real")),
            Err(e) => return Ok(CommandOutput::failed(1, format!("{rel}: {e}\n"))),
        }
    }
    if energies.len() < 3 {
        return Ok(CommandOutput::failed(1, format!("{dir}: expected at least three image OUTCARs, found {}\n", energies.len())));
    }
    let e0 = energies[0];
    let mut out = String::new();
    for (i, e) in energies.iter().enumerate() {
        let _ = writeln!(out, "{i:>4} {e:>18.8} {:>16.8}", e - e0);
    }
    let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(out, "barrier = {:.8}", top - e0);
    let _ = writeln!(out, "reaction energy = {:.8}", energies[energies.len() - 1] - e0);
    Ok(CommandOutput::ok(out))
}

fn regex_extractor(step: &WorkflowStep, ctx: &ExecutionContext) -> Result<Value, StepError> {
    let source = text_arg(step, "source", ctx)?;
    let spec = match binding(step, "patterns") {
        Some(Binding::Literal(p)) => p,
        _ => return Err(StepError::BadArgument { name: "patterns".into(), reason: "must be a literal list".into() }),
    };
    let patterns = parse_pattern_list(spec).map_err(|reason| StepError::BadArgument { name: "patterns".into(), reason })?;
    Ok(Value::Captures(extract_quantities(&source, &patterns)?))
}

/// Slot lookup: step bindings, then context values, then `{state}`.
struct StepSlots<'a> {
    bindings: BTreeMap<String, String>,
    ctx: &'a ExecutionContext,
}

impl SlotSource for StepSlots<'_> {
    fn resolve_slot(&self, name: &str) -> Option<String> {
        if let Some(v) = self.bindings.get(name) {
            return Some(v.clone());
        }
        if let Some(v) = self.ctx.get(name) {
            return Some(v.render());
        }
        (name == "state").then(|| self.ctx.state_text())
    }
}

fn interpret_answer(raw: &str, tpl: &PromptTemplate) -> Result<Value, String> {
    let block = extract_answer(raw, tpl).map_err(|e| e.to_string())?;
    match tpl.answer_kind {
        AnswerKind::Incar => {
            let doc = parse_incar(&block).map_err(|e| format!("INCAR does not parse: {e}"))?;
            if doc.is_empty() {
                return Err("INCAR block contains no tags".into());
            }
            Ok(Value::Incar(doc))
        }
        AnswerKind::Text => {
            let t = block.trim();
            if t.is_empty() {
                return Err("answer block is empty".into());
            }
            Ok(Value::Text(t.to_string()))
        }
    }
}

pub(crate) fn correction_suffix(problem: &str) -> String {
    format!("\n\n## Correction\nYour previous answer could not be used: {problem}\nReply again, following the output format exactly.\n")
}

fn get_llm_answer(step: &WorkflowStep, ctx: &ExecutionContext, svc: &Services) -> Result<Value, StepError> {
    let template_id = match binding(step, "template") {
        Some(Binding::Literal(t)) => t.as_str(),
        _ => return Err(StepError::MissingBinding("template".into())),
    };
    let tpl = svc.templates.get(template_id).ok_or_else(|| StepError::UnknownTemplate(template_id.into()))?;
    let mut bindings = BTreeMap::new();
    for name in step.bindings.keys().filter(|k| *k != "template") {
        bindings.insert(name.clone(), text_arg(step, name, ctx)?);
    }
    let prompt = render_prompt(tpl, &StepSlots { bindings, ctx }).map_err(StepError::Prompt)?;

    let ask = |p: &str| svc.llm.complete(&svc.request(template_id, p)).map_err(|e| StepError::Provider(e.to_string()));
    let first = ask(&prompt)?;
    match interpret_answer(&first.text, tpl) {
        Ok(v) => Ok(v),
        Err(problem) => {
            let second = ask(&format!("{prompt}{}", correction_suffix(&problem)))?;
            interpret_answer(&second.text, tpl).map_err(StepError::FormatViolation)
        }
    }
}

impl From<PromptError> for StepError {
    fn from(e: PromptError) -> Self {
        StepError::Prompt(e)
    }
}
