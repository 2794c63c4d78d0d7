//! Declarative workflows: manifests, the per-run context, the five step
//! components and the engine that runs them.

pub mod components;
pub mod context;
pub mod def;
pub mod engine;

pub use components::{Backend, ExternalBackend, LlmOptions, Services, SimulatedBackend};
pub use context::{sandboxed_path, CommandOutput, ExecutionContext, HistoryEntry, StepOutcome, Value};
pub use def::{
    Binding, ComponentKind, ManifestError, OnError, TaskType, WorkflowDef, WorkflowLibrary, WorkflowStep, ALLOWED_COMMANDS, REQUEST_KEY,
};
pub use engine::{
    execute_workflow, run_task, select_workflow, stage_inputs, RunRecord, TaskRequest, TaskResult, TaskStatus, RUN_RECORD_FILE,
};

use crate::llm::PromptError;
use crate::vasp::ExtractError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("path {0:?} escapes the working directory")]
    PathEscape(String),
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("command {0:?} is not allowed")]
    DisallowedCommand(String),
    #[error("backend crashed: {0}")]
    BackendCrash(String),
    #[error("command {cmd} exited with status {status}: {detail}")]
    NonZeroExit { cmd: String, status: i32, detail: String },
    #[error("missing binding {0}")]
    MissingBinding(String),
    #[error("context has no value {0}")]
    UnknownContextKey(String),
    #[error("context value {0} is already set")]
    ContextKeyExists(String),
    #[error("argument {name}: {reason}")]
    BadArgument { name: String, reason: String },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("prompt: {0}")]
    Prompt(PromptError),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("LLM answer rejected after one retry: {0}")]
    FormatViolation(String),
    #[error("LLM provider error: {0}")]
    Provider(String),
}

impl StepError {
    /// Stable short name for records and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            StepError::PathEscape(_) => "PathEscape",
            StepError::NotFound(_) => "NotFound",
            StepError::Io(_) => "Io",
            StepError::DisallowedCommand(_) => "DisallowedCommand",
            StepError::BackendCrash(_) => "BackendCrash",
            StepError::NonZeroExit { .. } => "NonZeroExit",
            StepError::MissingBinding(_) => "MissingBinding",
            StepError::UnknownContextKey(_) => "UnknownContextKey",
            StepError::ContextKeyExists(_) => "ContextKeyExists",
            StepError::BadArgument { .. } => "BadArgument",
            StepError::Extract(ExtractError::MissingRequiredQuantity(_)) => "MissingRequiredQuantity",
            StepError::Extract(_) => "Extract",
            StepError::Prompt(_) => "Prompt",
            StepError::UnknownTemplate(_) => "UnknownTemplate",
            StepError::FormatViolation(_) => "FormatViolation",
            StepError::Provider(_) => "ProviderError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("no workflow matches the request (last answer {answer:?})")]
    NoMatchingWorkflow { answer: String },
    #[error("workflow {workflow} is missing inputs: {}", missing.join(", "))]
    MissingInputs { workflow: String, missing: Vec<String> },
    #[error("LLM provider error during selection: {0}")]
    Provider(String),
    #[error("selection prompt: {0}")]
    Prompt(PromptError),
    #[error("staging inputs: {0}")]
    Staging(StepError),
    #[error("i/o error: {0}")]
    Io(String),
}
