//! Agentic workflow engine for first-principles materials computation.
//!
//! The crate bundles VASP-convention file formats, a provider-agnostic LLM
//! gateway, a declarative workflow engine, a deterministic toy simulation
//! backend, the benchmark scoring system and the harness that ties them
//! together.

pub mod harness;
pub mod llm;
pub mod scoring;
pub mod sim;
pub mod vasp;
pub mod workflow;

pub use vasp::{CrystalStructure, IncarDocument, KpointsSpec, OutcarSummary, TagValue};
pub use workflow::{ExecutionContext, TaskRequest, TaskResult, TaskType, WorkflowDef, WorkflowStep};
