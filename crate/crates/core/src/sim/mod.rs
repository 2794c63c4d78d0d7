//! Deterministic stand-in for VASP: deck validation, a pair-potential energy
//! model, ionic relaxation, climbing-image NEB and fixture-backed band gaps.

pub mod backend;
pub mod bands;
pub mod neb;
pub mod potential;
pub mod relax;
pub mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::vasp::CrystalStructure;

pub use backend::{SimBackend, NEBEF_FILE};
pub use bands::{BsFixture, BsFixtureSet};
pub use neb::{neb_interpolate, run_neb, LjSurface, NebError, NebResult, NebSettings, PotentialSurface};
pub use potential::{periodic_energy_forces, toy_energy_forces, PotentialError, ToyPotentialParams};
pub use relax::{relax_structure, ConvergenceCriteria, OptimizerFlavor, RelaxOptions, RelaxResult};
pub use validate::{validate_deck, CrossStepContext, Rule, TagRegistry, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    ConvergedOk,
    NotConverged,
    ValidationFailed,
    Crashed,
}

impl SimStatus {
    /// Process exit status of an equivalent external run; zero only on success.
    pub fn exit_code(self) -> i32 {
        match self {
            SimStatus::ConvergedOk => 0,
            SimStatus::NotConverged => 1,
            SimStatus::ValidationFailed => 2,
            SimStatus::Crashed => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub status: SimStatus,
    pub final_structure: Option<CrystalStructure>,
    /// Ionic-step energies, or band energies for NEB runs.
    pub energy_trace: Vec<f64>,
    pub files_written: Vec<PathBuf>,
    pub validation: ValidationReport,
    pub message: String,
}

impl SimOutcome {
    pub(crate) fn failed(status: SimStatus, validation: ValidationReport, files_written: Vec<PathBuf>, message: &str) -> Self {
        SimOutcome { status, final_structure: None, energy_trace: Vec::new(), files_written, validation, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("missing input file {0}")]
    MissingInputFile(String),
    #[error("{file}: {reason}")]
    BadInput { file: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}
