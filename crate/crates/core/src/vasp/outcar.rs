//! Pattern-based extraction of quantities from OUTCAR-style text.
//!
//! Patterns are line regexes with at most one capture group. Repeated numeric
//! matches resolve to the last occurrence, which in an OUTCAR is the final
//! ionic step.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const TOTEN_LINE_PREFIX: &str = "  free  energy   TOTEN  =";
pub const CONVERGENCE_SENTINEL: &str = "reached required accuracy - stopping structural energy minimisation";

const FLOAT: &str = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptureType {
    Real,
    Int,
    Text,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPattern {
    pub name: String,
    pub pattern: String,
    pub capture_type: CaptureType,
    #[serde(default = "default_required")]
    pub required: bool,
}

fn default_required() -> bool {
    true
}

impl ExtractionPattern {
    pub fn new(name: &str, pattern: &str, capture_type: CaptureType) -> Self {
        ExtractionPattern { name: name.into(), pattern: pattern.into(), capture_type, required: true }
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn toten() -> Self {
        Self::new("toten", &format!(r"free\s+energy\s+TOTEN\s*=\s*({FLOAT})\s*eV"), CaptureType::Real)
    }

    pub fn converged() -> Self {
        Self::new("converged", &regex::escape(CONVERGENCE_SENTINEL), CaptureType::Flag)
    }

    pub fn efermi() -> Self {
        Self::new("efermi", &format!(r"E-fermi\s*:\s*({FLOAT})"), CaptureType::Real)
    }

    pub fn max_force() -> Self {
        Self::new("max_force", &format!(r"FORCES:\s*max atom, RMS\s+({FLOAT})"), CaptureType::Real)
    }

    /// Output line of the native band-gap script.
    pub fn band_gap() -> Self {
        Self::new("band_gap", &format!(r"Band gap:\s*({FLOAT})\s*eV"), CaptureType::Real)
    }

    pub fn gap_direct() -> Self {
        Self::new("gap_direct", r"Band gap:.*\(direct", CaptureType::Flag)
    }

    /// Output lines of the native NEB energy-profile script.
    pub fn neb_barrier() -> Self {
        Self::new("barrier", &format!(r"^\s*barrier\s*=\s*({FLOAT})"), CaptureType::Real)
    }

    pub fn neb_reaction_energy() -> Self {
        Self::new("reaction_energy", &format!(r"^\s*reaction energy\s*=\s*({FLOAT})"), CaptureType::Real)
    }

    /// Standard patterns by name, with a trailing `?` marking an optional pattern.
    pub fn standard(spec: &str) -> Option<Self> {
        let (name, optional) = match spec.trim().strip_suffix('?') {
            Some(n) => (n.trim(), true),
            None => (spec.trim(), false),
        };
        let p = match name {
            "toten" => Self::toten(),
            "converged" => Self::converged(),
            "efermi" => Self::efermi(),
            "max_force" => Self::max_force(),
            "band_gap" => Self::band_gap(),
            "gap_direct" => Self::gap_direct(),
            "barrier" => Self::neb_barrier(),
            "reaction_energy" => Self::neb_reaction_energy(),
            _ => return None,
        };
        Some(if optional { p.optional() } else { p })
    }

    /// The minimal pattern set needed to build an [`OutcarSummary`].
    pub fn summary_set() -> Vec<Self> {
        vec![Self::toten(), Self::converged().optional(), Self::efermi().optional(), Self::max_force().optional()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Capture {
    Real(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl Capture {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Capture::Real(v) => Some(*v),
            Capture::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Capture::Flag(b) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("required quantity {0:?} not found")]
    MissingRequiredQuantity(String),
    #[error("pattern {name:?} is not a valid regex: {reason}")]
    BadPattern { name: String, reason: String },
    #[error("eigenvalue table or Fermi energy missing")]
    NoEigenvalues,
    #[error("eigenvalue table has no occupied or no unoccupied states")]
    NoGap,
}

/// Run every pattern over `text`; last match wins, `Flag` is true on any match.
pub fn extract_quantities(text: &str, patterns: &[ExtractionPattern]) -> Result<BTreeMap<String, Capture>, ExtractError> {
    let mut out = BTreeMap::new();
    for p in patterns {
        let re = Regex::new(&format!("(?m){}", p.pattern))
            .map_err(|e| ExtractError::BadPattern { name: p.name.clone(), reason: e.to_string() })?;
        let value = match p.capture_type {
            CaptureType::Flag => re.is_match(text).then_some(Capture::Flag(true)),
            kind => re.captures_iter(text).filter_map(|c| c.get(1).or_else(|| c.get(0))).filter_map(|m| convert(m.as_str(), kind)).last(),
        };
        match value {
            Some(v) => {
                out.insert(p.name.clone(), v);
            }
            None if p.required => return Err(ExtractError::MissingRequiredQuantity(p.name.clone())),
            None => {}
        }
    }
    Ok(out)
}

fn convert(s: &str, kind: CaptureType) -> Option<Capture> {
    match kind {
        CaptureType::Real => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Capture::Real),
        CaptureType::Int => s.parse::<i64>().ok().map(Capture::Int),
        CaptureType::Text => Some(Capture::Text(s.to_string())),
        CaptureType::Flag => Some(Capture::Flag(true)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub kpoint: usize,
    pub band: usize,
    pub energy_ev: f64,
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcarSummary {
    pub final_energy_ev: f64,
    pub converged: bool,
    pub n_ionic_steps: usize,
    pub max_force_ev_per_a: Option<f64>,
    pub fermi_energy_ev: Option<f64>,
    pub eigenvalue_table: Option<Vec<Eigenvalue>>,
}

/// Parse `k-point <i> ...` headers followed by `<band> <energy> <occupancy>` rows.
pub fn parse_eigenvalue_blocks(text: &str) -> Vec<Eigenvalue> {
    let mut table = Vec::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("k-point") {
            current = rest.split_whitespace().next().and_then(|k| k.trim_end_matches(':').parse().ok());
            continue;
        }
        let Some(k) = current else { continue };
        if t.is_empty() {
            if table.last().is_some_and(|e: &Eigenvalue| e.kpoint == k) {
                current = None;
            }
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let row = if toks.len() == 3 {
            match (toks[0].parse::<usize>(), toks[1].parse::<f64>(), toks[2].parse::<f64>()) {
                (Ok(b), Ok(e), Ok(o)) if e.is_finite() && o.is_finite() => {
                    Some(Eigenvalue { kpoint: k, band: b, energy_ev: e, occupancy: o })
                }
                _ => None,
            }
        } else {
            None
        };
        match row {
            Some(r) => table.push(r),
            // column headers ("band No. ...") precede rows; anything else after rows ends the block
            None if table.last().is_some_and(|e: &Eigenvalue| e.kpoint == k) => current = None,
            None => {}
        }
    }
    table
}

pub fn extract_outcar_summary(text: &str, patterns: &[ExtractionPattern]) -> Result<OutcarSummary, ExtractError> {
    let mut pats: Vec<ExtractionPattern> = patterns.to_vec();
    for p in pats.iter_mut() {
        if p.name == "toten" {
            p.required = true;
        }
    }
    if !pats.iter().any(|p| p.name == "toten") {
        pats.push(ExtractionPattern::toten());
    }
    let found = extract_quantities(text, &pats)?;
    let final_energy_ev =
        found.get("toten").and_then(Capture::as_f64).ok_or_else(|| ExtractError::MissingRequiredQuantity("toten".into()))?;
    let toten_re = pats.iter().find(|p| p.name == "toten").map(|p| p.pattern.clone()).unwrap_or_default();
    let n_ionic_steps = Regex::new(&format!("(?m){toten_re}")).map(|r| r.find_iter(text).count()).unwrap_or(0);
    let table = parse_eigenvalue_blocks(text);
    Ok(OutcarSummary {
        final_energy_ev,
        converged: found.get("converged").and_then(Capture::as_bool).unwrap_or(false),
        n_ionic_steps,
        max_force_ev_per_a: found.get("max_force").and_then(Capture::as_f64),
        fermi_energy_ev: found.get("efermi").and_then(Capture::as_f64),
        eigenvalue_table: (!table.is_empty()).then_some(table),
    })
}
