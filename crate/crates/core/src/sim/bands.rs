//! Fixture-backed eigenvalue tables for band-structure runs.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::vasp::{Eigenvalue, IncarDocument};

/// Gap scaling applied when a hybrid-requiring material is run semilocally.
pub const SEMILOCAL_GAP_FACTOR: f64 = 0.6;
const VALENCE_TOP_EV: f64 = 5.0;
const N_BANDS: usize = 8;
const N_VALENCE: usize = 4;
/// Per-band spacing and k-dispersion of the synthetic bands, in eV.
const BAND_SPACING: f64 = 1.0;
const DISPERSION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BsFixture {
    /// Reduced formula matched against the POSCAR.
    pub material: String,
    pub reference_gap_ev: f64,
    pub direct: bool,
    /// 1-based k-point indices along the path.
    pub vbm_kpoint: usize,
    pub cbm_kpoint: usize,
    pub requires_hybrid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture file: {0}")]
    Parse(String),
    #[error("fixture {material}: {reason}")]
    Inconsistent { material: String, reason: String },
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    material: Vec<BsFixture>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BsFixtureSet {
    records: Vec<BsFixture>,
}

impl BsFixtureSet {
    pub fn from_toml(text: &str) -> Result<Self, FixtureError> {
        let file: FixtureFile = toml::from_str(text).map_err(|e| FixtureError::Parse(e.to_string()))?;
        for f in &file.material {
            let bad = |reason: &str| FixtureError::Inconsistent { material: f.material.clone(), reason: reason.into() };
            if f.vbm_kpoint == 0 || f.cbm_kpoint == 0 {
                return Err(bad("k-point indices are 1-based"));
            }
            if !(f.reference_gap_ev >= 0.0 && f.reference_gap_ev.is_finite()) {
                return Err(bad("gap must be finite and non-negative"));
            }
            if f.reference_gap_ev > 0.0 && f.direct != (f.vbm_kpoint == f.cbm_kpoint) {
                return Err(bad("direct flag disagrees with the band-edge k-points"));
            }
        }
        Ok(BsFixtureSet { records: file.material })
    }

    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../assets/bs_fixtures.toml")).expect("bundled fixtures are valid")
    }

    pub fn get(&self, material: &str) -> Option<&BsFixture> {
        self.records.iter().find(|r| r.material == material)
    }

    pub fn materials(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.material.as_str())
    }
}

/// LHFCALC on plus at least one of the hybrid mixing/screening tags.
pub fn hybrid_requested(incar: &IncarDocument) -> bool {
    incar.get_bool("LHFCALC") == Some(true) && (incar.contains("AEXX") || incar.contains("HFSCREEN"))
}

pub fn emitted_gap(f: &BsFixture, incar: &IncarDocument) -> f64 {
    if f.requires_hybrid && !hybrid_requested(incar) {
        f.reference_gap_ev * SEMILOCAL_GAP_FACTOR
    } else {
        f.reference_gap_ev
    }
}

/// Synthetic bands whose edges sit at the fixture's k-points with the given gap.
/// Returns the table and the Fermi energy (midgap, or inside the crossing band for metals).
pub fn eigenvalue_table(f: &BsFixture, gap_ev: f64, n_kpoints: usize) -> (Vec<Eigenvalue>, f64) {
    let nk = n_kpoints.max(f.vbm_kpoint).max(f.cbm_kpoint).max(1);
    let cbm = VALENCE_TOP_EV + gap_ev;
    let metallic = gap_ev <= 0.0;
    let fermi = if metallic { VALENCE_TOP_EV } else { VALENCE_TOP_EV + gap_ev / 2.0 };
    let mut table = Vec::with_capacity(nk * N_BANDS);
    for k in 1..=nk {
        let dv = k.abs_diff(f.vbm_kpoint) as f64 / nk as f64;
        let dc = k.abs_diff(f.cbm_kpoint) as f64 / nk as f64;
        for b in 1..=N_BANDS {
            let energy = if metallic && b == N_VALENCE {
                fermi - DISPERSION + 2.0 * DISPERSION * (k - 1) as f64 / nk as f64
            } else if b <= N_VALENCE {
                VALENCE_TOP_EV - (N_VALENCE - b) as f64 * BAND_SPACING - DISPERSION * dv - if metallic { DISPERSION } else { 0.0 }
            } else {
                cbm + (b - N_VALENCE - 1) as f64 * BAND_SPACING + DISPERSION * dc + if metallic { DISPERSION } else { 0.0 }
            };
            let occupancy = if energy < fermi { 2.0 } else { 0.0 };
            table.push(Eigenvalue { kpoint: k, band: b, energy_ev: energy, occupancy });
        }
    }
    (table, fermi)
}

/// OUTCAR-style `E-fermi` line and per-k-point eigenvalue blocks.
pub fn format_eigenvalue_blocks(table: &[Eigenvalue], fermi_ev: f64) -> String {
    let mut out = format!(" E-fermi : {fermi_ev:>10.6}     XC(G=0):  -8.0000     alpha+bet : -5.0000\n\n");
    let mut current = 0;
    for e in table {
        if e.kpoint != current {
            if current != 0 {
                out.push('\n');
            }
            current = e.kpoint;
            let _ = writeln!(out, " k-point {:>5} :       0.0000    0.0000    0.0000", e.kpoint);
            out.push_str("  band No.  band energies     occupation\n");
        }
        let _ = writeln!(out, "  {:>5}   {:>12.6}   {:>9.5}", e.band, e.energy_ev, e.occupancy);
    }
    out.push('\n');
    out
}
