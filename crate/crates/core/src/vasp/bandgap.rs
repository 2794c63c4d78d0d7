//! Band gap from an OUTCAR eigenvalue table (native replacement for `gap.py`).

use serde::{Deserialize, Serialize};

use super::outcar::{Eigenvalue, ExtractError, OutcarSummary};

/// Occupancies above this count as occupied.
const OCCUPIED: f64 = 0.5;
const DEGENERATE_EV: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGap {
    pub gap_ev: f64,
    pub direct: bool,
    pub vbm_ev: f64,
    pub cbm_ev: f64,
    pub vbm_kpoint: usize,
    pub cbm_kpoint: usize,
}

pub fn band_gap_from_eigenvalues(summary: &OutcarSummary) -> Result<BandGap, ExtractError> {
    match (&summary.eigenvalue_table, summary.fermi_energy_ev) {
        (Some(t), Some(ef)) if !t.is_empty() => band_gap_from_table(t, ef),
        _ => Err(ExtractError::NoEigenvalues),
    }
}

pub fn band_gap_from_table(table: &[Eigenvalue], fermi_ev: f64) -> Result<BandGap, ExtractError> {
    if table.is_empty() {
        return Err(ExtractError::NoEigenvalues);
    }
    let (occ, unocc): (Vec<&Eigenvalue>, Vec<&Eigenvalue>) = table.iter().partition(|e| e.occupancy > OCCUPIED);
    let vbm = occ.iter().max_by(|a, b| a.energy_ev.total_cmp(&b.energy_ev)).ok_or(ExtractError::NoGap)?;
    let cbm = unocc.iter().min_by(|a, b| a.energy_ev.total_cmp(&b.energy_ev)).ok_or(ExtractError::NoGap)?;

    // a band with states on both sides of the Fermi level makes the system metallic
    let mut bands: Vec<usize> = table.iter().map(|e| e.band).collect();
    bands.sort_unstable();
    bands.dedup();
    let metallic = bands.iter().any(|&b| {
        let (lo, hi) = table
            .iter()
            .filter(|e| e.band == b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.energy_ev), hi.max(e.energy_ev)));
        lo < fermi_ev && hi > fermi_ev
    });

    let gap = cbm.energy_ev - vbm.energy_ev;
    if metallic || gap <= 0.0 {
        return Ok(BandGap {
            gap_ev: 0.0,
            direct: false,
            vbm_ev: vbm.energy_ev,
            cbm_ev: cbm.energy_ev,
            vbm_kpoint: vbm.kpoint,
            cbm_kpoint: cbm.kpoint,
        });
    }
    let vbm_ks: Vec<usize> = occ.iter().filter(|e| vbm.energy_ev - e.energy_ev <= DEGENERATE_EV).map(|e| e.kpoint).collect();
    let direct = unocc.iter().filter(|e| e.energy_ev - cbm.energy_ev <= DEGENERATE_EV).any(|e| vbm_ks.contains(&e.kpoint));
    Ok(BandGap { gap_ev: gap, direct, vbm_ev: vbm.energy_ev, cbm_ev: cbm.energy_ev, vbm_kpoint: vbm.kpoint, cbm_kpoint: cbm.kpoint })
}

/// One-line report in the format the workflows extract (`Band gap: <x> eV (...)`).
pub fn format_gap_report(g: &BandGap) -> String {
    format!(
        "Band gap: {:.6} eV ({}, VBM {:.6} eV at k-point {}, CBM {:.6} eV at k-point {})\n",
        g.gap_ev,
        if g.direct { "direct" } else { "indirect" },
        g.vbm_ev,
        g.vbm_kpoint,
        g.cbm_ev,
        g.cbm_kpoint
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(k: usize, b: usize, e: f64, o: f64) -> Eigenvalue {
        Eigenvalue { kpoint: k, band: b, energy_ev: e, occupancy: o }
    }

    #[test]
    fn two_by_two_indirect() {
        // VBM -0.5 @k0, CBM 0.6 @k1; enumerated by hand: occupied {-0.5, -0.7}, unoccupied {0.9, 0.6}
        let t = vec![ev(0, 1, -0.5, 2.0), ev(0, 2, 0.9, 0.0), ev(1, 1, -0.7, 2.0), ev(1, 2, 0.6, 0.0)];
        let g = band_gap_from_table(&t, 0.0).unwrap();
        assert!((g.gap_ev - 1.1).abs() < 1e-12);
        assert!(!g.direct);
        assert_eq!((g.vbm_kpoint, g.cbm_kpoint), (0, 1));
    }

    #[test]
    fn direct_gap() {
        let t = vec![ev(0, 1, -0.5, 2.0), ev(0, 2, 0.6, 0.0), ev(1, 1, -0.7, 2.0), ev(1, 2, 0.9, 0.0)];
        let g = band_gap_from_table(&t, 0.0).unwrap();
        assert!(g.direct);
    }

    #[test]
    fn metal() {
        let t = vec![ev(0, 1, -0.5, 2.0), ev(1, 1, 0.3, 0.0), ev(0, 2, 1.0, 0.0), ev(1, 2, 1.2, 0.0)];
        let g = band_gap_from_table(&t, 0.0).unwrap();
        assert_eq!(g.gap_ev, 0.0);
    }

    #[test]
    fn missing_table() {
        let s = OutcarSummary {
            final_energy_ev: 0.0,
            converged: true,
            n_ionic_steps: 1,
            max_force_ev_per_a: None,
            fermi_energy_ev: Some(0.0),
            eigenvalue_table: None,
        };
        assert_eq!(band_gap_from_eigenvalues(&s), Err(ExtractError::NoEigenvalues));
    }
}
