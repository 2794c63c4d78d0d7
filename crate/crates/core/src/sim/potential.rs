//! Truncated-and-shifted 12-6 pair potential standing in for DFT energies.
//!
//! `V(r) = 4ε[(σ/r)^12 − (σ/r)^6] − V_c(ε, σ, r_c)` for `r < r_c`, zero beyond.
//! The shift makes the energy continuous at the cutoff while keeping the
//! minimum at exactly `2^(1/6) σ`.

use serde::{Deserialize, Serialize};

use crate::vasp::structure::{cell_heights, frac_to_cart, inverse3, Mat3, Vec3};
use crate::vasp::CrystalStructure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverride {
    pub a: String,
    pub b: String,
    pub epsilon: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPotentialParams {
    /// eV
    pub pair_epsilon: f64,
    /// Å
    pub pair_sigma: f64,
    /// Å
    pub cutoff: f64,
    #[serde(default, rename = "override")]
    pub overrides: Vec<PairOverride>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("cutoff {cutoff} Å exceeds half the smallest cell height {half_height} Å")]
    CellTooSmall { cutoff: f64, half_height: f64 },
    #[error("invalid potential parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite energy or force (atoms {0} and {1} overlap)")]
    NumericalBlowup(usize, usize),
}

impl ToyPotentialParams {
    pub fn new(epsilon: f64, sigma: f64, cutoff: f64) -> Self {
        ToyPotentialParams { pair_epsilon: epsilon, pair_sigma: sigma, cutoff, overrides: Vec::new() }
    }

    pub fn builtin() -> Self {
        toml::from_str(include_str!("../../assets/potential.toml")).expect("bundled potential is valid")
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let all = std::iter::once((self.pair_epsilon, self.pair_sigma)).chain(self.overrides.iter().map(|o| (o.epsilon, o.sigma)));
        for (e, s) in all {
            if !(e > 0.0 && s > 0.0 && e.is_finite() && s.is_finite()) {
                return Err(PotentialError::InvalidParams(format!("epsilon {e} and sigma {s} must be positive")));
            }
            if self.cutoff < s {
                return Err(PotentialError::InvalidParams(format!("cutoff {} below sigma {s}", self.cutoff)));
            }
        }
        Ok(())
    }

    pub fn pair(&self, a: &str, b: &str) -> (f64, f64) {
        self.overrides
            .iter()
            .find(|o| (o.a == a && o.b == b) || (o.a == b && o.b == a))
            .map(|o| (o.epsilon, o.sigma))
            .unwrap_or((self.pair_epsilon, self.pair_sigma))
    }
}

/// Per-species-pair coefficients resolved once per structure.
pub(crate) struct PairTable {
    n_species: usize,
    kinds: Vec<usize>,
    coeffs: Vec<(f64, f64, f64)>, // epsilon, sigma, energy shift
    cutoff: f64,
}

impl PairTable {
    pub(crate) fn new(atom_species: &[&str], p: &ToyPotentialParams) -> Self {
        let mut names: Vec<&str> = atom_species.to_vec();
        names.sort_unstable();
        names.dedup();
        let kinds = atom_species.iter().map(|s| names.binary_search(s).expect("species present")).collect();
        let n = names.len();
        let mut coeffs = Vec::with_capacity(n * n);
        for a in &names {
            for b in &names {
                let (e, s) = p.pair(a, b);
                let sr6 = (s / p.cutoff).powi(6);
                coeffs.push((e, s, 4.0 * e * (sr6 * sr6 - sr6)));
            }
        }
        PairTable { n_species: n, kinds, coeffs, cutoff: p.cutoff }
    }

    /// Energy and dV/dr at separation r (zero beyond the cutoff).
    #[inline]
    pub(crate) fn eval(&self, i: usize, j: usize, r: f64) -> (f64, f64) {
        if r >= self.cutoff {
            return (0.0, 0.0);
        }
        let (e, s, shift) = self.coeffs[self.kinds[i] * self.n_species + self.kinds[j]];
        let sr6 = (s / r).powi(6);
        let v = 4.0 * e * (sr6 * sr6 - sr6) - shift;
        let dv = 24.0 * e * (sr6 - 2.0 * sr6 * sr6) / r;
        (v, dv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyForces {
    pub energy: f64,
    pub forces: Vec<Vec3>,
    /// dE/d(ln s) under isotropic scaling of the cell and all coordinates.
    pub scale_derivative: f64,
}

/// Minimum-image evaluation; requires the cutoff below half the smallest cell height.
pub fn toy_energy_forces(s: &CrystalStructure, p: &ToyPotentialParams) -> Result<(f64, Vec<Vec3>), PotentialError> {
    p.validate()?;
    let lattice = s.scaled_lattice();
    let half = cell_heights(&lattice).iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    if p.cutoff >= half {
        return Err(PotentialError::CellTooSmall { cutoff: p.cutoff, half_height: half });
    }
    let species = s.atom_species();
    let table = PairTable::new(&species, p);
    let frac = s.fractional_positions();
    let n = frac.len();
    let mut energy = 0.0;
    let mut forces = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = [frac[j][0] - frac[i][0], frac[j][1] - frac[i][1], frac[j][2] - frac[i][2]];
            for v in d.iter_mut() {
                *v -= v.round();
            }
            let dc = frac_to_cart(d, &lattice);
            let r = (dc[0] * dc[0] + dc[1] * dc[1] + dc[2] * dc[2]).sqrt();
            let (v, dv) = table.eval(i, j, r);
            if !(v.is_finite() && dv.is_finite()) {
                return Err(PotentialError::NumericalBlowup(i, j));
            }
            energy += v;
            for k in 0..3 {
                let f = dv * dc[k] / r;
                forces[i][k] += f;
                forces[j][k] -= f;
            }
        }
    }
    Ok((energy, forces))
}

/// Explicit periodic-image sum, valid for any cell size.
pub fn periodic_energy_forces(s: &CrystalStructure, p: &ToyPotentialParams) -> Result<EnergyForces, PotentialError> {
    let species = s.atom_species();
    energy_forces_cart(&s.scaled_lattice(), &species, &s.cartesian_positions(), p)
}

pub(crate) fn energy_forces_cart(
    lattice: &Mat3,
    species: &[&str],
    cart: &[Vec3],
    p: &ToyPotentialParams,
) -> Result<EnergyForces, PotentialError> {
    p.validate()?;
    let inv = inverse3(lattice).ok_or_else(|| PotentialError::InvalidParams("singular lattice".into()))?;
    let table = PairTable::new(species, p);
    let n = cart.len();
    // wrapped fractional coordinates so pair differences lie in (-1, 1)
    let frac: Vec<Vec3> = cart
        .iter()
        .map(|&c| {
            let mut f = frac_to_cart(c, &inv);
            for v in f.iter_mut() {
                *v -= v.floor();
            }
            f
        })
        .collect();
    let heights = cell_heights(lattice);
    let reach: Vec<i64> = heights.iter().map(|h| (p.cutoff / h).ceil() as i64 + 1).collect();
    let rc2 = p.cutoff * p.cutoff;

    let mut energy = 0.0;
    let mut virial = 0.0;
    let mut forces = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in i..n {
            let base = [frac[j][0] - frac[i][0], frac[j][1] - frac[i][1], frac[j][2] - frac[i][2]];
            // i == j pairs only see their own images; count each unordered image pair once
            let weight = if i == j { 0.5 } else { 1.0 };
            for a in -reach[0]..=reach[0] {
                for b in -reach[1]..=reach[1] {
                    for c in -reach[2]..=reach[2] {
                        if i == j && a == 0 && b == 0 && c == 0 {
                            continue;
                        }
                        let d = frac_to_cart([base[0] + a as f64, base[1] + b as f64, base[2] + c as f64], lattice);
                        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        if r2 >= rc2 {
                            continue;
                        }
                        let r = r2.sqrt();
                        let (v, dv) = table.eval(i, j, r);
                        if !(v.is_finite() && dv.is_finite()) {
                            return Err(PotentialError::NumericalBlowup(i, j));
                        }
                        energy += weight * v;
                        virial += weight * dv * r;
                        if i != j {
                            for k in 0..3 {
                                let f = dv * d[k] / r;
                                forces[i][k] += f;
                                forces[j][k] -= f;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(EnergyForces { energy, forces, scale_derivative: virial })
}

pub fn max_force(forces: &[Vec3]) -> f64 {
    forces.iter().map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt()).fold(0.0, f64::max)
}
