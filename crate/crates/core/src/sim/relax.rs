//! Ionic (and optionally isotropic volume) relaxation on the toy potential.
//!
//! Steepest descent with an adaptive gain: a step is accepted only if the
//! energy does not rise, otherwise the gain is halved and the step retried.
//! The accepted energy trace is therefore non-increasing.

use serde::{Deserialize, Serialize};

use super::potential::{energy_forces_cart, max_force, EnergyForces, PotentialError, ToyPotentialParams};
use crate::vasp::structure::{Mat3, Vec3};
use crate::vasp::{CrystalStructure, IncarDocument};

/// Force threshold used when EDIFFG is absent or an energy criterion.
pub const DEFAULT_FORCE_TOL: f64 = 0.05;
pub const DEFAULT_POTIM: f64 = 0.5;
/// Largest per-atom displacement of one step, in Å.
const MAX_DISPLACEMENT: f64 = 0.2;
const MAX_LOG_SCALE_STEP: f64 = 0.02;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    /// eV/Å
    pub force_tol: f64,
    pub max_ionic_steps: usize,
    pub step_size: f64,
}

impl ConvergenceCriteria {
    /// Force tolerance from a negative EDIFFG; positive EDIFFG (energy criterion) falls back to the default.
    pub fn from_incar(incar: &IncarDocument) -> Self {
        let force_tol = match incar.get_f64("EDIFFG") {
            Some(v) if v < 0.0 => -v,
            _ => DEFAULT_FORCE_TOL,
        };
        ConvergenceCriteria {
            force_tol,
            max_ionic_steps: incar.get_i64("NSW").unwrap_or(0).max(0) as usize,
            step_size: incar.get_f64("POTIM").filter(|p| *p > 0.0).unwrap_or(DEFAULT_POTIM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerFlavor {
    /// IBRION = 1: starts from half the gain of the other flavours.
    QuasiNewton,
    /// IBRION = 2
    ConjugateGradient,
    /// IBRION = 3
    Damped,
}

impl OptimizerFlavor {
    pub fn from_ibrion(ibrion: i64) -> Option<Self> {
        match ibrion {
            1 => Some(OptimizerFlavor::QuasiNewton),
            2 => Some(OptimizerFlavor::ConjugateGradient),
            3 => Some(OptimizerFlavor::Damped),
            _ => None,
        }
    }

    fn initial_gain_factor(self) -> f64 {
        match self {
            OptimizerFlavor::QuasiNewton => 0.5,
            OptimizerFlavor::ConjugateGradient | OptimizerFlavor::Damped => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    pub flavor: OptimizerFlavor,
    /// Isotropic cell scaling driven by the virial (ISIF >= 3).
    pub relax_volume: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { flavor: OptimizerFlavor::ConjugateGradient, relax_volume: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxResult {
    pub structure: CrystalStructure,
    pub energy: f64,
    /// Energy before the first step and after every accepted step.
    pub energy_trace: Vec<f64>,
    pub max_force_trace: Vec<f64>,
    pub converged: bool,
}

struct State {
    lattice: Mat3,
    /// Product of all accepted isotropic scale factors.
    scale: f64,
    cart: Vec<Vec3>,
    ef: EnergyForces,
}

fn masked(forces: &[Vec3], mask: &[[bool; 3]]) -> Vec<Vec3> {
    forces
        .iter()
        .zip(mask)
        .map(|(f, m)| [if m[0] { f[0] } else { 0.0 }, if m[1] { f[1] } else { 0.0 }, if m[2] { f[2] } else { 0.0 }])
        .collect()
}

/// Cell "force" per atom in eV/Å, comparable to the ionic force threshold.
fn cell_force(ef: &EnergyForces, lattice: &Mat3, n: usize) -> f64 {
    let vol = crate::vasp::structure::det3(lattice).abs();
    let length = (vol / n as f64).cbrt();
    ef.scale_derivative.abs() / (n as f64 * length)
}

pub fn relax_structure(
    s: &CrystalStructure,
    p: &ToyPotentialParams,
    crit: &ConvergenceCriteria,
    opts: &RelaxOptions,
) -> Result<RelaxResult, PotentialError> {
    let species = s.atom_species();
    let mask = s.mobility();
    let n = s.n_atoms();
    let eval = |lattice: Mat3, scale: f64, cart: Vec<Vec3>| -> Result<State, PotentialError> {
        let ef = energy_forces_cart(&lattice, &species, &cart, p)?;
        Ok(State { lattice, scale, cart, ef })
    };
    let measure = |st: &State| -> (f64, bool) {
        let fmax = max_force(&masked(&st.ef.forces, &mask));
        let cell_ok = !opts.relax_volume || n == 0 || cell_force(&st.ef, &st.lattice, n) <= crit.force_tol;
        (fmax, fmax <= crit.force_tol && cell_ok)
    };

    let mut st = eval(s.scaled_lattice(), 1.0, s.cartesian_positions())?;
    let (f0, mut converged) = measure(&st);
    let mut energy_trace = vec![st.ef.energy];
    let mut max_force_trace = vec![f0];
    let g0 = crit.step_size * opts.flavor.initial_gain_factor();
    let mut gain = g0;
    let mut steps = 0;

    while !converged && steps < crit.max_ionic_steps {
        let forces = masked(&st.ef.forces, &mask);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let biggest = max_force(&forces) * gain;
            let shrink = if biggest > MAX_DISPLACEMENT { MAX_DISPLACEMENT / biggest } else { 1.0 };
            let mut dlns = 0.0;
            if opts.relax_volume && n > 0 {
                let vol = crate::vasp::structure::det3(&st.lattice).abs();
                let l2 = (vol / n as f64).cbrt().powi(2);
                dlns = (-gain * st.ef.scale_derivative / (n as f64 * l2)).clamp(-MAX_LOG_SCALE_STEP, MAX_LOG_SCALE_STEP);
            }
            let factor = dlns.exp();
            let lattice = st.lattice.map(|row| row.map(|v| v * factor));
            let cart: Vec<Vec3> =
                st.cart.iter().zip(&forces).map(|(r, f)| [0, 1, 2].map(|k| (r[k] + gain * shrink * f[k]) * factor)).collect();
            match eval(lattice, st.scale * factor, cart) {
                Ok(trial) if trial.ef.energy <= st.ef.energy => {
                    accepted = Some(trial);
                    break;
                }
                Ok(_) | Err(PotentialError::NumericalBlowup(..)) => gain *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some(next) = accepted else { break };
        st = next;
        gain *= 1.2;
        steps += 1;
        let (f, c) = measure(&st);
        converged = c;
        energy_trace.push(st.ef.energy);
        max_force_trace.push(f);
    }

    let mut structure = s.clone();
    if steps > 0 {
        structure.scale *= st.scale;
        structure.set_cartesian_positions(&st.cart);
    }
    Ok(RelaxResult { structure, energy: st.ef.energy, energy_trace, max_force_trace, converged })
}
