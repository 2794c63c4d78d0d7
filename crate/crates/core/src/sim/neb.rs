//! Nudged elastic band: linear image interpolation and a climbing-image
//! optimiser generic over the energy surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::potential::{energy_forces_cart, PotentialError, ToyPotentialParams};
use crate::vasp::structure::{cart_to_frac, frac_to_cart, inverse3, Mat3, Vec3};
use crate::vasp::CrystalStructure;

const LATTICE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NebError {
    #[error("endpoints have different species or counts")]
    SpeciesMismatch,
    #[error("endpoint cells differ (max component difference {0:e} Å)")]
    CellMismatch(f64),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// `n` interior images between two endpoints, linear in fractional
/// coordinates with minimum-image displacements. Endpoints are not included.
pub fn neb_interpolate(initial: &CrystalStructure, final_: &CrystalStructure, n: usize) -> Result<Vec<CrystalStructure>, NebError> {
    if initial.species != final_.species || initial.counts != final_.counts {
        return Err(NebError::SpeciesMismatch);
    }
    let (la, lb) = (initial.scaled_lattice(), final_.scaled_lattice());
    let diff = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| (la[i][j] - lb[i][j]).abs()).fold(0.0, f64::max);
    if diff > LATTICE_TOL {
        return Err(NebError::CellMismatch(diff));
    }
    let fa = initial.fractional_positions();
    let fb = final_.fractional_positions();
    let disp: Vec<Vec3> = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| {
            [0, 1, 2].map(|k| {
                let d = b[k] - a[k];
                d - d.round()
            })
        })
        .collect();
    let mut images = Vec::with_capacity(n);
    for k in 1..=n {
        let t = k as f64 / (n + 1) as f64;
        let frac: Vec<Vec3> = fa.iter().zip(&disp).map(|(a, d)| [0, 1, 2].map(|c| a[c] + t * d[c])).collect();
        let mut img = initial.clone();
        img.comment = format!("{} (image {k} of {n})", initial.comment);
        match initial.coordinate_mode {
            crate::vasp::CoordinateMode::Direct => img.positions = frac,
            crate::vasp::CoordinateMode::Cartesian => {
                let cart: Vec<Vec3> = frac.iter().map(|&f| frac_to_cart(f, &la)).collect();
                img.set_cartesian_positions(&cart);
            }
        }
        images.push(img);
    }
    Ok(images)
}

/// Energy landscape for band optimisation. Positions are Cartesian, one entry per atom.
pub trait PotentialSurface: Sync {
    fn energy_forces(&self, positions: &[Vec3]) -> Result<(f64, Vec<Vec3>), PotentialError>;

    /// Displacement from `a` to `b`; periodic surfaces apply the minimum image.
    fn displacement(&self, a: Vec3, b: Vec3) -> Vec3 {
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }
}

/// The toy pair potential in a fixed periodic cell.
pub struct LjSurface {
    lattice: Mat3,
    inverse: Mat3,
    species: Vec<String>,
    params: ToyPotentialParams,
}

impl LjSurface {
    pub fn new(template: &CrystalStructure, params: &ToyPotentialParams) -> Self {
        let lattice = template.scaled_lattice();
        LjSurface {
            lattice,
            inverse: inverse3(&lattice).expect("validated lattice is invertible"),
            species: template.atom_species().into_iter().map(str::to_string).collect(),
            params: params.clone(),
        }
    }
}

impl PotentialSurface for LjSurface {
    fn energy_forces(&self, positions: &[Vec3]) -> Result<(f64, Vec<Vec3>), PotentialError> {
        let species: Vec<&str> = self.species.iter().map(String::as_str).collect();
        let ef = energy_forces_cart(&self.lattice, &species, positions, &self.params)?;
        Ok((ef.energy, ef.forces))
    }

    fn displacement(&self, a: Vec3, b: Vec3) -> Vec3 {
        let mut d = cart_to_frac([b[0] - a[0], b[1] - a[1], b[2] - a[2]], &self.inverse);
        for v in d.iter_mut() {
            *v -= v.round();
        }
        frac_to_cart(d, &self.lattice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NebSettings {
    /// eV/Å²
    pub spring: f64,
    pub climb: bool,
    /// eV/Å, on the projected band force
    pub force_tol: f64,
    pub max_iterations: usize,
    /// Initial FIRE time step.
    pub dt: f64,
}

impl Default for NebSettings {
    fn default() -> Self {
        NebSettings { spring: 5.0, climb: true, force_tol: 0.05, max_iterations: 500, dt: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NebResult {
    /// Endpoints first and last.
    pub band: Vec<Vec<Vec3>>,
    pub energies: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_force: f64,
    pub climbing_image: Option<usize>,
    /// Highest band energy minus the initial-state energy.
    pub barrier: f64,
    /// Final-state minus initial-state energy.
    pub delta_e: f64,
}

fn dotn(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum()
}

fn scaled(a: &[Vec3], s: f64) -> Vec<Vec3> {
    a.iter().map(|v| v.map(|x| x * s)).collect()
}

/// Improved tangent: follow the uphill neighbour, blending at extrema.
fn tangent(surface: &dyn PotentialSurface, prev: &[Vec3], cur: &[Vec3], next: &[Vec3], e: [f64; 3]) -> (Vec<Vec3>, f64, f64) {
    let tp: Vec<Vec3> = cur.iter().zip(next).map(|(a, b)| surface.displacement(*a, *b)).collect();
    let tm: Vec<Vec3> = prev.iter().zip(cur).map(|(a, b)| surface.displacement(*a, *b)).collect();
    let (ep, ei, en) = (e[0], e[1], e[2]);
    let mut tau: Vec<Vec3> = if en > ei && ei > ep {
        tp.clone()
    } else if en < ei && ei < ep {
        tm.clone()
    } else {
        let dmax = (en - ei).abs().max((ep - ei).abs());
        let dmin = (en - ei).abs().min((ep - ei).abs());
        let (wp, wm) = if en > ep { (dmax, dmin) } else { (dmin, dmax) };
        tp.iter().zip(&tm).map(|(p, m)| [0, 1, 2].map(|k| wp * p[k] + wm * m[k])).collect()
    };
    let norm = dotn(&tau, &tau).sqrt();
    if norm > 0.0 {
        tau = scaled(&tau, 1.0 / norm);
    }
    (tau, dotn(&tp, &tp).sqrt(), dotn(&tm, &tm).sqrt())
}

fn apply_mask(v: &mut [Vec3], mask: &[[bool; 3]]) {
    for (x, m) in v.iter_mut().zip(mask) {
        for k in 0..3 {
            if !m[k] {
                x[k] = 0.0;
            }
        }
    }
}

/// Climbing-image NEB with a FIRE optimiser over all interior images.
pub fn run_neb(
    surface: &dyn PotentialSurface,
    initial: &[Vec3],
    final_: &[Vec3],
    images: Vec<Vec<Vec3>>,
    mask: &[[bool; 3]],
    settings: &NebSettings,
) -> Result<NebResult, PotentialError> {
    let (e_init, _) = surface.energy_forces(initial)?;
    let (e_final, _) = surface.energy_forces(final_)?;
    let n = images.len();
    let mut band: Vec<Vec<Vec3>> = std::iter::once(initial.to_vec()).chain(images).chain(std::iter::once(final_.to_vec())).collect();
    let mut velocity: Vec<Vec<Vec3>> = vec![vec![[0.0; 3]; initial.len()]; n];
    let (mut dt, mut alpha, mut n_pos) = (settings.dt, 0.1, 0usize);
    let dt_max = 10.0 * settings.dt;

    let mut iterations = 0;
    loop {
        let evals: Vec<(f64, Vec<Vec3>)> = band[1..=n].par_iter().map(|x| surface.energy_forces(x)).collect::<Result<_, _>>()?;
        let mut energies = vec![e_init];
        energies.extend(evals.iter().map(|(e, _)| *e));
        energies.push(e_final);
        let climber = if settings.climb && n > 0 { (1..=n).max_by(|&a, &b| energies[a].total_cmp(&energies[b])) } else { None };

        let mut neb_forces = Vec::with_capacity(n);
        for i in 1..=n {
            let (tau, dp, dm) = tangent(surface, &band[i - 1], &band[i], &band[i + 1], [energies[i - 1], energies[i], energies[i + 1]]);
            let f = &evals[i - 1].1;
            let along = dotn(f, &tau);
            let mut out: Vec<Vec3> = if Some(i) == climber {
                f.iter().zip(&tau).map(|(f, t)| [0, 1, 2].map(|k| f[k] - 2.0 * along * t[k])).collect()
            } else {
                let spring = settings.spring * (dp - dm);
                f.iter().zip(&tau).map(|(f, t)| [0, 1, 2].map(|k| f[k] - along * t[k] + spring * t[k])).collect()
            };
            apply_mask(&mut out, mask);
            neb_forces.push(out);
        }
        let max_force = neb_forces.iter().flatten().map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt()).fold(0.0, f64::max);
        let converged = max_force <= settings.force_tol;
        if converged || iterations >= settings.max_iterations {
            let barrier = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - e_init;
            return Ok(NebResult {
                band,
                energies,
                converged,
                iterations,
                max_force,
                climbing_image: climber,
                barrier,
                delta_e: e_final - e_init,
            });
        }

        // FIRE update on the concatenated interior coordinates
        let power: f64 = neb_forces.iter().zip(&velocity).map(|(f, v)| dotn(f, v)).sum();
        if power > 0.0 {
            let vnorm = velocity.iter().map(|v| dotn(v, v)).sum::<f64>().sqrt();
            let fnorm = neb_forces.iter().map(|f| dotn(f, f)).sum::<f64>().sqrt();
            for (v, f) in velocity.iter_mut().zip(&neb_forces) {
                for (vi, fi) in v.iter_mut().zip(f) {
                    for k in 0..3 {
                        vi[k] = (1.0 - alpha) * vi[k] + alpha * vnorm * fi[k] / fnorm.max(f64::MIN_POSITIVE);
                    }
                }
            }
            n_pos += 1;
            if n_pos > 5 {
                dt = (dt * 1.1).min(dt_max);
                alpha *= 0.99;
            }
        } else {
            for v in velocity.iter_mut() {
                v.iter_mut().for_each(|x| *x = [0.0; 3]);
            }
            dt *= 0.5;
            alpha = 0.1;
            n_pos = 0;
        }
        for (i, (v, f)) in velocity.iter_mut().zip(&neb_forces).enumerate() {
            for (atom, (vi, fi)) in v.iter_mut().zip(f).enumerate() {
                for k in 0..3 {
                    vi[k] += dt * fi[k];
                }
                let mut dx = vi.map(|x| x * dt);
                let len = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
                if len > 0.2 {
                    dx = dx.map(|x| x * 0.2 / len);
                }
                let pos = &mut band[i + 1][atom];
                *pos = [pos[0] + dx[0], pos[1] + dx[1], pos[2] + dx[2]];
            }
        }
        iterations += 1;
    }
}

/// Relaxed band written back into structures shaped like `template`.
pub fn band_structures(template: &CrystalStructure, band: &[Vec<Vec3>]) -> Vec<CrystalStructure> {
    band.iter()
        .map(|x| {
            let mut s = template.clone();
            s.set_cartesian_positions(x);
            s
        })
        .collect()
}
