//! Runs a VASP-style working directory on the toy potential and writes
//! OUTCAR/CONTCAR files that the real extraction patterns understand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;

use super::bands::{eigenvalue_table, emitted_gap, format_eigenvalue_blocks, BsFixtureSet};
use super::neb::{band_structures, run_neb, LjSurface, NebSettings, PotentialSurface};
use super::potential::{max_force, periodic_energy_forces, PotentialError, ToyPotentialParams};
use super::relax::{relax_structure, ConvergenceCriteria, OptimizerFlavor, RelaxOptions};
use super::validate::{effective_ibrion, validate_deck, CrossStepContext, TagRegistry, ValidationReport};
use super::{SimError, SimOutcome, SimStatus};
use crate::vasp::outcar::{CONVERGENCE_SENTINEL, TOTEN_LINE_PREFIX};
use crate::vasp::{parse_incar, parse_kpoints, parse_poscar, parse_potcar, write_poscar, CrystalStructure, IncarDocument, KpointsMode};

/// Written by NEB runs: one row per image with force, energy and energy relative to the initial state.
pub const NEBEF_FILE: &str = "NEBEF.dat";
pub const DEFAULT_SPRING: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct SimBackend {
    pub registry: TagRegistry,
    pub potential: ToyPotentialParams,
    pub fixtures: BsFixtureSet,
}

impl Default for SimBackend {
    fn default() -> Self {
        Self::builtin()
    }
}

fn read(dir: &Path, name: &str) -> Result<String, SimError> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SimError::MissingInputFile(p.display().to_string()),
        _ => SimError::Io(format!("{}: {e}", p.display())),
    })
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<(), SimError> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| SimError::Io(format!("{}: {e}", p.display())))?;
    written.push(p);
    Ok(())
}

fn bad(file: &Path, reason: impl ToString) -> SimError {
    SimError::BadInput { file: file.display().to_string(), reason: reason.to_string() }
}

fn load_structure(dir: &Path, name: &str) -> Result<CrystalStructure, SimError> {
    parse_poscar(&read(dir, name)?).map_err(|e| bad(&dir.join(name), e))
}

fn outcar_header(incar: &IncarDocument, s: Option<&CrystalStructure>) -> String {
    let mut out = String::from(" vasp.6.4.2 (simulated backend; toy pair potential)\n\n");
    if let Some(s) = s {
        let _ = writeln!(out, " POSCAR = {}", s.comment.replace(['\n', '\r'], " "));
        let _ = writeln!(out, " ions per type = {}", s.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "));
    }
    out.push_str(" INCAR:\n");
    for e in &incar.entries {
        let _ = writeln!(out, "   {} = {}", e.tag, e.value);
    }
    let ibrion = effective_ibrion(incar);
    let _ = writeln!(out, "\n   NSW    = {:>6}    number of steps for IOM", incar.get_i64("NSW").unwrap_or(0));
    let _ = writeln!(out, "   IBRION = {ibrion:>6}    ionic relax: 0-MD 1-quasi-New 2-CG");
    let _ = writeln!(out, "   ISIF   = {:>6}    stress and relaxation", incar.get_i64("ISIF").unwrap_or(2));
    out.push('\n');
    out
}

fn ionic_step(out: &mut String, step: usize, energy: f64, fmax: f64) {
    let _ = writeln!(out, "--------------------------------------- Ionic step {step:>6} ---------------------------------------");
    let _ = writeln!(out, "  FORCES: max atom, RMS {fmax:>14.6}");
    let _ = writeln!(out, "{TOTEN_LINE_PREFIX} {energy:>18.8} eV");
    let _ = writeln!(out, "  energy  without entropy= {energy:>18.8}  energy(sigma->0) = {energy:>18.8}\n");
}

fn validation_block(out: &mut String, report: &ValidationReport) {
    out.push_str(" VALIDATION FAILED: the input deck was rejected before the run\n");
    for v in &report.violations {
        let _ = writeln!(out, "   [{}] {}", v.rule_id, v.message);
    }
}

/// Last `ISIF = n` echo in an OUTCAR written by a previous run.
fn isif_echo(text: &str) -> Option<i64> {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^\s*ISIF\s*=\s*(-?\d+)").expect("static regex"));
    re.captures_iter(text).last().and_then(|c| c[1].parse().ok())
}

impl SimBackend {
    pub fn builtin() -> Self {
        SimBackend { registry: TagRegistry::builtin(), potential: ToyPotentialParams::builtin(), fixtures: BsFixtureSet::builtin() }
    }

    /// Run the calculation described by the files in `dir`. Input problems
    /// that prevent a run are errors; everything else is reported through the outcome.
    pub fn run_simulation(&self, dir: &Path) -> Result<SimOutcome, SimError> {
        let incar_path = dir.join("INCAR");
        let incar = parse_incar(&read(dir, "INCAR")?).map_err(|e| bad(&incar_path, e))?;
        if incar.contains("IMAGES") {
            return self.run_neb_dir(dir, &incar);
        }
        let s = load_structure(dir, "POSCAR")?;
        let kpoints = match read(dir, "KPOINTS") {
            Ok(t) => Some(parse_kpoints(&t).map_err(|e| bad(&dir.join("KPOINTS"), e))?),
            Err(SimError::MissingInputFile(_)) => None,
            Err(e) => return Err(e),
        };
        match read(dir, "POTCAR") {
            Ok(t) => {
                let meta = parse_potcar(&t).map_err(|e| bad(&dir.join("POTCAR"), e))?;
                meta.check_species(&s.species).map_err(|e| bad(&dir.join("POTCAR"), e))?;
            }
            Err(SimError::MissingInputFile(_)) => {}
            Err(e) => return Err(e),
        }

        let mut written = Vec::new();
        let mut outcar = outcar_header(&incar, Some(&s));
        let report = validate_deck(&incar, &self.registry, &CrossStepContext::default());
        if !report.passed() {
            validation_block(&mut outcar, &report);
            write(dir, "OUTCAR", &outcar, &mut written)?;
            return Ok(SimOutcome::failed(SimStatus::ValidationFailed, report, written, "input deck failed validation"));
        }

        let crit = ConvergenceCriteria::from_incar(&incar);
        let ibrion = effective_ibrion(&incar);
        let is_static = crit.max_ionic_steps == 0 || ibrion == -1;
        let relax_volume = !is_static && incar.get_i64("ISIF").unwrap_or(2) >= 3;
        let result = if is_static {
            periodic_energy_forces(&s, &self.potential).map(|ef| {
                let fmax = max_force(&ef.forces);
                (s.clone(), vec![ef.energy], vec![fmax], true)
            })
        } else {
            let Some(flavor) = OptimizerFlavor::from_ibrion(ibrion) else {
                let msg = format!("IBRION = {ibrion} is not supported by the simulated backend");
                let _ = writeln!(outcar, " ERROR: {msg}");
                write(dir, "OUTCAR", &outcar, &mut written)?;
                return Ok(SimOutcome::failed(SimStatus::Crashed, report, written, &msg));
            };
            let opts = RelaxOptions { flavor, relax_volume };
            relax_structure(&s, &self.potential, &crit, &opts).map(|r| (r.structure, r.energy_trace, r.max_force_trace, r.converged))
        };
        let (final_s, trace, forces, converged) = match result {
            Ok(r) => r,
            Err(e) => return self.crashed(dir, outcar, report, written, &e),
        };

        for (i, (e, f)) in trace.iter().zip(&forces).enumerate() {
            ionic_step(&mut outcar, i + 1, *e, *f);
        }

        let band_mode = incar.get_i64("ICHARG") == Some(11) || kpoints.as_ref().is_some_and(|k| k.mode == KpointsMode::ExplicitLine);
        if band_mode {
            let formula = final_s.reduced_formula();
            match self.fixtures.get(&formula) {
                Some(f) => {
                    let n_k = kpoints.as_ref().map(|k| k.n_kpoints()).unwrap_or(1);
                    let (table, fermi) = eigenvalue_table(f, emitted_gap(f, &incar), n_k);
                    outcar.push_str(&format_eigenvalue_blocks(&table, fermi));
                }
                None => {
                    let _ = writeln!(outcar, " WARNING: no band-structure data for {formula}; eigenvalues not written\n");
                }
            }
        }
        if converged {
            let _ = writeln!(outcar, " {CONVERGENCE_SENTINEL}");
        }
        write(dir, "OUTCAR", &outcar, &mut written)?;
        write(dir, "CONTCAR", &write_poscar(&final_s), &mut written)?;
        Ok(SimOutcome {
            status: if converged { SimStatus::ConvergedOk } else { SimStatus::NotConverged },
            final_structure: Some(final_s),
            energy_trace: trace,
            files_written: written,
            validation: report,
            message: if relax_volume { "cell volume relaxed isotropically (ISIF >= 3); cell shape kept".into() } else { String::new() },
        })
    }

    fn crashed(
        &self,
        dir: &Path,
        mut outcar: String,
        report: ValidationReport,
        mut written: Vec<PathBuf>,
        e: &PotentialError,
    ) -> Result<SimOutcome, SimError> {
        let msg = e.to_string();
        let _ = writeln!(outcar, " ERROR: {msg}");
        write(dir, "OUTCAR", &outcar, &mut written)?;
        Ok(SimOutcome::failed(SimStatus::Crashed, report, written, &msg))
    }

    fn run_neb_dir(&self, dir: &Path, incar: &IncarDocument) -> Result<SimOutcome, SimError> {
        let n = incar.get_i64("IMAGES").filter(|&n| n >= 1).ok_or_else(|| bad(&dir.join("INCAR"), "IMAGES must be a positive integer"))?
            as usize;
        let sub = |i: usize| dir.join(format!("{i:02}"));
        let mut structures = Vec::with_capacity(n + 2);
        for i in 0..=n + 1 {
            structures.push(load_structure(&sub(i), "POSCAR")?);
        }
        let mut cross = CrossStepContext::default();
        for (label, i) in [("initial", 0), ("final", n + 1)] {
            if let Ok(text) = fs::read_to_string(sub(i).join("OUTCAR")) {
                if let Some(isif) = isif_echo(&text) {
                    cross.endpoint_isif.push((label.to_string(), isif));
                }
            }
            cross.endpoint_lattices.push((label.to_string(), structures[i].scaled_lattice()));
        }

        let mut written = Vec::new();
        let mut outcar = outcar_header(incar, structures.first());
        let report = validate_deck(incar, &self.registry, &cross);
        if !report.passed() {
            validation_block(&mut outcar, &report);
            write(dir, "OUTCAR", &outcar, &mut written)?;
            return Ok(SimOutcome::failed(SimStatus::ValidationFailed, report, written, "input deck failed validation"));
        }
        let first = &structures[0];
        if structures.iter().any(|s| s.species != first.species || s.counts != first.counts) {
            let msg = "images do not share species and atom counts";
            let _ = writeln!(outcar, " ERROR: {msg}");
            write(dir, "OUTCAR", &outcar, &mut written)?;
            return Ok(SimOutcome::failed(SimStatus::Crashed, report, written, msg));
        }
        let ibrion = effective_ibrion(incar);
        let crit = ConvergenceCriteria::from_incar(incar);
        if crit.max_ionic_steps > 0 && OptimizerFlavor::from_ibrion(ibrion).is_none() {
            let msg = format!("IBRION = {ibrion} cannot optimise an elastic band");
            let _ = writeln!(outcar, " ERROR: {msg}");
            write(dir, "OUTCAR", &outcar, &mut written)?;
            return Ok(SimOutcome::failed(SimStatus::Crashed, report, written, &msg));
        }
        let settings = NebSettings {
            spring: incar.get_f64("SPRING").map(f64::abs).unwrap_or(DEFAULT_SPRING),
            climb: incar.get_bool("LCLIMB").unwrap_or(true),
            force_tol: crit.force_tol,
            max_iterations: crit.max_ionic_steps,
            dt: crit.step_size.clamp(0.01, 0.5),
        };
        let surface = LjSurface::new(first, &self.potential);
        let cart: Vec<_> = structures.iter().map(|s| s.cartesian_positions()).collect();
        let interior = cart[1..=n].to_vec();
        let res = match run_neb(&surface, &cart[0], &cart[n + 1], interior, &first.mobility(), &settings) {
            Ok(r) => r,
            Err(e) => return self.crashed(dir, outcar, report, written, &e),
        };

        let band = band_structures(first, &res.band);
        let mut nebef = String::new();
        for (i, (s, e)) in band.iter().zip(&res.energies).enumerate() {
            let d = sub(i);
            let forces = match surface.energy_forces(&s.cartesian_positions()) {
                Ok((_, f)) => f,
                Err(e) => return self.crashed(dir, outcar, report, written, &e),
            };
            let fmax = max_force(&forces);
            let _ = writeln!(nebef, "{i:>4} {fmax:>16.8} {e:>18.8} {:>18.8}", e - res.energies[0]);
            let endpoint = i == 0 || i == n + 1;
            if endpoint && d.join("OUTCAR").exists() {
                continue;
            }
            let mut o = outcar_header(incar, Some(s));
            ionic_step(&mut o, 1, *e, fmax);
            if res.converged || endpoint {
                let _ = writeln!(o, " {CONVERGENCE_SENTINEL}");
            }
            write(&d, "OUTCAR", &o, &mut written)?;
            if !endpoint {
                write(&d, "CONTCAR", &write_poscar(s), &mut written)?;
            }
        }
        write(dir, NEBEF_FILE, &nebef, &mut written)?;

        let top = res
            .climbing_image
            .unwrap_or_else(|| (0..res.energies.len()).max_by(|&a, &b| res.energies[a].total_cmp(&res.energies[b])).unwrap_or(0));
        let _ = writeln!(
            outcar,
            " NEB: {n} images, {} iterations, spring {} eV/A^2, climbing {}",
            res.iterations, settings.spring, settings.climb
        );
        for (i, e) in res.energies.iter().enumerate() {
            let _ = writeln!(outcar, "   image {i:>3}: energy {e:>18.8} eV");
        }
        ionic_step(&mut outcar, 1, res.energies[top], res.max_force);
        if res.converged {
            let _ = writeln!(outcar, " {CONVERGENCE_SENTINEL}");
        }
        write(dir, "OUTCAR", &outcar, &mut written)?;
        Ok(SimOutcome {
            status: if res.converged { SimStatus::ConvergedOk } else { SimStatus::NotConverged },
            final_structure: Some(band[top].clone()),
            energy_trace: res.energies.clone(),
            files_written: written,
            validation: report,
            message: format!("barrier {:.6} eV, reaction energy {:.6} eV", res.barrier, res.delta_e),
        })
    }
}
