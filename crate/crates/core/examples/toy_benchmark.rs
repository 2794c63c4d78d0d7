//! Writes the six-entry toy benchmark and derives its labels by running every
//! entry through the harness with the tight-tolerance reference script.
//!
//! cargo run -p matflow-core --example toy_benchmark -- benchmarks/toy benchmarks/mocks/reference.txt

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use matflow::harness::{run_entry, BenchmarkEntry, EntryOutcome, Evidence, HarnessEnv, Labels, LlmSource, RunMode, ENTRY_MANIFEST};
use matflow::llm::MockScript;
use matflow::vasp::{write_poscar, Vec3};
use matflow::{CrystalStructure, TaskType};

const GAMMA: &str = "Gamma only\n0\nGamma\n1 1 1\n0 0 0\n";
const SLAB_MESH: &str = "Automatic mesh\n0\nMonkhorst-Pack\n4 4 1\n0 0 0\n";

fn potcar(titles: &[&str]) -> String {
    titles.iter().map(|t| format!("  PAW_PBE {t}\n   TITEL  = PAW_PBE {t}\n End of Dataset\n")).collect()
}

fn cubic(l: f64) -> [[f64; 3]; 3] {
    [[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]]
}

/// Fixed, irregular offsets so the starting structures are off their minima.
fn jitter(i: usize, amp: f64) -> Vec3 {
    let t = i as f64 + 1.0;
    [amp * (1.7 * t).sin(), amp * (2.9 * t + 0.3).sin(), amp * (4.1 * t + 0.7).cos()]
}

fn ar13() -> CrystalStructure {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = vec![[0.0; 3]];
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            v.push([0.0, a, b]);
            v.push([a, b, 0.0]);
            v.push([b, 0.0, a]);
        }
    }
    let box_len = 20.0;
    // edge 2 in the unit construction; start ~5 % compressed from the LJ shell
    let scale = 3.55 / 2.0;
    let frac = v
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let j = jitter(i, 0.12);
            [0.5 + (p[0] * scale + j[0]) / box_len, 0.5 + (p[1] * scale + j[1]) / box_len, 0.5 + (p[2] * scale + j[2]) / box_len]
        })
        .collect();
    CrystalStructure::from_fractional("Ar13 cluster", cubic(box_len), vec!["Ar".into()], vec![13], frac)
}

fn cu_vacancy() -> CrystalStructure {
    let a = 2f64.powf(1.0 / 6.0) * 2.3 * 2f64.sqrt();
    let mut frac = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for b in [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]] {
                    frac.push([(b[0] + i as f64) / 2.0, (b[1] + j as f64) / 2.0, (b[2] + k as f64) / 2.0]);
                }
            }
        }
    }
    frac.remove(0);
    let l = 2.0 * a;
    let frac: Vec<Vec3> = frac
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let j = jitter(i, 0.08);
            [f[0] + j[0] / l, f[1] + j[1] / l, f[2] + j[2] / l]
        })
        .collect();
    CrystalStructure::from_fractional("Cu fcc 2x2x2 with one vacancy", cubic(l), vec!["Cu".into()], vec![31], frac)
}

fn si_primitive() -> CrystalStructure {
    let h = 5.431 / 2.0;
    CrystalStructure::from_fractional(
        "Si diamond primitive",
        [[0.0, h, h], [h, 0.0, h], [h, h, 0.0]],
        vec!["Si".into()],
        vec![2],
        vec![[0.0; 3], [0.25, 0.25, 0.25]],
    )
}

fn zno_wurtzite() -> CrystalStructure {
    let (a, c, u) = (3.25, 5.207, 0.382);
    let s3 = 3f64.sqrt() / 2.0;
    CrystalStructure::from_fractional(
        "ZnO wurtzite",
        [[a, 0.0, 0.0], [-a / 2.0, a * s3, 0.0], [0.0, 0.0, c]],
        vec!["Zn".into(), "O".into()],
        vec![2, 2],
        vec![[1.0 / 3.0, 2.0 / 3.0, 0.0], [2.0 / 3.0, 1.0 / 3.0, 0.5], [1.0 / 3.0, 2.0 / 3.0, u], [2.0 / 3.0, 1.0 / 3.0, 0.5 + u]],
    )
}

/// fcc(100) slab on an `n x n` surface cell: lateral positions in units of the
/// surface spacing, `layers` layers `d` apart, the bottom layer frozen.
fn fcc100_slab(n: usize, layers: usize, nn: f64, c: f64, z0: f64) -> (Vec<Vec3>, Vec<[bool; 3]>, [[f64; 3]; 3]) {
    let side = n as f64 * nn;
    let d = nn / 2f64.sqrt();
    let mut cart = Vec::new();
    let mut flags = Vec::new();
    for layer in 0..layers {
        let off = if layer % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..n {
            for j in 0..n {
                cart.push([(i as f64 + off) * nn, (j as f64 + off) * nn, z0 + layer as f64 * d]);
                flags.push(if layer == 0 { [false; 3] } else { [true; 3] });
            }
        }
    }
    (cart, flags, [[side, 0.0, 0.0], [0.0, side, 0.0], [0.0, 0.0, c]])
}

fn from_cart(
    comment: &str,
    lattice: [[f64; 3]; 3],
    species: &[(&str, usize)],
    cart: &[Vec3],
    flags: Option<Vec<[bool; 3]>>,
) -> CrystalStructure {
    let frac = cart.iter().map(|p| [p[0] / lattice[0][0], p[1] / lattice[1][1], p[2] / lattice[2][2]]).collect();
    let mut s = CrystalStructure::from_fractional(
        comment,
        lattice,
        species.iter().map(|(e, _)| e.to_string()).collect(),
        species.iter().map(|(_, n)| *n).collect(),
        frac,
    );
    s.selective_flags = flags;
    s
}

const PD_NN: f64 = 2.75;
const CU_NN: f64 = 2.582;
const SLAB_C: f64 = 20.0;
const SLAB_Z0: f64 = 2.0;

fn pd_surface() -> CrystalStructure {
    let (cart, flags, lat) = fcc100_slab(2, 3, PD_NN, SLAB_C, SLAB_Z0);
    from_cart("Pd(100) 2x2, 3 layers", lat, &[("Pd", 12)], &cart, Some(flags))
}

fn pd_co() -> CrystalStructure {
    let (mut cart, mut flags, lat) = fcc100_slab(2, 3, PD_NN, SLAB_C, SLAB_Z0);
    // upright atop the first top-layer atom; symmetry keeps it there
    let top = cart[8];
    cart.push([top[0], top[1], top[2] + 2.15]);
    cart.push([top[0], top[1], top[2] + 3.35]);
    flags.extend([[true; 3], [true; 3]]);
    from_cart("CO atop Pd(100)", lat, &[("Pd", 12), ("C", 1), ("O", 1)], &cart, Some(flags))
}

fn co_gas() -> CrystalStructure {
    let l = 12.0;
    from_cart("CO in a box", cubic(l), &[("C", 1), ("O", 1)], &[[6.0, 6.0, 5.4], [6.05, 6.0, 6.65]], None)
}

/// Two adatoms on Cu(100) 3x3: a fixed partner at hollow (0, 0) and a mover
/// at hollow `(x, y)`.
fn cu_adatoms(mover: (f64, f64), comment: &str) -> CrystalStructure {
    let (mut cart, mut flags, lat) = fcc100_slab(3, 2, CU_NN, SLAB_C, SLAB_Z0);
    let z = SLAB_Z0 + 2.0 * CU_NN / 2f64.sqrt();
    cart.push([0.0, 0.0, z]);
    cart.push([mover.0 * CU_NN, mover.1 * CU_NN, z]);
    flags.extend([[true; 3], [true; 3]]);
    from_cart(comment, lat, &[("Cu", 20)], &cart, Some(flags))
}

fn line_path(points: &[([f64; 3], &str)], divisions: usize) -> String {
    let mut out = format!("k-path\n{divisions}\nLine-mode\nReciprocal\n");
    for w in points.windows(2) {
        for (p, l) in w {
            let _ = writeln!(out, "{} {} {} {l}", p[0], p[1], p[2]);
        }
        out.push('\n');
    }
    out
}

struct Spec {
    id: &'static str,
    task: TaskType,
    request: &'static str,
    files: Vec<(&'static str, &'static str, String)>,
}

fn specs() -> Vec<Spec> {
    let p = |s: &CrystalStructure| write_poscar(s);
    vec![
        Spec {
            id: "sr_ar13_cluster",
            task: TaskType::SR,
            request: "Relax this 13-atom argon cluster in vacuum and return the relaxed geometry.",
            files: vec![
                ("POSCAR", "POSCAR", p(&ar13())),
                ("POTCAR", "POTCAR", potcar(&["Ar 07Sep2000"])),
                ("KPOINTS", "KPOINTS", GAMMA.into()),
            ],
        },
        Spec {
            id: "sr_cu_vacancy",
            task: TaskType::SR,
            request: "Relax the atomic positions around the vacancy in this copper supercell at fixed cell.",
            files: vec![
                ("POSCAR", "POSCAR", p(&cu_vacancy())),
                ("POTCAR", "POTCAR", potcar(&["Cu 22Jun2005"])),
                ("KPOINTS", "KPOINTS", "Automatic mesh\n0\nGamma\n2 2 2\n0 0 0\n".into()),
            ],
        },
        Spec {
            id: "bs_si",
            task: TaskType::BS,
            request: "Compute the band structure of bulk silicon along L-G-X and report the band gap.",
            files: vec![
                ("POSCAR", "POSCAR", p(&si_primitive())),
                ("POTCAR", "POTCAR", potcar(&["Si 05Jan2001"])),
                ("KPOINTS", "KPOINTS", line_path(&[([0.5, 0.5, 0.5], "L"), ([0.0, 0.0, 0.0], "G"), ([0.5, 0.0, 0.5], "X")], 10)),
            ],
        },
        Spec {
            id: "bs_zno",
            task: TaskType::BS,
            request: "Compute the band structure of wurtzite ZnO along M-G-A and report the band gap.",
            files: vec![
                ("POSCAR", "POSCAR", p(&zno_wurtzite())),
                ("POTCAR", "POTCAR", potcar(&["Zn 06Sep2000", "O 08Apr2002"])),
                ("KPOINTS", "KPOINTS", line_path(&[([0.5, 0.0, 0.0], "M"), ([0.0, 0.0, 0.0], "G"), ([0.0, 0.0, 0.5], "A")], 10)),
            ],
        },
        Spec {
            id: "ae_pd100_co",
            task: TaskType::AE,
            request: "Compute the adsorption energy of CO adsorbed atop on Pd(100).",
            files: vec![
                ("POSCAR_gas", "gas.vasp", p(&co_gas())),
                ("POSCAR_surface", "surface.vasp", p(&pd_surface())),
                ("POSCAR_adsorbed", "adsorbed.vasp", p(&pd_co())),
                ("POTCAR", "POTCAR", potcar(&["Pd 04Jan2005", "C 08Apr2002", "O 08Apr2002"])),
                ("KPOINTS", "KPOINTS", SLAB_MESH.into()),
            ],
        },
        Spec {
            id: "ts_cu100_adatom_hop",
            task: TaskType::TS,
            request: "Find the barrier for a Cu adatom hopping away from its neighbour on Cu(100).",
            files: vec![
                ("POSCAR_initial", "initial.vasp", p(&cu_adatoms((1.0, 0.0), "Cu(100) adatom dimer"))),
                ("POSCAR_final", "final.vasp", p(&cu_adatoms((1.0, 1.0), "Cu(100) adatoms on diagonal hollows"))),
                ("POTCAR", "POTCAR", potcar(&["Cu 22Jun2005"])),
                ("KPOINTS", "KPOINTS", SLAB_MESH.into()),
            ],
        },
    ]
}

fn manifest(spec: &Spec, labels: &str) -> String {
    let mut out = format!("task_type = \"{}\"\nrequest = \"{}\"\n\n[inputs]\n", spec.task, spec.request);
    for (role, file, _) in &spec.files {
        let _ = writeln!(out, "{role} = \"{file}\"");
    }
    out.push_str("\n[labels]\n");
    out.push_str(labels);
    out
}

fn label_text(spec: &Spec, dir: &Path, evidence: &Evidence) -> Result<String, String> {
    Ok(match evidence {
        Evidence::Sr { structure: Some(s), converged: true } => {
            fs::write(dir.join("reference.vasp"), s).map_err(|e| e.to_string())?;
            "reference_structure = \"reference.vasp\"\n".into()
        }
        Evidence::Bs { band_gap: Some(g), completed: true } => format!("band_gap = {g}\n"),
        Evidence::Ae { adsorption_energy: Some(e), flags } if flags.points() == 10.0 => format!("adsorption_energy = {e}\n"),
        Evidence::Ts { barrier: Some(b), reaction_energy: Some(de), flags } if flags.points() == 10.0 => {
            format!("barrier = {b}\nreaction_energy = {de}\n")
        }
        other => return Err(format!("{}: reference run did not finish cleanly: {other:?}", spec.id)),
    })
}

fn main() -> Result<(), String> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "benchmarks/toy".into()));
    let script_path = PathBuf::from(args.next().unwrap_or_else(|| "benchmarks/mocks/reference.txt".into()));
    let script = MockScript::parse(&fs::read_to_string(&script_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let env = HarnessEnv::simulated(LlmSource::Mock(Arc::new(script)));

    for spec in specs() {
        let dir = out.join(spec.id);
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let mut input_files = BTreeMap::new();
        for (role, file, text) in &spec.files {
            fs::write(dir.join(file), text).map_err(|e| e.to_string())?;
            input_files.insert(role.to_string(), dir.join(file));
        }
        let placeholder = match spec.task {
            TaskType::SR => Labels::Sr { reference_structure: String::new() },
            TaskType::BS => Labels::Bs { band_gap: 0.0 },
            TaskType::AE => Labels::Ae { adsorption_energy: 0.0 },
            TaskType::TS => Labels::Ts { barrier: 0.0, reaction_energy: 0.0 },
        };
        let entry =
            BenchmarkEntry { id: spec.id.into(), task_type: spec.task, request: spec.request.into(), input_files, labels: placeholder };
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        let record = run_entry(&entry, &env, RunMode::Agent, work.path());
        if record.outcome != EntryOutcome::Completed {
            return Err(format!("{}: {:?}", spec.id, record.outcome));
        }
        let labels = label_text(&spec, &dir, &record.evidence)?;
        fs::write(dir.join(ENTRY_MANIFEST), manifest(&spec, &labels)).map_err(|e| e.to_string())?;
        println!("{}: {}", spec.id, labels.trim().replace('\n', ", "));
    }
    Ok(())
}
