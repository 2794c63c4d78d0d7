//! Parser fuzzing and round-trip generators.

use matflow::vasp::kpoints::PathCoordinates;
use matflow::vasp::outcar::parse_eigenvalue_blocks;
use matflow::vasp::*;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

/// Fixed seed of the parser fuzz run.
pub const FUZZ_SEED: u64 = 0xF022;
pub const FUZZ_CASES: usize = 10_000;

pub fn random_poscar_structure(rng: &mut ChaCha8Rng) -> CrystalStructure {
    let pool = ["H", "C", "O", "Si", "Cu", "Pd", "Zn", "Ar"];
    let n_species = rng.random_range(1..=3);
    let species: Vec<String> = pool.choose_multiple(rng, n_species).map(|s| s.to_string()).collect();
    let counts: Vec<usize> = (0..n_species).map(|_| rng.random_range(1..=6)).collect();
    let n: usize = counts.iter().sum();
    let lattice = super::random_lattice(rng, 2.0, 15.0);
    let mut s = CrystalStructure::from_fractional(
        format!("random cell {}", rng.random::<u32>()),
        lattice,
        species,
        counts,
        (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect(),
    );
    s.scale = rng.random_range(0.5..2.0);
    if rng.random_bool(0.5) {
        s.coordinate_mode = CoordinateMode::Cartesian;
        s.positions = s.positions.iter().map(|p| p.map(|x| x * 10.0 - 3.0)).collect();
    }
    if rng.random_bool(0.5) {
        s.selective_flags = Some((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect());
    }
    s
}

/// Field-by-field comparison; floats to 1e-12 relative.
pub fn structures_match(a: &CrystalStructure, b: &CrystalStructure) -> Result<(), String> {
    if (&a.comment, &a.species, &a.counts, a.coordinate_mode, &a.selective_flags)
        != (&b.comment, &b.species, &b.counts, b.coordinate_mode, &b.selective_flags)
    {
        return Err("header, species, counts, mode or flags differ".into());
    }
    if (a.scale - b.scale).abs() > 1e-12 * a.scale.abs() {
        return Err(format!("scale {} vs {}", a.scale, b.scale));
    }
    for (ra, rb) in a.lattice.iter().chain(&a.positions).zip(b.lattice.iter().chain(&b.positions)) {
        for k in 0..3 {
            if (ra[k] - rb[k]).abs() > 1e-12 * ra[k].abs().max(1.0) {
                return Err(format!("{} vs {}", ra[k], rb[k]));
            }
        }
    }
    Ok(())
}

pub fn tag_value() -> impl Strategy<Value = TagValue> {
    let real = prop_oneof![-1e6..1e6f64, -1e-3..1e-3f64, (-300i32..300).prop_map(|e| 1.5 * 10f64.powi(e))];
    prop_oneof![
        any::<bool>().prop_map(TagValue::Bool),
        any::<i64>().prop_map(TagValue::Int),
        real.clone().prop_map(TagValue::Real),
        prop::collection::vec(-1000i64..1000, 2..6).prop_map(TagValue::IntList),
        prop::collection::vec(real, 2..6).prop_map(TagValue::RealList),
        "[A-Za-z][A-Za-z_]{0,10}".prop_map(TagValue::Text),
    ]
}

pub fn incar_doc() -> impl Strategy<Value = IncarDocument> {
    prop::collection::btree_map("[A-Z][A-Z0-9_]{0,9}", tag_value(), 0..12).prop_map(|m| {
        let mut d = IncarDocument::new();
        for (k, v) in m {
            d.set(&k, v);
        }
        d
    })
}

pub fn kpoints_spec() -> impl Strategy<Value = KpointsSpec> {
    let mesh = (any::<bool>(), [1u32..16, 1u32..16, 1u32..16], any::<bool>()).prop_map(|(mp, mesh, half)| KpointsSpec {
        comment: "mesh".into(),
        mode: if mp { KpointsMode::MonkhorstPack } else { KpointsMode::GammaCentered },
        mesh,
        shift: [if half { 0.5 } else { 0.0 }, 0.0, 0.0],
        line_path: None,
    });
    let point = ([-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64], prop::sample::select(vec!["G", "X", "L", "K", "W", "U", ""]))
        .prop_map(|(coords, label)| LabeledKpoint { coords, label: label.to_string() });
    let line = (2usize..60, any::<bool>(), (1usize..5).prop_flat_map(move |n| prop::collection::vec(point.clone(), 2 * n))).prop_map(
        |(divisions, cart, points)| KpointsSpec {
            comment: "path".into(),
            mode: KpointsMode::ExplicitLine,
            mesh: [1, 1, 1],
            shift: [0.0; 3],
            line_path: Some(LinePath {
                divisions,
                coordinates: if cart { PathCoordinates::Cartesian } else { PathCoordinates::Reciprocal },
                points,
            }),
        },
    );
    prop_oneof![mesh, line]
}

pub const SEEDS: &[&str] = &[
    "cubic Si\n5.43\n0.0 0.5 0.5\n0.5 0.0 0.5\n0.5 0.5 0.0\nSi\n2\nSelective dynamics\nDirect\n0.00 0.00 0.00 T T F\n0.25 0.25 0.25 F F F\n",
    "SYSTEM = test\nENCUT = 450\nIBRION = 2 ! cg\nMAGMOM = 4*1.0 2*0\nLHFCALC = .TRUE.\nKPOINT_BSE = 2 2 1\n",
    "bulk\n0\nGamma\n8 8 8\n0 0 0\n",
    "path\n40\nLine-mode\nReciprocal\n0 0 0 ! G\n0.5 0 0.5 ! X\n\n0.5 0 0.5 ! X\n0.5 0.5 0.5 ! L\n",
    "  PAW_PBE Pd 04Jan2005\n stuff\n End of Dataset\n  PAW_PBE C 08Apr2002\n End of Dataset\n",
    "  free  energy   TOTEN  =     -10.10000000 eV\n E-fermi :   1.0\n k-point     1 :  0 0 0\n  band No.  band energies     occupation\n      1      -1.2000      1.00000\n\n reached required accuracy - stopping structural energy minimisation\n",
];

pub const TOKENS: &[&str] = &[
    "nan",
    "inf",
    "-inf",
    "1e999",
    "-0",
    "0",
    "",
    "*",
    "3*",
    "0*1",
    "T",
    "F",
    "Selective",
    "Cartesian",
    "Direct",
    "!",
    "=",
    "#",
    "k-point",
    "Line-mode",
    "Monkhorst",
    "99999999999999999999",
    "-1",
    "1.5.5",
    "1d5",
    "\u{00e9}",
    "\t",
    "End of Dataset",
];

pub fn mutate(seed: &str, rng: &mut ChaCha8Rng) -> String {
    let mut lines: Vec<String> = seed.lines().map(str::to_string).collect();
    for _ in 0..rng.random_range(1..5) {
        if lines.is_empty() {
            lines.push(String::new());
        }
        let i = rng.random_range(0..lines.len());
        match rng.random_range(0..6) {
            0 => {
                lines.remove(i);
            }
            1 => {
                let dup = lines[i].clone();
                lines.insert(i, dup);
            }
            2 => {
                let mut toks: Vec<String> = lines[i].split_whitespace().map(str::to_string).collect();
                let t = TOKENS.choose(rng).unwrap().to_string();
                if toks.is_empty() {
                    toks.push(t);
                } else {
                    let j = rng.random_range(0..toks.len());
                    toks[j] = t;
                }
                lines[i] = toks.join(" ");
            }
            3 => {
                let cut = rng.random_range(0..=lines[i].len());
                let cut = (0..=cut).rev().find(|&c| lines[i].is_char_boundary(c)).unwrap_or(0);
                lines[i].truncate(cut);
            }
            4 => lines.insert(i, TOKENS.choose(rng).unwrap().to_string()),
            _ => lines.truncate(i),
        }
    }
    lines.join("\n")
}

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let mut bytes = vec![0u8; rng.random_range(0..300)];
    rng.fill_bytes(&mut bytes);
    // bias towards printable input so line structure appears
    for b in bytes.iter_mut() {
        if rng.random_bool(0.8) {
            *b = b" 0123456789.-+eE\nTFabc=!*"[(*b as usize) % 24];
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

pub fn exercise_all_parsers(text: &str) {
    let _ = parse_poscar(text);
    let _ = parse_incar(text);
    let _ = parse_kpoints(text);
    let _ = parse_potcar(text);
    let _ = parse_eigenvalue_blocks(text);
    if let Ok(s) = extract_outcar_summary(text, &ExtractionPattern::summary_set()) {
        let _ = band_gap_from_eigenvalues(&s);
    }
    if let Ok(s) = parse_poscar(text) {
        let _ = s.validate();
        let _ = write_poscar(&s);
    }
    if let Ok(d) = parse_incar(text) {
        let _ = parse_incar(&write_incar(&d));
    }
}

/// Input `case` of the fuzz run: even cases mutate a valid seed file, odd ones are noise.
pub fn fuzz_case(case: usize, rng: &mut ChaCha8Rng) -> String {
    if case.is_multiple_of(2) {
        mutate(SEEDS[case / 2 % SEEDS.len()], rng)
    } else {
        random_text(rng)
    }
}
