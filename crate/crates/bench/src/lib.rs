//! Deterministic inputs shared by the benchmarks.

use matflow::vasp::{write_incar, write_poscar, IncarDocument, TagValue};
use matflow::CrystalStructure;

/// Conventional diamond Si repeated `n` times along each axis (8 n^3 atoms).
pub fn si_diamond(n: usize) -> CrystalStructure {
    let a = 5.431;
    let basis = [
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
        [0.25, 0.25, 0.25],
        [0.75, 0.75, 0.25],
        [0.75, 0.25, 0.75],
        [0.25, 0.75, 0.75],
    ];
    let mut positions = Vec::with_capacity(8 * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for b in basis {
                    positions.push([(b[0] + i as f64) / n as f64, (b[1] + j as f64) / n as f64, (b[2] + k as f64) / n as f64]);
                }
            }
        }
    }
    let l = a * n as f64;
    let count = positions.len();
    CrystalStructure::from_fractional(
        "Si diamond",
        [[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]],
        vec!["Si".into()],
        vec![count],
        positions,
    )
}

/// fcc Cu, `n` conventional cells per axis, at the toy potential's nearest-neighbour spacing.
pub fn cu_fcc(n: usize) -> CrystalStructure {
    let a = 2f64.powf(1.0 / 6.0) * 2.3 * 2f64.sqrt();
    let mut positions = Vec::with_capacity(4 * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for b in [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]] {
                    // a fixed, position-dependent offset keeps forces non-zero
                    let w = 0.01 * ((i * 7 + j * 3 + k) % 5) as f64;
                    positions.push([(b[0] + i as f64 + w) / n as f64, (b[1] + j as f64) / n as f64, (b[2] + k as f64 - w) / n as f64]);
                }
            }
        }
    }
    let l = a * n as f64;
    let count = positions.len();
    CrystalStructure::from_fractional("Cu fcc", [[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]], vec!["Cu".into()], vec![count], positions)
}

pub fn poscar_text(n: usize) -> String {
    write_poscar(&si_diamond(n))
}

/// An INCAR with `n` tags covering every value kind.
pub fn incar_text(n: usize) -> String {
    let mut d = IncarDocument::new();
    for i in 0..n {
        let v = match i % 5 {
            0 => TagValue::Int(i as i64),
            1 => TagValue::Real(0.5 * i as f64),
            2 => TagValue::Bool(i % 2 == 0),
            3 => TagValue::RealList(vec![1.0; 8]),
            _ => TagValue::Text(format!("value{i}")),
        };
        d.set(&format!("TAG{i}"), v);
    }
    write_incar(&d)
}

/// OUTCAR-shaped text with `steps` ionic steps and one eigenvalue block of `bands` rows.
pub fn outcar_text(steps: usize, bands: usize) -> String {
    let mut s = String::from(" E-fermi :   5.1234     XC(G=0): -11.2\n");
    for i in 0..steps {
        s.push_str(&format!(" FORCES: max atom, RMS     {:.6}    {:.6}\n", 1.0 / (i + 1) as f64, 0.2 / (i + 1) as f64));
        s.push_str(&format!("  free  energy   TOTEN  =     {:.8} eV\n", -100.0 - 0.01 * i as f64));
    }
    s.push_str(" k-point     1 :       0.0000    0.0000    0.0000\n  band No.  band energies     occupation\n");
    for b in 0..bands {
        s.push_str(&format!("  {:5}    {:9.4}    {:.5}\n", b + 1, -10.0 + 0.1 * b as f64, if b < bands / 2 { 1.0 } else { 0.0 }));
    }
    s.push_str("\n reached required accuracy - stopping structural energy minimisation\n");
    s
}
